"""Batch report generation: figures plus a machine-readable summary.

``make_figures`` consumes a directory of laboratory artifacts (the CSVs
and the manifest that collected runs always carry), renders the
requested figures, and writes two summaries: ``summary.csv`` holding
``study,metric,statistic,value`` records — first the replayed study
summaries (byte-identical to the producer's), then the per-figure
statistics — and ``summary.txt``, the same records as an aligned text
table. Inputs are read-only; everything lands in the output directory.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .figures import (
    figure_budgets,
    figure_defect,
    figure_energy,
    figure_epsilon,
    figure_refinement,
)
from .replay import BUDGET_COLUMNS, replay_directory
from .tables import read_manifest, read_table

__version__ = "0.1.0"

KNOWN_FIGURES = ("energy", "budgets", "defect", "refinement", "epsilon")

#: figure kind -> CSV files that can feed it, in preference order
_FIGURE_SOURCES = {
    "energy": ("diagnostics.csv",),
    "budgets": ("sweep_eps.csv", "diagnostics.csv"),
    "defect": ("sweep_trunc.csv",),
    "refinement": ("refine.csv",),
    "epsilon": ("sweep_eps.csv",),
}

#: budget columns when the budgets figure falls back to raw diagnostics
_DIAGNOSTIC_BUDGETS = ("fisher", "hessian_logv", "cross", "grad_v_sq", "feps_gradv")


@dataclass(frozen=True)
class ReportSpec:
    """What to report on: an input directory, a figure list, an output
    directory.

    ``figures`` may be empty, meaning "every figure whose source CSV is
    present". Explicitly requested figures are mandatory: a missing
    source file is an error, not a skip. The input directory must carry
    a ``manifest.json``; reporting refuses data without provenance.
    """

    input_dir: Path
    output_dir: Path
    figures: tuple = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_dir", Path(self.input_dir))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        object.__setattr__(self, "figures", tuple(self.figures))
        if not self.input_dir.is_dir():
            raise ValueError(f"input directory {self.input_dir} does not exist")
        if not (self.input_dir / "manifest.json").is_file():
            raise ValueError(
                f"no manifest.json in {self.input_dir}: refusing to report on "
                "data without provenance"
            )
        unknown = [f for f in self.figures if f not in KNOWN_FIGURES]
        if unknown:
            raise ValueError(
                f"unknown figures {unknown}; known: {list(KNOWN_FIGURES)}"
            )
        if self.output_dir.resolve() == self.input_dir.resolve():
            raise ValueError(
                "output directory must differ from the input directory; "
                "inputs are read-only"
            )


@dataclass(frozen=True)
class ReportResult:
    """Rendered figure paths plus both summary files and their records."""

    figures: tuple
    summary_csv: Path
    summary_table: Path
    lines: tuple


def _source_for(kind: str, input_dir: Path):
    for name in _FIGURE_SOURCES[kind]:
        path = input_dir / name
        if path.is_file():
            return path
    return None


def _render(kind: str, source: Path, out_dir: Path):
    table = read_table(source)
    if kind == "energy":
        return figure_energy(table, out_dir)
    if kind == "budgets":
        if source.name == "sweep_eps.csv":
            return figure_budgets(table, out_dir, BUDGET_COLUMNS)
        return figure_budgets(table, out_dir, _DIAGNOSTIC_BUDGETS)
    if kind == "defect":
        return figure_defect(table, out_dir)
    if kind == "refinement":
        return figure_refinement(table, out_dir)
    return figure_epsilon(table, out_dir)


def _text_table(lines) -> str:
    records = [line.split(",", 3) for line in lines]
    headers = ("study", "metric", "statistic", "value")
    widths = [
        max(len(headers[j]), max((len(r[j]) for r in records), default=0))
        for j in range(4)
    ]
    rendered = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for r in records:
        rendered.append("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
    return "\n".join(rendered) + "\n"


def make_figures(spec: ReportSpec) -> ReportResult:
    """Render the requested figures and write both summaries.

    Returns the figure paths, the two summary files, and the summary
    records. Never modifies anything under ``spec.input_dir``.
    """
    read_manifest(spec.input_dir)  # provenance gate (directory may have changed)
    replayed = replay_directory(spec.input_dir)

    requested = spec.figures
    if not requested:
        requested = tuple(
            kind for kind in KNOWN_FIGURES if _source_for(kind, spec.input_dir)
        )
    spec.output_dir.mkdir(parents=True, exist_ok=True)

    figure_paths = []
    stat_lines: list = []
    for kind in requested:
        source = _source_for(kind, spec.input_dir)
        if source is None:
            raise FileNotFoundError(
                f"figure {kind!r} needs one of {list(_FIGURE_SOURCES[kind])}; "
                f"none found in {spec.input_dir}"
            )
        path, stats = _render(kind, source, spec.output_dir)
        figure_paths.append(path)
        stat_lines.extend(stats)

    lines = [line for stem in sorted(replayed) for line in replayed[stem]]
    lines.extend(stat_lines)

    summary_csv = spec.output_dir / "summary.csv"
    summary_csv.write_text("\n".join(lines) + "\n" if lines else "")
    summary_table = spec.output_dir / "summary.txt"
    summary_table.write_text(_text_table(lines) if lines else "")

    return ReportResult(
        figures=tuple(figure_paths),
        summary_csv=summary_csv,
        summary_table=summary_table,
        lines=tuple(lines),
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="chemotaxis-report",
        description="Render figures and a machine-readable summary from "
        "laboratory CSV artifacts.",
    )
    parser.add_argument("input_dir", help="directory with manifest.json and CSVs")
    parser.add_argument("output_dir", help="where figures and summaries go")
    parser.add_argument(
        "--figures",
        nargs="+",
        metavar="KIND",
        help=f"subset of {', '.join(KNOWN_FIGURES)} (default: all available)",
    )
    args = parser.parse_args(argv)
    try:
        result = make_figures(
            ReportSpec(
                input_dir=args.input_dir,
                output_dir=args.output_dir,
                figures=tuple(args.figures or ()),
            )
        )
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for line in result.lines:
        print(line)
    print(f"report: {len(result.figures)} figures in {result.summary_csv.parent}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
