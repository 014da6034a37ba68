"""Command-line surface, configuration parsing, and run persistence.

Configuration format
--------------------
Flat, line-oriented ``key = value`` pairs under ``[section]`` headers.  Blank
lines and lines starting with ``#`` are ignored; values run to the end of the
line (no inline comments).  List values are whitespace-separated.  Parsing
reports *every* violation at once, each tagged with its line; a duplicate key
cites both definitions.  Sections and keys:

* ``[grid]`` — ``dim`` (1..4), ``cells`` (one entry per axis, each >= 3; a
  single entry broadcasts), ``lengths`` (positive, same count as ``cells``).
* ``[solver]`` — ``dt``, ``t_end`` (``t_end`` an integer multiple of ``dt``),
  optional ``scheme``, ``cfl_safety``, ``clamp_policy``, ``blowup_factor``,
  ``cg_rtol``, ``cg_max_iter``.
* ``[regularization]`` — ``epsilon`` strictly inside (0, 1); optional
  ``trunc_levels`` (strictly increasing positive reals; defaults to the
  dyadic ladder 2..1024).  Sweep ladders may still include 1.0 — only the
  run's primary ``epsilon`` is kept strictly interior.
* ``[scenario]`` — ``kind`` plus the scenario shape parameters and ``seed``.
* ``[output]`` — optional ``directory``, ``snapshot_every``, ``record_every``.
* ``[sweep]`` — optional ``epsilons`` (for ``sweep-eps``) and ``cells``
  (for ``refine``).

Snapshot format
---------------
Binary, little-endian.  Header: magic ``RCLB1`` (5 bytes), format version
byte (currently 1), dimension byte, field-count byte (2: ``u`` then ``v``),
one uint32 cell count per axis, one float64 time.  Payload: the fields in
declared order as float64, C (row-major) order.  The header-declared sizes
must match the payload length exactly and round-trips are bit-exact.

CSV output
----------
All floating values are written with full round-trip precision (``repr``),
so downstream order-of-convergence fits are not quantized.  The diagnostics
column order is fixed: step,time,mass_u,min_u,max_v,entropy,grad_sqrt_v,
energy,fisher,hessian_logv,cross,u_logu_abs,grad_v_sq,feps_gradv,u_pow.

Subcommands and exit codes
--------------------------
``run``, ``sweep-eps``, ``sweep-trunc``, ``refine``, ``verify-truncation``,
``audit``, ``report-data``.  Exit 0 on pass, 1 on an assertion failure
(violated invariant, failed verdict, tampered artifact), 2 on usage or
configuration errors.  Every producing subcommand writes a ``manifest.json``
(config content hash, package/numpy/python versions, wall-clock timings)
into its output directory.  ``audit`` refuses to check a run whose manifest
hash does not match the supplied config.  Relative output paths resolve
under the environment variable ``CHEMOTAXIS_LAB_OUT`` (default: the current
directory); when no directory is configured, a run writes into
``<command>-<first 12 hex of the config hash>``, so concurrent runs with
different configs land in disjoint directories.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import shutil
import struct
import sys
import time as _time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .diagnostics import CSV_COLUMNS, DiagnosticsRecord, compute_record
from .dynamics import (
    DiagnosticsSinks,
    GuardTrace,
    SolverConfig,
    TrajectoryStore,
    run as run_trajectory,
)
from .experiments import (
    DEFAULT_TRUNCATION_LEVELS,
    ScenarioSpec,
    StudyPlan,
    epsilon_sweep,
    make_initial_data,
    refinement_study,
    truncation_sweep,
)
from .grid import TensorGrid
from .regularization import (
    CutoffProfile,
    Regularization,
    TruncationFamily,
    verify_truncation_axioms,
)
from .weakform import (
    TemporalBump,
    TestFunction,
    defect_measures,
    truncated_identity_residual,
    v_weak_residual,
)

SNAPSHOT_MAGIC = b"RCLB1"
SNAPSHOT_VERSION = 1
OUTPUT_ROOT_ENV = "CHEMOTAXIS_LAB_OUT"

MASS_RTOL = 1e-12
MAX_PRINCIPLE_SLACK = 1e-10


class ConfigError(ValueError):
    """All configuration violations found in one parse, not just the first."""

    def __init__(self, violations: Sequence[str]):
        self.violations = tuple(violations)
        bullet = "\n  - ".join(self.violations)
        super().__init__(
            f"{len(self.violations)} configuration violation(s):\n  - {bullet}"
        )


class SnapshotFormatError(ValueError):
    """A snapshot file does not follow the documented binary layout."""


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Validated contents of one configuration file."""

    grid: TensorGrid
    solver: SolverConfig
    epsilon: float
    scenario: ScenarioSpec
    seed: int
    out_dir: str | None
    snapshot_every: int
    record_every: int
    trunc_levels: tuple
    eps_ladder: tuple
    refine_cells: tuple
    text: str
    config_hash: str


_MISSING = object()

_SCHEMA: dict[str, dict[str, str]] = {
    "grid": {"dim": "int", "cells": "int-list", "lengths": "float-list"},
    "solver": {
        "dt": "float",
        "t_end": "float",
        "scheme": "str",
        "cfl_safety": "float",
        "clamp_policy": "str",
        "blowup_factor": "float",
        "cg_rtol": "float",
        "cg_max_iter": "int",
    },
    "regularization": {"epsilon": "float", "trunc_levels": "float-list"},
    "scenario": {
        "kind": "str",
        "u_floor": "float",
        "u_amplitude": "float",
        "u_width": "float",
        "u_center": "float-list",
        "v_base": "float",
        "v_amplitude": "float",
        "cutoff": "int",
        "seed": "int",
    },
    "output": {"directory": "str", "snapshot_every": "int", "record_every": "int"},
    "sweep": {"epsilons": "float-list", "cells": "int-list"},
}


def _parse_scalar(raw: str, kind: str):
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "str":
        return raw
    if kind == "int-list":
        return [int(tok) for tok in raw.split()]
    if kind == "float-list":
        return [float(tok) for tok in raw.split()]
    raise AssertionError(f"unknown schema kind {kind}")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration, reporting all violations at once."""
    entries: dict[str, tuple[int, str]] = {}
    violations: list[str] = []
    section: str | None = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                violations.append(
                    f"line {lineno}, column 1: malformed section header {line!r}"
                )
                section = None
                continue
            name = line[1:-1].strip()
            if name not in _SCHEMA:
                violations.append(f"line {lineno}, column 1: unknown section [{name}]")
                section = "!" + name
            else:
                section = name
            continue
        if "=" not in line:
            violations.append(
                f"line {lineno}, column 1: expected 'key = value', got {line!r}"
            )
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        column = raw.index("=") + 2
        if section is None:
            violations.append(
                f"line {lineno}, column 1: key {key!r} appears before any [section] header"
            )
            continue
        if section.startswith("!"):
            continue  # the unknown section was already reported once
        if key not in _SCHEMA[section]:
            violations.append(f"line {lineno}: unknown key '{section}.{key}'")
            continue
        full = f"{section}.{key}"
        if full in entries:
            violations.append(
                f"line {lineno}: duplicate key '{full}' "
                f"(first defined at line {entries[full][0]})"
            )
            continue
        if not value:
            violations.append(f"line {lineno}, column {column}: empty value for '{full}'")
            continue
        entries[full] = (lineno, value)

    def typed(full: str, kind: str, default=_MISSING):
        if full not in entries:
            if default is _MISSING:
                violations.append(f"missing required key '{full}'")
                return None
            return default
        lineno, raw_value = entries[full]
        try:
            return _parse_scalar(raw_value, kind)
        except ValueError:
            violations.append(
                f"line {lineno}: value for '{full}' is not a valid {kind}: {raw_value!r}"
            )
            return None

    # --- grid -------------------------------------------------------------
    dim = typed("grid.dim", "int")
    cells = typed("grid.cells", "int-list")
    lengths = typed("grid.lengths", "float-list")
    grid_ok = dim is not None and cells is not None and lengths is not None
    if dim is not None and not 1 <= dim <= 4:
        violations.append(f"grid.dim must lie in 1..4, got {dim}")
        grid_ok = False
    if cells is not None and any(c < 3 for c in cells):
        violations.append(f"grid.cells entries must be >= 3, got {cells}")
        grid_ok = False
    if lengths is not None and any(not np.isfinite(L) or L <= 0.0 for L in lengths):
        violations.append(f"grid.lengths entries must be positive, got {lengths}")
        grid_ok = False
    if grid_ok:
        if len(cells) == 1 and dim > 1:
            cells = cells * dim
        if len(lengths) == 1 and dim > 1:
            lengths = lengths * dim
        if len(cells) != dim:
            violations.append(
                f"grid.cells needs {dim} entries (or one to broadcast), got {len(cells)}"
            )
            grid_ok = False
        if len(lengths) != dim:
            violations.append(
                f"grid.lengths needs {dim} entries (or one to broadcast), got {len(lengths)}"
            )
            grid_ok = False
    grid = None
    if grid_ok:
        try:
            grid = TensorGrid(cells=tuple(cells), lengths=tuple(lengths))
        except ValueError as exc:
            violations.append(f"grid: {exc}")

    # --- solver -------------------------------------------------------------
    dt = typed("solver.dt", "float")
    t_end = typed("solver.t_end", "float")
    scheme = typed("solver.scheme", "str", default="imex")
    cfl_safety = typed("solver.cfl_safety", "float", default=0.9)
    clamp_policy = typed("solver.clamp_policy", "str", default="reject")
    blowup_factor = typed("solver.blowup_factor", "float", default=1e6)
    cg_rtol = typed("solver.cg_rtol", "float", default=1e-13)
    cg_max_iter = typed("solver.cg_max_iter", "int", default=2000)
    solver = None
    if None not in (dt, t_end, scheme, cfl_safety, clamp_policy, blowup_factor, cg_rtol, cg_max_iter):
        try:
            solver = SolverConfig(
                dt=dt,
                t_end=t_end,
                scheme=scheme,
                cfl_safety=cfl_safety,
                clamp_policy=clamp_policy,
                blowup_factor=blowup_factor,
                cg_rtol=cg_rtol,
                cg_max_iter=cg_max_iter,
            )
        except ValueError as exc:
            violations.append(f"solver: {exc}")

    # --- regularization ------------------------------------------------------
    epsilon = typed("regularization.epsilon", "float")
    if epsilon is not None and not 0.0 < epsilon < 1.0:
        violations.append(
            f"regularization.epsilon must lie strictly inside (0, 1), got {epsilon}"
        )
    raw_levels = typed("regularization.trunc_levels", "float-list", default=None)
    trunc_levels = DEFAULT_TRUNCATION_LEVELS
    if raw_levels is not None:
        if (
            not raw_levels
            or any(not np.isfinite(E) or E <= 0.0 for E in raw_levels)
            or any(b <= a for a, b in zip(raw_levels, raw_levels[1:]))
        ):
            violations.append(
                "regularization.trunc_levels must be strictly increasing positive values"
            )
        else:
            trunc_levels = tuple(raw_levels)

    # --- scenario -------------------------------------------------------------
    kind = typed("scenario.kind", "str")
    seed = typed("scenario.seed", "int", default=0)
    scenario_kwargs = {}
    for name in ("u_floor", "u_amplitude", "u_width", "v_base", "v_amplitude"):
        value = typed(f"scenario.{name}", "float", default=None)
        if value is not None:
            scenario_kwargs[name] = value
    cutoff = typed("scenario.cutoff", "int", default=None)
    if cutoff is not None:
        scenario_kwargs["cutoff"] = cutoff
    u_center = typed("scenario.u_center", "float-list", default=None)
    if u_center is not None:
        if dim is not None and len(u_center) != dim:
            violations.append(
                f"scenario.u_center needs {dim} coordinates, got {len(u_center)}"
            )
        else:
            scenario_kwargs["u_center"] = tuple(u_center)
    scenario = None
    if kind is not None:
        try:
            scenario = ScenarioSpec(kind=kind, **scenario_kwargs)
        except ValueError as exc:
            violations.append(f"scenario: {exc}")

    # --- output / sweep -------------------------------------------------------
    out_dir = typed("output.directory", "str", default=None)
    snap_raw = typed("output.snapshot_every", "int", default=None)
    rec_raw = typed("output.record_every", "int", default=None)
    if snap_raw is not None and snap_raw < 1:
        violations.append(f"output.snapshot_every must be >= 1, got {snap_raw}")
    if rec_raw is not None and rec_raw < 0:
        violations.append(f"output.record_every must be >= 0, got {rec_raw}")

    eps_raw = typed("sweep.epsilons", "float-list", default=None)
    eps_ladder: tuple = ()
    if eps_raw is not None:
        if any(not np.isfinite(e) or not 0.0 < e <= 1.0 for e in eps_raw):
            violations.append("sweep.epsilons entries must lie in (0, 1]")
        else:
            eps_ladder = tuple(eps_raw)
    cells_raw = typed("sweep.cells", "int-list", default=None)
    refine_cells: tuple = ()
    if cells_raw is not None:
        if any(c < 3 for c in cells_raw) or any(
            b <= a for a, b in zip(cells_raw, cells_raw[1:])
        ):
            violations.append(
                "sweep.cells must be strictly increasing cell counts, each >= 3"
            )
        else:
            refine_cells = tuple(cells_raw)

    if violations:
        raise ConfigError(violations)

    assert grid is not None and solver is not None and scenario is not None
    snapshot_every = snap_raw if snap_raw is not None else max(1, solver.n_steps // 16)
    record_every = rec_raw if rec_raw is not None else snapshot_every
    return RunConfig(
        grid=grid,
        solver=solver,
        epsilon=float(epsilon),
        scenario=scenario,
        seed=int(seed),
        out_dir=out_dir,
        snapshot_every=snapshot_every,
        record_every=record_every,
        trunc_levels=trunc_levels,
        eps_ladder=eps_ladder,
        refine_cells=refine_cells,
        text=text,
        config_hash=hashlib.sha256(text.encode("utf-8")).hexdigest(),
    )


# ---------------------------------------------------------------------------
# binary snapshots
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Snapshot:
    """One stored time slice: both fields plus the simulation time."""

    u: np.ndarray
    v: np.ndarray
    time: float


def write_snapshot(path, u: np.ndarray, v: np.ndarray, time: float) -> None:
    """Write one (u, v, time) slice in the documented binary layout."""
    u = np.ascontiguousarray(u, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"field shape mismatch: u has {u.shape}, v has {v.shape}")
    if not 1 <= u.ndim <= 4:
        raise ValueError(f"snapshot fields must be 1- to 4-dimensional, got {u.ndim}")
    header = SNAPSHOT_MAGIC + struct.pack("<BBB", SNAPSHOT_VERSION, u.ndim, 2)
    header += struct.pack(f"<{u.ndim}I", *u.shape)
    header += struct.pack("<d", float(time))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(u.tobytes("C"))
        fh.write(v.tobytes("C"))


def read_snapshot(path) -> Snapshot:
    """Read a snapshot, validating magic, version, and exact payload size."""
    blob = Path(path).read_bytes()
    if len(blob) < 8:
        raise SnapshotFormatError(f"{path}: truncated header ({len(blob)} bytes)")
    if blob[:5] != SNAPSHOT_MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {blob[:5]!r}")
    version, dim, nfields = struct.unpack_from("<BBB", blob, 5)
    if version != SNAPSHOT_VERSION:
        raise SnapshotFormatError(f"{path}: unsupported format version {version}")
    if not 1 <= dim <= 4:
        raise SnapshotFormatError(f"{path}: invalid dimension {dim}")
    if nfields != 2:
        raise SnapshotFormatError(f"{path}: expected 2 fields, header declares {nfields}")
    head = 8 + 4 * dim + 8
    if len(blob) < head:
        raise SnapshotFormatError(f"{path}: truncated header ({len(blob)} bytes)")
    cells = struct.unpack_from(f"<{dim}I", blob, 8)
    if any(c < 1 for c in cells):
        raise SnapshotFormatError(f"{path}: invalid cell counts {cells}")
    (snap_time,) = struct.unpack_from("<d", blob, 8 + 4 * dim)
    count = 1
    for c in cells:
        count *= c
    expected = head + nfields * count * 8
    if len(blob) != expected:
        raise SnapshotFormatError(
            f"{path}: payload size mismatch (header declares {expected} bytes, "
            f"file has {len(blob)})"
        )
    data = np.frombuffer(blob, dtype="<f8", offset=head)
    u = data[:count].reshape(cells).copy()
    v = data[count:].reshape(cells).copy()
    return Snapshot(u=u, v=v, time=float(snap_time))


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x))


def write_diagnostics_csv(path, records: Sequence[DiagnosticsRecord]) -> None:
    """One row per record in the fixed column order, full float precision."""
    lines = [",".join(CSV_COLUMNS)]
    for rec in records:
        row = [str(int(rec.step))]
        row.extend(_fmt(getattr(rec, name)) for name in CSV_COLUMNS[1:])
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_diagnostics_csv(path) -> list[DiagnosticsRecord]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln]
    header = ",".join(CSV_COLUMNS)
    if not lines or lines[0] != header:
        raise ValueError(f"{path}: unexpected diagnostics header")
    records = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(CSV_COLUMNS):
            raise ValueError(f"{path}: row has {len(parts)} fields, expected {len(CSV_COLUMNS)}")
        kwargs = {"step": int(parts[0])}
        for name, token in zip(CSV_COLUMNS[1:], parts[1:]):
            kwargs[name] = float(token)
        records.append(DiagnosticsRecord(**kwargs))
    return records


def write_verdict_csv(path, verdict) -> None:
    """Write a study verdict's metric table at full float precision."""
    lines = [",".join(verdict.columns)]
    for row in verdict.rows:
        lines.append(",".join(_fmt(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_summary_lines(path, lines: Sequence[str]) -> None:
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------


def write_manifest(
    out_dir,
    *,
    config_text: str,
    command: str,
    timings: Mapping[str, float],
    extra: Mapping[str, object] | None = None,
) -> Path:
    """Write ``manifest.json`` recording provenance for everything in the dir."""
    data: dict = {
        "config_sha256": hashlib.sha256(config_text.encode("utf-8")).hexdigest(),
        "command": command,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "timings": {k: float(v) for k, v in dict(timings).items()},
    }
    if extra:
        data.update(extra)
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(path) -> dict:
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
    return json.loads(p.read_text())


# ---------------------------------------------------------------------------
# shared command plumbing
# ---------------------------------------------------------------------------


def _load_config(path_str: str) -> tuple[str, RunConfig]:
    path = Path(path_str)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    text = path.read_text()
    return text, parse_config(text)


def _resolve_out_dir(explicit: str | None, cfg: RunConfig, command: str) -> Path:
    base = explicit or cfg.out_dir or f"{command}-{cfg.config_hash[:12]}"
    path = Path(base)
    if not path.is_absolute():
        path = Path(os.environ.get(OUTPUT_ROOT_ENV, ".")) / path
    path.mkdir(parents=True, exist_ok=True)
    return path


def _print_checks(prefix: str, checks: list[tuple[str, bool, str]]) -> bool:
    passed = True
    for name, ok, detail in checks:
        passed &= ok
        print(f"{prefix}: {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    return passed


def _trajectory_checks(guard: GuardTrace) -> list[tuple[str, bool, str]]:
    """Mass conservation, signal maximum principle, and density positivity."""
    mass0 = float(guard.mass_u[0])
    drift = float(np.max(np.abs(guard.mass_u - mass0))) / abs(mass0)
    max_v0 = float(guard.max_v[0])
    worst_max_v = float(np.max(guard.max_v))
    min_v = float(np.min(guard.min_v))
    min_u = float(np.min(guard.min_u))
    return [
        (
            "mass conservation",
            drift <= MASS_RTOL,
            f"max relative drift {drift:.3e} (tolerance {MASS_RTOL:.0e})",
        ),
        (
            "signal maximum principle",
            worst_max_v <= max_v0 + MAX_PRINCIPLE_SLACK and min_v >= 0.0,
            f"max v {worst_max_v!r} vs initial {max_v0!r}, min v {min_v!r}",
        ),
        ("density positivity", min_u > 0.0, f"min u {min_u!r}"),
    ]


def _guard_from_snapshots(steps, snaps, cell_volume: float) -> GuardTrace:
    rows = np.asarray(
        [
            (
                k,
                s.time,
                float(np.sum(s.u)) * cell_volume,
                float(np.min(s.u)),
                float(np.max(s.u)),
                float(np.min(s.v)),
                float(np.max(s.v)),
            )
            for k, s in zip(steps, snaps)
        ]
    )
    return GuardTrace(
        step=rows[:, 0].astype(np.int64),
        time=rows[:, 1].copy(),
        mass_u=rows[:, 2].copy(),
        min_u=rows[:, 3].copy(),
        max_u=rows[:, 4].copy(),
        min_v=rows[:, 5].copy(),
        max_v=rows[:, 6].copy(),
    )


def _study_plan(cfg: RunConfig, ladder: tuple) -> StudyPlan:
    return StudyPlan(
        scenario=cfg.scenario,
        grid=cfg.grid,
        solver=cfg.solver,
        epsilon=cfg.epsilon,
        ladder=ladder,
        trunc_levels=cfg.trunc_levels,
        seed=cfg.seed,
    )


def _emit_verdict(out: Path, stem: str, verdict, text: str, command: str, wall: float) -> int:
    write_verdict_csv(out / f"{stem}.csv", verdict)
    lines = verdict.summary_lines()
    write_summary_lines(out / f"{stem}_summary.csv", lines)
    # scalar context a reader needs to recompute the flags from the table
    # alone (the defect-mass checks compare levels against the solution range)
    extra: dict = {"passed": verdict.passed}
    if math.isfinite(verdict.max_u):
        extra["max_u"] = verdict.max_u
    if verdict.notes:
        extra["notes"] = list(verdict.notes)
    write_manifest(
        out,
        config_text=text,
        command=command,
        timings={"wall_seconds": wall},
        extra=extra,
    )
    for line in lines:
        print(line)
    print(f"{command}: outputs in {out}")
    return 0 if verdict.passed else 1


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_run(args) -> int:
    text, cfg = _load_config(args.config)
    out = _resolve_out_dir(args.out, cfg, "run")
    started = _time.perf_counter()
    init = make_initial_data(cfg.scenario, cfg.grid, cfg.seed)
    sinks = DiagnosticsSinks(
        snapshot_every=cfg.snapshot_every,
        record_every=cfg.record_every,
        record_fn=compute_record,
    )
    store = run_trajectory(init, Regularization(cfg.epsilon), cfg.solver, sinks)
    wall = _time.perf_counter() - started

    (out / "config.cfg").write_text(text)
    for step_no, snap_time, u, v in zip(
        store.snap_steps, store.times, store.u_snaps, store.v_snaps
    ):
        write_snapshot(out / f"snap_{int(step_no):08d}.rclb", u, v, time=float(snap_time))
    write_diagnostics_csv(out / "diagnostics.csv", store.records)

    checks = _trajectory_checks(store.guard)
    passed = all(ok for _, ok, _ in checks)
    write_manifest(
        out,
        config_text=text,
        command="run",
        timings={"wall_seconds": wall},
        extra={"passed": passed, "n_steps": store.n_steps, "final_time": store.final_time},
    )
    _print_checks("run", checks)
    print(f"run: outputs in {out}")
    return 0 if passed else 1


def _cmd_sweep_eps(args) -> int:
    text, cfg = _load_config(args.config)
    if len(cfg.eps_ladder) < 2:
        print(
            "error: sweep-eps needs [sweep] epsilons with at least two "
            "strictly decreasing values",
            file=sys.stderr,
        )
        return 2
    out = _resolve_out_dir(args.out, cfg, "sweep-eps")
    started = _time.perf_counter()
    verdict = replace(epsilon_sweep(_study_plan(cfg, cfg.eps_ladder)), study="sweep-eps")
    wall = _time.perf_counter() - started
    return _emit_verdict(out, "sweep_eps", verdict, text, "sweep-eps", wall)


def _cmd_sweep_trunc(args) -> int:
    text, cfg = _load_config(args.config)
    out = _resolve_out_dir(args.out, cfg, "sweep-trunc")
    started = _time.perf_counter()
    verdict = replace(
        truncation_sweep(_study_plan(cfg, (cfg.epsilon,))), study="sweep-trunc"
    )
    wall = _time.perf_counter() - started
    return _emit_verdict(out, "sweep_trunc", verdict, text, "sweep-trunc", wall)


def _cmd_refine(args) -> int:
    text, cfg = _load_config(args.config)
    if len(cfg.refine_cells) < 2:
        print(
            "error: refine needs [sweep] cells with at least two increasing counts",
            file=sys.stderr,
        )
        return 2
    n0 = cfg.refine_cells[0]
    ladder = tuple(
        (n, cfg.solver.dt * (n0 / n) ** 2) for n in cfg.refine_cells
    )
    out = _resolve_out_dir(args.out, cfg, "refine")
    started = _time.perf_counter()
    verdict = replace(refinement_study(_study_plan(cfg, ladder)), study="refine")
    wall = _time.perf_counter() - started
    return _emit_verdict(out, "refine", verdict, text, "refine", wall)


def _cmd_verify_truncation(args) -> int:
    text, cfg = _load_config(args.config)
    out = _resolve_out_dir(args.out, cfg, "verify-truncation")
    started = _time.perf_counter()
    family = TruncationFamily(CutoffProfile.smooth_bump(), cfg.trunc_levels)
    top = cfg.trunc_levels[-1]
    samples = np.unique(
        np.concatenate(
            [
                np.linspace(0.0, 3.0 * top, 4001),
                np.logspace(-3.0, np.log10(3.0 * top), 1001),
                [0.0],
            ]
        )
    )
    report = verify_truncation_axioms(family, samples, k_values=(1.0, 10.0, 100.0))
    wall = _time.perf_counter() - started
    table = report.table()
    print(table)
    (out / "truncation_axioms.txt").write_text(table + "\n")
    write_manifest(
        out,
        config_text=text,
        command="verify-truncation",
        timings={"wall_seconds": wall},
        extra={"passed": report.passed, "k1": report.k1, "k2": report.k2},
    )
    return 0 if report.passed else 1


def _cmd_audit(args) -> int:
    run_path = Path(args.run_dir)
    manifest_path = run_path / "manifest.json"
    if not manifest_path.is_file():
        print(f"error: {run_path} has no manifest.json", file=sys.stderr)
        return 2
    manifest = read_manifest(manifest_path)

    config_path = Path(args.config) if args.config else run_path / "config.cfg"
    if not config_path.is_file():
        print(f"error: config file not found: {config_path}", file=sys.stderr)
        return 2
    text = config_path.read_text()
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    if digest != manifest.get("config_sha256"):
        print(
            "error: audit refused — config hash mismatch "
            f"(config {digest[:12]}…, manifest {str(manifest.get('config_sha256'))[:12]}…)",
            file=sys.stderr,
        )
        return 2
    cfg = parse_config(text)

    snap_paths = sorted(run_path.glob("snap_*.rclb"))
    if not snap_paths:
        print(f"error: {run_path} contains no snapshots to audit", file=sys.stderr)
        return 2
    snaps = [read_snapshot(p) for p in snap_paths]
    steps = [int(p.stem.split("_", 1)[1]) for p in snap_paths]
    for p, snap in zip(snap_paths, snaps):
        if snap.u.shape != cfg.grid.cells:
            print(f"audit: snapshot grid mismatch: FAIL ({p.name} has {snap.u.shape})")
            return 1

    guard = _guard_from_snapshots(steps, snaps, cfg.grid.cell_volume)
    checks = _trajectory_checks(guard)

    store = TrajectoryStore(
        grid=cfg.grid,
        reg=Regularization(cfg.epsilon),
        dt=cfg.solver.dt,
        n_steps=cfg.solver.n_steps,
        snap_steps=np.asarray(steps, dtype=np.int64),
        times=np.asarray([s.time for s in snaps]),
        u_snaps=[s.u for s in snaps],
        v_snaps=[s.v for s in snaps],
        guard=guard,
        records=[],
    )
    family = TruncationFamily(CutoffProfile.smooth_bump(), cfg.trunc_levels)
    report = defect_measures(store, family)
    above = [E for E in family.levels if E > report.max_u]
    stray = [
        float(mu)
        for E, mu in zip(family.levels, report.mu_abs)
        if E > report.max_u and mu != 0.0
    ]
    checks.append(
        (
            "defect vanishes above max u",
            not stray,
            f"{len(above)} levels above max u {report.max_u!r}, "
            f"nonzero masses: {stray if stray else 'none'}",
        )
    )

    t_final = float(store.times[-1])
    try:
        psi = TestFunction(
            modes=((1.0, (1,) * cfg.grid.dim),),
            bump=TemporalBump(t0=0.2 * t_final, width=0.6 * t_final),
        )
        trunc_res = truncated_identity_residual(
            store, family, cfg.trunc_levels[-1], psi
        )
        v_res = v_weak_residual(store, psi)[0]
        checks.append(
            (
                "weak-form residual re-check",
                bool(np.isfinite(trunc_res) and np.isfinite(v_res)),
                f"truncated-identity {trunc_res!r}, signal identity {v_res!r}",
            )
        )
    except ValueError as exc:
        print(f"audit: weak-form residual re-check skipped ({exc})")

    passed = _print_checks("audit", checks)
    print(f"audit: {'PASS' if passed else 'FAIL'} ({len(snaps)} snapshots)")
    return 0 if passed else 1


def _cmd_report_data(args) -> int:
    run_path = Path(args.run_dir)
    manifest_path = run_path / "manifest.json"
    if not manifest_path.is_file():
        print(f"error: {run_path} has no manifest.json", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else run_path / "report_data"
    out.mkdir(parents=True, exist_ok=True)
    shutil.copy2(manifest_path, out / "manifest.json")

    copied = set()
    for src in sorted(run_path.glob("*.csv")):
        shutil.copy2(src, out / src.name)
        copied.add(src.name)

    summary_lines: list[str] = []
    for src in sorted(run_path.glob("*_summary.csv")):
        summary_lines.extend(src.read_text().splitlines())
    (out / "metrics.csv").write_text(
        ("\n".join(summary_lines) + "\n") if summary_lines else ""
    )
    print(f"report-data: {len(copied)} tables, {len(summary_lines)} summary rows -> {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chemotaxis-lab",
        description=(
            "Numerical laboratory for a regularized chemotaxis-consumption "
            "system: runs, parameter sweeps, refinement studies, and audits."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(name: str, help_text: str, handler):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("config", help="path to a configuration file")
        cmd.add_argument("--out", default=None, help="output directory")
        cmd.set_defaults(handler=handler)
        return cmd

    with_config("run", "integrate one scenario and persist the trajectory", _cmd_run)
    with_config("sweep-eps", "run the regularization-strength ladder", _cmd_sweep_eps)
    with_config("sweep-trunc", "run the truncation-level defect ladder", _cmd_sweep_trunc)
    with_config("refine", "run the joint space-time refinement ladder", _cmd_refine)
    with_config(
        "verify-truncation", "check the seven truncation axioms", _cmd_verify_truncation
    )

    audit = sub.add_parser("audit", help="re-check invariants of a stored run")
    audit.add_argument("run_dir", help="directory written by `run`")
    audit.add_argument(
        "--config", default=None, help="config to verify against (default: the stored copy)"
    )
    audit.set_defaults(handler=_cmd_audit)

    report = sub.add_parser(
        "report-data", help="flatten run outputs for the reporting component"
    )
    report.add_argument("run_dir", help="directory holding a manifest and CSV tables")
    report.add_argument("--out", default=None, help="destination (default: <run>/report_data)")
    report.set_defaults(handler=_cmd_report_data)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SnapshotFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
