"""Render the standard figures from emitted CSVs (Agg backend, PNG files).

Each ``figure_*`` function takes parsed tables, writes one PNG into the
output directory, and returns ``(path, stat_lines)`` where the stat
lines use the same machine-readable ``study,metric,statistic,value``
shape as the replayed summaries (floats via ``repr``). Statistics are
limited to values an independent reader can recompute from the CSV —
minima, maxima, monotonicity flags, and least-squares log-log slopes —
and the input numbers are never altered.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)
import numpy as np  # noqa: E402

from .tables import Table  # noqa: E402

_DPI = 150


def fitted_order(sizes, errors) -> float:
    """Least-squares convergence order from a refinement series.

    Fits ``log2(error) = -p * log2(size) + c`` over the pairs with a
    strictly positive error and returns ``p`` (positive when the error
    shrinks as ``size`` grows). Needs at least two usable pairs.
    """
    xs = [float(s) for s, e in zip(sizes, errors) if e > 0.0 and s > 0.0]
    ys = [float(e) for s, e in zip(sizes, errors) if e > 0.0 and s > 0.0]
    if len(xs) < 2:
        raise ValueError("need at least two positive (size, error) pairs to fit")
    slope = np.polyfit(np.log2(xs), np.log2(ys), 1)[0]
    return float(-slope)


def _loglog_slope(xs, ys) -> float:
    """Least-squares slope of ``log2(y)`` against ``log2(x)``; positive
    pairs only."""
    px = [float(x) for x, y in zip(xs, ys) if x > 0.0 and y > 0.0]
    py = [float(y) for x, y in zip(xs, ys) if x > 0.0 and y > 0.0]
    if len(px) < 2:
        raise ValueError("need at least two positive pairs to fit")
    return float(np.polyfit(np.log2(px), np.log2(py), 1)[0])


def _nonincreasing(values) -> bool:
    return all(b <= a for a, b in zip(values, values[1:]))


def _save(fig, out_dir: Path, name: str) -> Path:
    path = Path(out_dir) / f"{name}.png"
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def figure_energy(diagnostics: Table, out_dir: Path):
    """Decay of the energy and its two parts over time."""
    t = diagnostics.column("time")
    stats = []
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for name, style in (("energy", "-"), ("entropy", "--"), ("grad_sqrt_v", ":")):
        series = diagnostics.column(name)
        ax.plot(t, series, style, label=name)
        stats.append(f"energy_decay,{name},monotone,{_nonincreasing(series)}")
        stats.append(f"energy_decay,{name},min,{min(series)!r}")
        stats.append(f"energy_decay,{name},max,{max(series)!r}")
    ax.set_xlabel("time")
    ax.set_ylabel("value")
    ax.set_title("energy decay")
    ax.legend()
    return _save(fig, out_dir, "energy"), stats


def figure_budgets(table: Table, out_dir: Path, budget_columns) -> tuple:
    """Table figure of the dissipation budgets, one row per table rung."""
    first = table.columns[0]
    rows = []
    for i in range(len(table)):
        rows.append(
            [f"{table.column(first)[i]:g}"]
            + [f"{table.column(c)[i]:.6e}" for c in budget_columns]
        )
    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(budget_columns), 0.5 + 0.4 * len(rows)))
    ax.axis("off")
    rendered = ax.table(
        cellText=rows,
        colLabels=[first] + list(budget_columns),
        loc="center",
    )
    rendered.auto_set_font_size(False)
    rendered.set_fontsize(8)
    ax.set_title("dissipation budgets")
    stats = []
    for c in budget_columns:
        series = table.column(c)
        stats.append(f"budget_table,{c},min,{min(series)!r}")
        stats.append(f"budget_table,{c},max,{max(series)!r}")
    return _save(fig, out_dir, "budgets"), stats


def figure_defect(table: Table, out_dir: Path) -> tuple:
    """Defect mass per truncation level, log-spaced bars."""
    levels = table.column("level")
    mu = table.column("mu_abs")
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.bar(range(len(levels)), mu, tick_label=[f"{v:g}" for v in levels])
    ax.set_xlabel("truncation level")
    ax.set_ylabel("defect mass")
    ax.set_title("defect mass per level")
    stats = [
        f"defect_mass,mu_abs,max,{max(mu)!r}",
        f"defect_mass,mu_abs,nonzero_levels,{float(sum(1 for m in mu if m != 0.0))!r}",
    ]
    return _save(fig, out_dir, "defect"), stats


def figure_refinement(table: Table, out_dir: Path) -> tuple:
    """Log-log error-versus-cells plot with the fitted order per series."""
    cells = table.column("cells")
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    stats = []
    for name, marker in (
        ("truncated_residual", "o"),
        ("v_residual", "s"),
        ("energy_violation", "^"),
    ):
        errors = table.column(name)
        xs = [c for c, e in zip(cells, errors) if e > 0.0]
        ys = [e for e in errors if e > 0.0]
        label = name
        if len(xs) >= 2:
            order = fitted_order(xs, ys)
            stats.append(f"refinement_fit,{name},fitted_order,{order!r}")
            label = f"{name} (order {order:.2f})"
        if xs:
            ax.loglog(xs, ys, marker=marker, label=label)
    ax.set_xlabel("cells per axis")
    ax.set_ylabel("error")
    ax.set_title("errors under refinement")
    ax.legend()
    return _save(fig, out_dir, "refinement"), stats


def figure_epsilon(table: Table, out_dir: Path) -> tuple:
    """Distances and residual against the regularization strength."""
    eps = table.column("epsilon")
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    stats = []
    for name, marker in (("l1_u", "o"), ("l1_v", "s"), ("renorm_residual", "^")):
        series = table.column(name)
        xs = [e for e, y in zip(eps, series) if y == y and y > 0.0]  # skip nan rung
        ys = [y for y in series if y == y and y > 0.0]
        if len(xs) >= 2:
            stats.append(f"epsilon_decay,{name},slope,{_loglog_slope(xs, ys)!r}")
        if xs:
            ax.loglog(xs, ys, marker=marker, label=name)
    ax.invert_xaxis()  # the ladder shrinks epsilon left to right
    ax.set_xlabel("regularization strength")
    ax.set_ylabel("value")
    ax.set_title("convergence as the regularization vanishes")
    ax.legend()
    return _save(fig, out_dir, "epsilon"), stats
