"""Recompute study summary lines from the emitted tables alone.

The laboratory writes, for every parameter study, a metric table
(``sweep_eps.csv``, ``sweep_trunc.csv``, ``refine.csv``) next to a
summary file of ``study,metric,statistic,value`` lines. The functions
here rebuild those summary lines from the table — plus, for the
truncation sweep, the scalar context recorded in the manifest — so an
independent reader can verify every published flag and fitted order
byte for byte. No smoothing, no new conventions; the shared rules are:

- floats render with ``repr`` (round-trip exact);
- a pair order is ``log2(a/b)`` for consecutive errors, and a pair at
  or below the ``1e-12`` floor (or with an exactly-zero denominator)
  counts as converged (``inf``);
- the epsilon sweep's L1-distance columns carry no value on the first
  rung, so monotonicity and orders start from the second rung;
- the budgets-stability flag lets the running maximum of each budget
  column grow at most 20% when the final rung joins;
- a two-rung refinement passes when every pair order is at least one,
  a longer one when every order of every tracked error is at least one.
"""

from __future__ import annotations

import math
from pathlib import Path

from .tables import Table, read_manifest, read_table

PAIR_FLOOR = 1e-12
BUDGET_COLUMNS = (
    "sup_u_logu_abs",
    "sup_grad_v_sq",
    "int_fisher",
    "int_feps_gradv",
    "int_u_pow",
)
#: table stem -> summary line prefix used by the producer
STUDY_NAMES = {
    "sweep_eps": "sweep-eps",
    "sweep_trunc": "sweep-trunc",
    "refine": "refine",
}


def _pair_orders(errors) -> list:
    orders = []
    for a, b in zip(errors, errors[1:]):
        if a <= PAIR_FLOOR and b <= PAIR_FLOOR:
            orders.append(float("inf"))
        elif b == 0.0:
            orders.append(float("inf"))
        else:
            orders.append(math.log2(a / b))
    return orders


def _strictly_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def _last_lines(study: str, table: Table) -> list:
    last = table.rows[-1]
    return [
        f"{study},{col},last,{float(last[j])!r}"
        for j, col in enumerate(table.columns)
        if j > 0
    ]


def _flag_lines(study: str, flags: dict) -> list:
    return [f"{study},{name},monotone,{flag}" for name, flag in flags.items()]


def _order_lines(study: str, orders: dict) -> list:
    return [
        f"{study},{name},order{i},{float(p)!r}"
        for name, seq in orders.items()
        for i, p in enumerate(seq)
    ]


def replay_epsilon_sweep(study: str, table: Table) -> list:
    """Rebuild the epsilon-sweep summary from its metric table."""
    d_u = table.column("l1_u")[1:]
    d_v = table.column("l1_v")[1:]
    residuals = table.column("renorm_residual")

    stable = True
    for name in BUDGET_COLUMNS:
        values = table.column(name)
        head = max(values[:-1])
        full = max(values)
        stable = stable and (full <= 1.2 * head if head > 0.0 else full == 0.0)

    flags = {
        "l1_u": _strictly_decreasing(d_u),
        "l1_v": _strictly_decreasing(d_v),
        "renorm_residual": _strictly_decreasing(residuals),
        "budgets_stable": stable,
    }
    orders = {}
    if len(table) >= 3:
        orders = {
            "l1_u": _pair_orders(d_u),
            "l1_v": _pair_orders(d_v),
            "renorm_residual": _pair_orders(residuals),
        }
    passed = flags["l1_u"] and flags["l1_v"] and flags["renorm_residual"]
    return (
        _last_lines(study, table)
        + _flag_lines(study, flags)
        + _order_lines(study, orders)
        + [f"{study},verdict,passed,{passed}"]
    )


def _median_from_manifest(manifest: dict) -> float:
    for note in manifest.get("notes", ()):
        if isinstance(note, str) and note.startswith("median_u="):
            return float(note[len("median_u="):])
    raise ValueError(
        "manifest lacks a 'median_u=' note; cannot replay the defect-mass "
        "tail flag from the table alone"
    )


def replay_truncation_sweep(study: str, table: Table, manifest: dict) -> list:
    """Rebuild the truncation-sweep summary; needs the solution range
    (``max_u``, ``median_u``) that the producer records in the manifest."""
    levels = table.column("level")
    mu = table.column("mu_abs")
    if "max_u" not in manifest:
        raise ValueError(
            "manifest lacks 'max_u'; cannot replay the defect-mass flags "
            "from the table alone"
        )
    max_u = float(manifest["max_u"])
    median_u = _median_from_manifest(manifest)

    above = [m for level, m in zip(levels, mu) if level > max_u]
    zero_above = all(m == 0.0 for m in above) if above else True
    tail = [m for level, m in zip(levels, mu) if level >= median_u]
    slack = 1e-12 * max(max(mu), 1.0)
    tail_ok = (
        all(b - a <= slack for a, b in zip(tail, tail[1:])) if len(tail) >= 2 else True
    )

    flags = {
        "mu_abs_zero_above_max": zero_above,
        "mu_abs_tail_nonincreasing": tail_ok,
    }
    passed = zero_above and tail_ok
    return (
        _last_lines(study, table)
        + _flag_lines(study, flags)
        + [f"{study},verdict,passed,{passed}"]
    )


def replay_refinement(study: str, table: Table) -> list:
    """Rebuild the refinement-study summary from its error table."""
    series = {
        name: table.column(name)
        for name in ("truncated_residual", "v_residual", "energy_violation")
    }
    flags = {name: _strictly_decreasing(vals) for name, vals in series.items()}
    orders = {}
    if len(table) >= 3:
        orders = {name: _pair_orders(vals) for name, vals in series.items()}
        passed = all(all(p >= 1.0 for p in seq) for seq in orders.values())
    else:
        passed = all(
            all(p >= 1.0 for p in _pair_orders(vals)) for vals in series.values()
        )
    return (
        _last_lines(study, table)
        + _flag_lines(study, flags)
        + _order_lines(study, orders)
        + [f"{study},verdict,passed,{passed}"]
    )


def replay_directory(directory) -> dict:
    """Replay every study table present in ``directory``.

    Returns ``{table stem: summary lines}`` — byte-identical to the
    ``<stem>_summary.csv`` the producer wrote next to the table.
    """
    directory = Path(directory)
    out: dict = {}
    for stem, study in STUDY_NAMES.items():
        path = directory / f"{stem}.csv"
        if not path.is_file():
            continue
        table = read_table(path)
        if stem == "sweep_eps":
            out[stem] = replay_epsilon_sweep(study, table)
        elif stem == "sweep_trunc":
            out[stem] = replay_truncation_sweep(study, table, read_manifest(directory))
        else:
            out[stem] = replay_refinement(study, table)
    return out
