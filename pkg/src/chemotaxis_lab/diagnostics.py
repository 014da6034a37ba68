"""Per-state evaluation of the dissipation functionals and their budgets.

The central object is one :class:`DiagnosticsRecord` per observed time::

    entropy      = int u ln u
    grad_sqrt_v  = 2 int |grad sqrt(v)|^2
    energy       = entropy + grad_sqrt_v          (computed exactly as the sum)
    fisher       = int |grad u|^2 / u
    hessian_logv = int v |D^2 ln v|^2             (Frobenius norm squared)
    cross        = (1/2) int F_eps(u) |grad v|^2 / v
    u_logu_abs   = int u |ln u|
    grad_v_sq    = int |grad v|^2
    feps_gradv   = int F_eps(u) |grad v|^2
    u_pow        = int u^((n+2)/n)                (n = grid dimension)

all by midpoint quadrature with the package's mirrored-ghost difference
operators.  The discrete energy statement checked here is that for each
consecutive pair of records

    energy(t_{k+1}) - energy(t_k)
        + dt * (fisher + hessian_logv + cross)(t_{k+1})  <=  slack.

``D^2 ln v`` differences ``ln v`` directly (never quotients of differences
of ``v``): the mixed entry for each axis pair is computed once and counted
twice, so the discrete Hessian is symmetric exactly.

Every functional here divides by ``u`` or ``v`` or takes their logarithm,
so records are only defined for fields bounded away from zero; breaching
``FLOOR`` raises :class:`FloorViolation` rather than clamping.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import SolverState
from .grid import TensorGrid, _gradient, _mirror_pad
from .regularization import f_eps

FLOOR = 1e-30

CSV_COLUMNS = (
    "step",
    "time",
    "mass_u",
    "min_u",
    "max_v",
    "entropy",
    "grad_sqrt_v",
    "energy",
    "fisher",
    "hessian_logv",
    "cross",
    "u_logu_abs",
    "grad_v_sq",
    "feps_gradv",
    "u_pow",
)

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


class FloorViolation(RuntimeError):
    """A field fell to (or below) the positivity floor where a functional
    requires strict positivity."""


@dataclass(frozen=True)
class DiagnosticsRecord:
    step: int
    time: float
    mass_u: float
    min_u: float
    max_v: float
    entropy: float
    grad_sqrt_v: float
    energy: float
    fisher: float
    hessian_logv: float
    cross: float
    u_logu_abs: float
    grad_v_sq: float
    feps_gradv: float
    u_pow: float


def _centered(grid: TensorGrid, w: np.ndarray, axis: int) -> np.ndarray:
    """Centered first difference along one axis with mirror ghosts."""
    h = grid.spacing[axis]
    p = _mirror_pad(w, axis)
    lo = [slice(None)] * grid.dim
    hi = [slice(None)] * grid.dim
    lo[axis] = slice(0, -2)
    hi[axis] = slice(2, None)
    return (p[tuple(hi)] - p[tuple(lo)]) / (2.0 * h)


def _second_difference(grid: TensorGrid, w: np.ndarray, axis: int) -> np.ndarray:
    """Central second difference along one axis with mirror ghosts."""
    h = grid.spacing[axis]
    p = _mirror_pad(w, axis)
    lo = [slice(None)] * grid.dim
    mid = [slice(None)] * grid.dim
    hi = [slice(None)] * grid.dim
    lo[axis] = slice(0, -2)
    mid[axis] = slice(1, -1)
    hi[axis] = slice(2, None)
    return (p[tuple(lo)] - 2.0 * p[tuple(mid)] + p[tuple(hi)]) / h**2


def _log_hessian_frobenius_sq(grid: TensorGrid, w: np.ndarray) -> np.ndarray:
    """Cell-wise squared Frobenius norm of the symmetric difference Hessian."""
    total = np.zeros(grid.cells)
    for a in range(grid.dim):
        total += _second_difference(grid, w, a) ** 2
    for a in range(grid.dim):
        da = _centered(grid, w, a)
        for b in range(a + 1, grid.dim):
            mixed = _centered(grid, da, b)
            total += 2.0 * mixed**2
    return total


def grad_sqrt_v_chainrule(grid: TensorGrid, v: np.ndarray) -> float:
    """``(1/2) int |grad v|^2 / v`` — the chain-rule form of ``grad_sqrt_v``."""
    gv2 = np.zeros(grid.cells)
    for g in _gradient(grid, v):
        gv2 += g**2
    return 0.5 * float(np.sum(gv2 / v)) * grid.cell_volume


def compute_record(state: SolverState) -> DiagnosticsRecord:
    """Evaluate every tracked functional on one state snapshot."""
    grid = state.grid
    u = state.u.values
    v = state.v.values
    if float(np.min(u)) <= FLOOR:
        raise FloorViolation(
            f"min u = {np.min(u):.3e} is at or below the positivity floor {FLOOR}"
        )
    if float(np.min(v)) <= FLOOR:
        raise FloorViolation(
            f"min v = {np.min(v):.3e} is at or below the positivity floor {FLOOR}"
        )
    vol = grid.cell_volume

    log_u = np.log(u)
    entropy = float(np.sum(u * log_u)) * vol
    u_logu_abs = float(np.sum(u * np.abs(log_u))) * vol

    gu2 = np.zeros(grid.cells)
    for g in _gradient(grid, u):
        gu2 += g**2
    fisher = float(np.sum(gu2 / u)) * vol

    gsv2 = np.zeros(grid.cells)
    for g in _gradient(grid, np.sqrt(v)):
        gsv2 += g**2
    grad_sqrt_v = 2.0 * float(np.sum(gsv2)) * vol

    gv2 = np.zeros(grid.cells)
    for g in _gradient(grid, v):
        gv2 += g**2
    grad_v_sq = float(np.sum(gv2)) * vol

    feps_u = f_eps(state.reg, u)
    feps_gradv = float(np.sum(feps_u * gv2)) * vol
    cross = 0.5 * float(np.sum(feps_u * gv2 / v)) * vol

    hessian_logv = (
        float(np.sum(v * _log_hessian_frobenius_sq(grid, np.log(v)))) * vol
    )

    exponent = (grid.dim + 2.0) / grid.dim
    u_pow = float(np.sum(u**exponent)) * vol

    return DiagnosticsRecord(
        step=state.step_index,
        time=state.time,
        mass_u=float(np.sum(u)) * vol,
        min_u=float(np.min(u)),
        max_v=float(np.max(v)),
        entropy=entropy,
        grad_sqrt_v=grad_sqrt_v,
        energy=entropy + grad_sqrt_v,
        fisher=fisher,
        hessian_logv=hessian_logv,
        cross=cross,
        u_logu_abs=u_logu_abs,
        grad_v_sq=grad_v_sq,
        feps_gradv=feps_gradv,
        u_pow=u_pow,
    )


# ---------------------------------------------------------------------------
# inequality and budget reports


@dataclass(frozen=True)
class EnergyReport:
    """Worst-pair summary of the discrete energy inequality."""

    n_pairs: int
    n_violations: int
    worst_violation: float
    worst_time: float
    slack: float

    @property
    def passed(self) -> bool:
        return self.worst_violation <= self.slack


def check_energy_inequality(
    records: Sequence[DiagnosticsRecord], dt: float, slack: float
) -> EnergyReport:
    """Check ``E_{k+1} - E_k + dt * D_{k+1} <= slack`` for consecutive pairs.

    ``dt`` is the time spacing between consecutive records (the record
    cadence times the step size, for uniformly recorded runs).
    """
    if len(records) < 2:
        raise ValueError("need at least two records to check the inequality")
    worst = -np.inf
    worst_time = records[0].time
    violations = 0
    for prev, cur in zip(records[:-1], records[1:]):
        dissipation = cur.fisher + cur.hessian_logv + cur.cross
        lhs = cur.energy - prev.energy + dt * dissipation
        if lhs > slack:
            violations += 1
        if lhs > worst:
            worst = lhs
            worst_time = cur.time
    return EnergyReport(
        n_pairs=len(records) - 1,
        n_violations=violations,
        worst_violation=float(worst),
        worst_time=float(worst_time),
        slack=float(slack),
    )


@dataclass(frozen=True)
class BudgetReport:
    """Time-uniform suprema and time-integrated totals of the budget terms."""

    sup_u_logu_abs: float
    sup_grad_v_sq: float
    int_fisher: float
    int_feps_gradv: float
    int_u_pow: float

    @property
    def all_finite(self) -> bool:
        return all(
            np.isfinite(x)
            for x in (
                self.sup_u_logu_abs,
                self.sup_grad_v_sq,
                self.int_fisher,
                self.int_feps_gradv,
                self.int_u_pow,
            )
        )


def check_budgets(records: Sequence[DiagnosticsRecord], T: float) -> BudgetReport:
    """Suprema and trapezoid time integrals of the budget quantities.

    The records must span ``[0, T]``: the last record's time has to match
    ``T`` to within 1e-9 relative.
    """
    if len(records) < 2:
        raise ValueError("need at least two records to integrate budgets")
    times = np.asarray([r.time for r in records])
    if abs(float(times[-1]) - T) > 1e-9 * max(1.0, abs(T)):
        raise ValueError(
            f"records end at t={times[-1]}, which does not match T={T}"
        )

    def integral(name: str) -> float:
        return float(_trapezoid(np.asarray([getattr(r, name) for r in records]),
                                times))

    return BudgetReport(
        sup_u_logu_abs=max(r.u_logu_abs for r in records),
        sup_grad_v_sq=max(r.grad_v_sq for r in records),
        int_fisher=integral("fisher"),
        int_feps_gradv=integral("feps_gradv"),
        int_u_pow=integral("u_pow"),
    )
