"""Time integration of the regularized chemotaxis-consumption system.

Semi-discrete system on a cell-centered Neumann grid::

    du/dt = lap(u) - div(u F'_eps(u) grad v)
    dv/dt = lap(v) - F_eps(u) v

Two schemes are provided.

``imex`` (the workhorse)
    Per step of size ``dt``:

    1. chemotactic face flux ``a * dv/dn`` with flux density
       ``a = u F'_eps(u)`` from the *old* state, upwinded face-by-face by
       the sign of the face gradient of ``v``;
    2. ``u* = u - dt div(flux)``;
    3. ``u_new`` solves ``(I - dt L) u_new = u*`` by matrix-free conjugate
       gradients, followed by a constant shift that restores the cell sum
       of ``u*`` exactly (the all-ones vector is in the kernel of ``L``, so
       the shift commutes with the dynamics);
    4. ``v*`` solves ``(I - dt L) v* = v`` the same way (no shift);
    5. ``v_new = v* / (1 + dt F_eps(u_new))`` cell by cell.

    Step 3 keeps the discrete mass of ``u`` conserved to rounding no matter
    how the linear solve is stopped; steps 4-5 keep ``0 <= v_new`` and
    ``max v_new <= max v`` because ``(I - dt L)^{-1}`` is an M-matrix inverse
    and the consumption factor lies in ``(0, 1]``.

``explicit``
    Forward Euler with *centered* (arithmetic-mean) face fluxes for the
    chemotaxis term and flux-form diffusion.  Used as an independent
    reference integrator: it shares the grid operators but none of the
    upwinding, implicit solves, or mass-correction logic of ``imex``.

All updates are written in flux form, so both schemes conserve the cell sum
of ``u`` to rounding.  Guards: a step that produces a negative cell raises
``PositivityViolation`` (under the default ``clamp_policy="reject"``), a
non-finite cell raises ``NumericalBlowUp``, and ``run`` additionally aborts
once ``max |u|`` exceeds ``blowup_factor * (1 + max u0)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import (
    ScalarField,
    TensorGrid,
    _divergence,
    _gradient,
    _laplacian,
)
from .regularization import Regularization, f_eps, f_eps_prime


class PositivityViolation(RuntimeError):
    """A step produced a negative cell value in ``u`` or ``v``."""


class NumericalBlowUp(RuntimeError):
    """The solution left the realm of finite (or plausibly bounded) values."""


class SolverFailure(RuntimeError):
    """An inner solver did not meet its contract (CG stall, CFL breach)."""


_SCHEMES = ("imex", "explicit")
_CLAMP_POLICIES = ("reject", "none")


@dataclass(frozen=True)
class SolverConfig:
    """Immutable description of one time-integration run.

    ``t_end`` must be an integer multiple of ``dt`` (to within 1e-9
    relative); the run then takes exactly ``n_steps = round(t_end / dt)``
    steps and reports times as ``k * dt``.
    """

    dt: float
    t_end: float
    scheme: str = "imex"
    cfl_safety: float = 0.9
    clamp_policy: str = "reject"
    blowup_factor: float = 1e6
    cg_rtol: float = 1e-13
    cg_max_iter: int = 2000

    def __post_init__(self) -> None:
        if not (np.isfinite(self.dt) and self.dt > 0.0):
            raise ValueError(f"dt must be a positive finite number, got {self.dt}")
        if not (np.isfinite(self.t_end) and self.t_end > 0.0):
            raise ValueError(f"t_end must be a positive finite number, got {self.t_end}")
        n = round(self.t_end / self.dt)
        if n < 1:
            raise ValueError(
                f"t_end={self.t_end} is shorter than a single step dt={self.dt}"
            )
        if abs(n * self.dt - self.t_end) > 1e-9 * max(self.t_end, self.dt):
            raise ValueError(
                f"t_end={self.t_end} is not an integer multiple of dt={self.dt}"
            )
        if self.scheme not in _SCHEMES:
            raise ValueError(f"scheme must be one of {_SCHEMES}, got {self.scheme!r}")
        if self.clamp_policy not in _CLAMP_POLICIES:
            raise ValueError(
                f"clamp_policy must be one of {_CLAMP_POLICIES}, got {self.clamp_policy!r}"
            )
        if not (0.0 < self.cfl_safety <= 1.0):
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if not self.blowup_factor > 1.0:
            raise ValueError(f"blowup_factor must exceed 1, got {self.blowup_factor}")
        if not (0.0 < self.cg_rtol <= 1e-6):
            raise ValueError(f"cg_rtol must lie in (0, 1e-6], got {self.cg_rtol}")
        if self.cg_max_iter < 1:
            raise ValueError(f"cg_max_iter must be >= 1, got {self.cg_max_iter}")

    @property
    def n_steps(self) -> int:
        return round(self.t_end / self.dt)


@dataclass(frozen=True)
class InitialData:
    """Strictly positive initial pair (u0, v0) on a shared grid."""

    u0: ScalarField
    v0: ScalarField

    def __post_init__(self) -> None:
        if self.u0.grid != self.v0.grid:
            raise ValueError("u0 and v0 must live on the same grid")
        for name, f in (("u0", self.u0), ("v0", self.v0)):
            if not np.all(np.isfinite(f.values)):
                raise ValueError(f"{name} contains non-finite values")
            if not np.all(f.values > 0.0):
                raise ValueError(f"{name} must be strictly positive everywhere")

    @property
    def grid(self) -> TensorGrid:
        return self.u0.grid


@dataclass(frozen=True)
class SolverState:
    """One time slice of the coupled pair, plus its regularization."""

    u: ScalarField
    v: ScalarField
    reg: Regularization
    time: float
    step_index: int

    def __post_init__(self) -> None:
        if self.u.grid != self.v.grid:
            raise ValueError("u and v must live on the same grid")

    @property
    def grid(self) -> TensorGrid:
        return self.u.grid


def initial_state(init: InitialData, reg: Regularization) -> SolverState:
    return SolverState(
        u=init.u0.copy(), v=init.v0.copy(), reg=reg, time=0.0, step_index=0
    )


# ---------------------------------------------------------------------------
# chemotactic face fluxes


def _chemotaxis_fluxes(
    grid: TensorGrid, density: np.ndarray, v: np.ndarray, upwind: bool
) -> list[np.ndarray]:
    """Face values of ``density * dv/dn`` with zero flux on the boundary.

    ``density`` is the advected quantity ``u F'_eps(u)`` evaluated at cells.
    ``upwind=True`` takes the donor cell selected by the sign of the face
    gradient of ``v``; ``upwind=False`` takes the arithmetic face mean.
    """
    fluxes: list[np.ndarray] = []
    for axis in range(grid.dim):
        h = grid.spacing[axis]
        g = np.diff(v, axis=axis) / h
        head = [slice(None)] * grid.dim
        tail = [slice(None)] * grid.dim
        head[axis] = slice(0, -1)
        tail[axis] = slice(1, None)
        left = density[tuple(head)]
        right = density[tuple(tail)]
        if upwind:
            donor = np.where(g > 0.0, left, right)
        else:
            donor = 0.5 * (left + right)
        shape = list(grid.cells)
        shape[axis] += 1
        full = np.zeros(shape)
        interior = [slice(None)] * grid.dim
        interior[axis] = slice(1, -1)
        full[tuple(interior)] = donor * g
        fluxes.append(full)
    return fluxes


# ---------------------------------------------------------------------------
# implicit diffusion solve


def _conjugate_gradient(
    apply_a: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    rtol: float,
    max_iter: int,
) -> np.ndarray:
    """Matrix-free CG for SPD ``A``, warm-started at ``x0 = b``.

    Stops once the recurrence residual satisfies ``||r|| <= rtol ||b||``.
    """
    x = b.copy()
    r = b - apply_a(x)
    stop = rtol * float(np.sqrt(np.sum(b * b)))
    rs = float(np.sum(r * r))
    if np.sqrt(rs) <= stop:
        return x
    p = r.copy()
    for _ in range(max_iter):
        ap = apply_a(p)
        pap = float(np.sum(p * ap))
        if pap <= 0.0:
            raise SolverFailure("conjugate gradient lost positive definiteness")
        alpha = rs / pap
        x = x + alpha * p
        r = r - alpha * ap
        rs_new = float(np.sum(r * r))
        if np.sqrt(rs_new) <= stop:
            return x
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise SolverFailure(
        f"conjugate gradient failed to reach rtol={rtol} in {max_iter} iterations"
    )


def _solve_backward_diffusion(
    grid: TensorGrid, b: np.ndarray, dt: float, cfg: SolverConfig, conserve: bool
) -> np.ndarray:
    """Solve ``(I - dt L) x = b`` with homogeneous Neumann ``L``.

    With ``conserve=True`` the solution is shifted by a constant so that its
    cell sum matches that of ``b`` exactly; constants are ``L``-harmonic, so
    the shifted vector still solves the system up to the CG tolerance.
    """

    def apply_a(w: np.ndarray) -> np.ndarray:
        return w - dt * _laplacian(grid, w)

    x = _conjugate_gradient(apply_a, b, cfg.cg_rtol, cfg.cg_max_iter)
    if conserve:
        for _ in range(2):  # second pass mops up the rounding of the first
            x = x + (float(np.sum(b)) - float(np.sum(x))) / x.size
    return x


# ---------------------------------------------------------------------------
# single step


def _check_new_fields(
    u_new: np.ndarray, v_new: np.ndarray, cfg: SolverConfig, step_index: int
) -> None:
    if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(v_new))):
        raise NumericalBlowUp(f"non-finite values after step {step_index}")
    if cfg.clamp_policy == "reject":
        if np.min(u_new) < 0.0:
            raise PositivityViolation(
                f"u dropped to {np.min(u_new):.3e} after step {step_index}; "
                "reduce dt"
            )
        if np.min(v_new) < 0.0:
            raise PositivityViolation(
                f"v dropped to {np.min(v_new):.3e} after step {step_index}; "
                "reduce dt"
            )


def step(state: SolverState, cfg: SolverConfig) -> SolverState:
    """Advance one step of ``cfg.dt`` with the configured scheme."""
    grid = state.grid
    u = state.u.values
    v = state.v.values
    dt = cfg.dt

    with np.errstate(all="ignore"):  # negative/huge u only under clamp "none"
        density = u * f_eps_prime(state.reg, u)

    if cfg.scheme == "imex":
        fluxes = _chemotaxis_fluxes(grid, density, v, upwind=True)
        u_star = u - dt * _divergence(grid, fluxes)
        u_new = _solve_backward_diffusion(grid, u_star, dt, cfg, conserve=True)
        if not np.all(np.isfinite(u_new)):
            raise NumericalBlowUp(f"non-finite u after step {state.step_index + 1}")
        if cfg.clamp_policy == "reject" and np.min(u_new) < 0.0:
            raise PositivityViolation(
                f"u dropped to {np.min(u_new):.3e} after step "
                f"{state.step_index + 1}; reduce dt"
            )
        v_star = _solve_backward_diffusion(grid, v, dt, cfg, conserve=False)
        # under "reject" u_new >= 0 was just verified; under "none" clamp the
        # consumption argument so the factor stays defined for negative cells
        u_eff = u_new if cfg.clamp_policy == "reject" else np.maximum(u_new, 0.0)
        v_new = v_star / (1.0 + dt * f_eps(state.reg, u_eff))
    else:  # explicit
        fluxes = _chemotaxis_fluxes(grid, density, v, upwind=False)
        u_new = u + dt * (_laplacian(grid, u) - _divergence(grid, fluxes))
        with np.errstate(invalid="ignore", over="ignore"):
            consumption = np.where(u > 0.0, f_eps(state.reg, np.maximum(u, 0.0)), 0.0)
            v_new = v + dt * (_laplacian(grid, v) - consumption * v)

    _check_new_fields(u_new, v_new, cfg, state.step_index + 1)
    return SolverState(
        u=ScalarField(grid, u_new),
        v=ScalarField(grid, v_new),
        reg=state.reg,
        time=cfg.dt * (state.step_index + 1),
        step_index=state.step_index + 1,
    )


# ---------------------------------------------------------------------------
# trajectory bookkeeping


@dataclass(frozen=True)
class DiagnosticsSinks:
    """What ``run`` should retain along the way.

    ``snapshot_every``: keep full (u, v) fields every that many steps (the
    initial and final slices are always kept).  ``record_every > 0`` calls
    ``record_fn(state)`` on the same kind of cadence and stores the results;
    this indirection lets heavier observers hook in without this module
    depending on them.
    """

    snapshot_every: int = 1
    record_every: int = 0
    record_fn: Callable[[SolverState], object] | None = None

    def __post_init__(self) -> None:
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")
        if self.record_every < 0:
            raise ValueError("record_every must be >= 0")
        if self.record_every > 0 and self.record_fn is None:
            raise ValueError("record_every > 0 requires a record_fn")


@dataclass(frozen=True)
class GuardTrace:
    """Per-step scalar witnesses kept for every run, snapshot cadence aside."""

    step: np.ndarray
    time: np.ndarray
    mass_u: np.ndarray
    min_u: np.ndarray
    max_u: np.ndarray
    min_v: np.ndarray
    max_v: np.ndarray


def _guard_row(state: SolverState, k: int, cell_volume: float):
    uv = state.u.values
    vv = state.v.values
    return (
        k,
        state.time,
        float(np.sum(uv)) * cell_volume,
        float(np.min(uv)),
        float(np.max(uv)),
        float(np.min(vv)),
        float(np.max(vv)),
    )


def _guard_from_rows(guard_rows: list) -> GuardTrace:
    rows = np.asarray(guard_rows)
    return GuardTrace(
        step=rows[:, 0].astype(np.int64),
        time=rows[:, 1].copy(),
        mass_u=rows[:, 2].copy(),
        min_u=rows[:, 3].copy(),
        max_u=rows[:, 4].copy(),
        min_v=rows[:, 5].copy(),
        max_v=rows[:, 6].copy(),
    )


@dataclass(frozen=True)
class TrajectoryStore:
    """Everything a run hands to downstream analysis."""

    grid: TensorGrid
    reg: Regularization
    dt: float
    n_steps: int
    snap_steps: np.ndarray
    times: np.ndarray
    u_snaps: list[np.ndarray]
    v_snaps: list[np.ndarray]
    guard: GuardTrace
    records: list

    @property
    def final_time(self) -> float:
        return float(self.times[-1])


def run(
    init: InitialData,
    reg: Regularization,
    cfg: SolverConfig,
    sinks: DiagnosticsSinks | None = None,
) -> TrajectoryStore:
    """Integrate from ``init`` to ``cfg.t_end`` and collect the trajectory."""
    if sinks is None:
        sinks = DiagnosticsSinks()
    state = initial_state(init, reg)
    n = cfg.n_steps
    cell_volume = state.grid.cell_volume
    blowup_cap = cfg.blowup_factor * (1.0 + float(np.max(init.u0.values)))

    guard_rows: list[tuple[int, float, float, float, float, float, float]] = []
    snap_steps: list[int] = []
    times: list[float] = []
    u_snaps: list[np.ndarray] = []
    v_snaps: list[np.ndarray] = []
    records: list = []

    def observe(s: SolverState, k: int) -> None:
        guard_rows.append(_guard_row(s, k, cell_volume))
        if k % sinks.snapshot_every == 0 or k == n:
            snap_steps.append(k)
            times.append(s.time)
            u_snaps.append(s.u.values.copy())
            v_snaps.append(s.v.values.copy())
        if sinks.record_every > 0 and (k % sinks.record_every == 0 or k == n):
            assert sinks.record_fn is not None
            records.append(sinks.record_fn(s))

    observe(state, 0)
    for k in range(1, n + 1):
        state = step(state, cfg)
        if float(np.max(np.abs(state.u.values))) > blowup_cap:
            raise NumericalBlowUp(
                f"max |u| exceeded {blowup_cap:.3e} at step {k}"
            )
        observe(state, k)

    guard = _guard_from_rows(guard_rows)
    return TrajectoryStore(
        grid=state.grid,
        reg=reg,
        dt=cfg.dt,
        n_steps=n,
        snap_steps=np.asarray(snap_steps, dtype=np.int64),
        times=np.asarray(times),
        u_snaps=u_snaps,
        v_snaps=v_snaps,
        guard=guard,
        records=records,
    )


# ---------------------------------------------------------------------------
# reference integrator


_ORACLE_MAX_DIM = 2
_ORACLE_MAX_CELLS = 32


def oracle_solve(
    init: InitialData,
    reg: Regularization,
    t_end: float,
    dt_fine: float,
    cfl_safety: float = 0.9,
) -> TrajectoryStore:
    """Independent explicit-Euler reference trajectory (centered fluxes).

    Restricted to grids where brute force is affordable and trustworthy:
    at most 2 dimensions, at most 32 cells per axis, and a parabolic CFL
    bound ``dt <= cfl_safety * h^2 / (2 dim (1 + max |grad v|))`` enforced
    against the *current* ``v`` before every step.  Keeps the full guard
    trace but only the initial and final field snapshots.
    """
    grid = init.grid
    if grid.dim > _ORACLE_MAX_DIM:
        raise ValueError(
            f"reference integrator supports dim <= {_ORACLE_MAX_DIM}, got {grid.dim}"
        )
    if max(grid.cells) > _ORACLE_MAX_CELLS:
        raise ValueError(
            f"reference integrator supports <= {_ORACLE_MAX_CELLS} cells per axis, "
            f"got {grid.cells}"
        )
    cfg = SolverConfig(
        dt=dt_fine, t_end=t_end, scheme="explicit", cfl_safety=cfl_safety
    )
    h_min = min(grid.spacing)
    cell_volume = grid.cell_volume
    state = initial_state(init, reg)
    guard_rows = [_guard_row(state, 0, cell_volume)]
    u_snaps = [state.u.values.copy()]
    v_snaps = [state.v.values.copy()]
    times = [0.0]
    n = cfg.n_steps
    for k in range(1, n + 1):
        grad_v = _gradient(grid, state.v.values)
        g_max = max(float(np.max(np.abs(g))) for g in grad_v)
        bound = cfl_safety * h_min**2 / (2.0 * grid.dim * (1.0 + g_max))
        if dt_fine > bound:
            raise SolverFailure(
                f"dt_fine={dt_fine:.3e} violates the explicit stability bound "
                f"{bound:.3e} at t={state.time:.6f}"
            )
        state = step(state, cfg)
        guard_rows.append(_guard_row(state, k, cell_volume))
    u_snaps.append(state.u.values.copy())
    v_snaps.append(state.v.values.copy())
    times.append(state.time)
    return TrajectoryStore(
        grid=grid,
        reg=reg,
        dt=dt_fine,
        n_steps=n,
        snap_steps=np.asarray([0, n], dtype=np.int64),
        times=np.asarray(times),
        u_snaps=u_snaps,
        v_snaps=v_snaps,
        guard=_guard_from_rows(guard_rows),
        records=[],
    )
