"""Parameter studies over regularization, truncation level, and resolution.

A study is described by a :class:`StudyPlan` — an initial-data scenario, a
solver configuration, and a ladder of parameter values — and produces a
:class:`StudyVerdict`: a per-rung metric table plus monotonicity flags,
observed convergence orders (base-2 logs of successive error ratios), and a
single pass/fail decision.  Identical plans produce bit-identical verdicts.

Three studies are provided:

* :func:`epsilon_sweep` — rerun one scenario along a decreasing ladder of
  regularization strengths; successive solutions must approach each other
  in space-time L1 and the renormalized-identity residual must fall.
* :func:`truncation_sweep` — measure the defect mass of the truncated
  identity along a ladder of truncation levels; the mass must vanish for
  levels above the solution's range and be non-increasing beyond its
  median.
* :func:`refinement_study` — rerun one scenario on grids of increasing
  resolution with the time step scaled like the square of the spacing; the
  weak-identity residuals and the worst energy-inequality violation must
  shrink at observed order at least one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Optional

import numpy as np

from .diagnostics import check_budgets, check_energy_inequality, compute_record
from .dynamics import (
    DiagnosticsSinks,
    InitialData,
    SolverConfig,
    TrajectoryStore,
    run,
)
from .grid import ScalarField, TensorGrid
from .regularization import (
    CutoffProfile,
    Regularization,
    TruncationFamily,
    truncation_second,
)
from .weakform import (
    Renormalizer,
    TemporalBump,
    TestFunction,
    defect_measures,
    renormalized_residual,
    truncated_identity_residual,
    v_weak_residual,
)

__all__ = [
    "DEFAULT_TRUNCATION_LEVELS",
    "TRUNCATION_SUP_CAP",
    "ScenarioSpec",
    "StudyPlan",
    "StudyVerdict",
    "make_initial_data",
    "epsilon_sweep",
    "truncation_sweep",
    "refinement_study",
]

#: Dyadic truncation ladder used when a plan does not override it.
DEFAULT_TRUNCATION_LEVELS = tuple(float(2**k) for k in range(1, 11))

#: Cap K for the reported curvature column sup_{s <= K} |phi_E''(s)|.
TRUNCATION_SUP_CAP = 10.0

#: Errors at or below this magnitude count as "at the quadrature floor";
#: a pair of floored errors reports an infinite observed order.
REFINEMENT_FLOOR = 1e-12

_SCENARIO_KINDS = ("constant", "gaussian", "random-smooth")

_KNOWN_METRICS = frozenset(
    {
        "l1_u",
        "l1_v",
        "renorm_residual",
        "renorm_bound",
        "sup_u_logu_abs",
        "sup_grad_v_sq",
        "int_fisher",
        "int_feps_gradv",
        "int_u_pow",
        "mu_abs",
        "sup_second_below_cap",
        "truncated_residual",
        "v_residual",
        "energy_violation",
    }
)


# ---------------------------------------------------------------------------
# initial-data scenarios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioSpec:
    """Shape parameters for a family of strictly positive initial pairs.

    ``kind`` selects the generator:

    * ``"constant"`` — homogeneous pair ``u = u_floor + u_amplitude``,
      ``v = v_base``;
    * ``"gaussian"`` — a bump of height ``u_amplitude`` and width
      ``u_width`` over the floor, centred at ``u_center`` (domain centre
      when omitted), with a product-of-cosines perturbation of size
      ``v_amplitude`` on the signal;
    * ``"random-smooth"`` — seeded band-limited noise: cosine modes with
      integer frequencies up to ``cutoff`` per axis, normalized to [0, 1]
      and scaled into ``[u_floor, u_floor + u_amplitude]`` (and likewise
      for the signal with ``v_base``/``v_amplitude``).
    """

    kind: str
    u_floor: float = 0.5
    u_amplitude: float = 2.0
    u_width: float = 0.15
    u_center: Optional[tuple] = None
    v_base: float = 1.0
    v_amplitude: float = 0.5
    cutoff: int = 3

    def __post_init__(self) -> None:
        if self.kind not in _SCENARIO_KINDS:
            raise ValueError(
                f"unknown scenario kind {self.kind!r}; expected one of {_SCENARIO_KINDS}"
            )
        for name in ("u_floor", "u_amplitude", "u_width", "v_base", "v_amplitude"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.u_floor <= 0.0:
            raise ValueError("u_floor must be positive (fields are strictly positive)")
        if self.u_amplitude < 0.0:
            raise ValueError("u_amplitude must be nonnegative")
        if self.u_width <= 0.0:
            raise ValueError("u_width must be positive")
        if self.v_base <= 0.0 or abs(self.v_amplitude) >= self.v_base:
            raise ValueError("need v_base > |v_amplitude| to keep the signal positive")
        if self.cutoff < 1:
            raise ValueError("cutoff must be at least 1")


def _cosine_product(grid: TensorGrid, ks) -> np.ndarray:
    mesh = grid.center_mesh()
    mode = np.ones(grid.cells)
    for axis, k in enumerate(ks):
        if k:
            mode = mode * np.cos(k * np.pi * mesh[axis] / grid.lengths[axis])
    return mode


def _bandlimited_profile(grid: TensorGrid, rng: np.random.Generator, cutoff: int) -> np.ndarray:
    """Seeded low-pass noise normalized to [0, 1].

    The coefficient draw depends only on the seed and the dimension, never
    on the resolution, so the same seed samples the same smooth function
    on every grid.
    """
    modes = [ks for ks in product(range(cutoff + 1), repeat=grid.dim) if any(ks)]
    coeffs = rng.standard_normal(len(modes))
    values = np.zeros(grid.cells)
    for c, ks in zip(coeffs, modes):
        weight = 1.0 / (1.0 + float(sum(k * k for k in ks)))
        values = values + (c * weight) * _cosine_product(grid, ks)
    lo = float(values.min())
    hi = float(values.max())
    if hi - lo < 1e-300:
        return np.zeros(grid.cells)
    return (values - lo) / (hi - lo)


def make_initial_data(spec: ScenarioSpec, grid: TensorGrid, seed: int = 0) -> InitialData:
    """Instantiate a scenario on a grid; random scenarios are seeded."""
    if spec.kind == "constant":
        u = np.full(grid.cells, spec.u_floor + spec.u_amplitude)
        v = np.full(grid.cells, spec.v_base)
    elif spec.kind == "gaussian":
        center = spec.u_center
        if center is None:
            center = tuple(length / 2.0 for length in grid.lengths)
        if len(center) != grid.dim:
            raise ValueError(
                f"u_center has {len(center)} coordinates for a {grid.dim}-d grid"
            )
        mesh = grid.center_mesh()
        r2 = np.zeros(grid.cells)
        for axis in range(grid.dim):
            r2 = r2 + (mesh[axis] - center[axis]) ** 2
        u = spec.u_floor + spec.u_amplitude * np.exp(-r2 / (2.0 * spec.u_width**2))
        v = spec.v_base + spec.v_amplitude * _cosine_product(grid, (1,) * grid.dim)
    else:  # random-smooth
        rng = np.random.default_rng(seed)
        u = spec.u_floor + spec.u_amplitude * _bandlimited_profile(grid, rng, spec.cutoff)
        v = spec.v_base + spec.v_amplitude * _bandlimited_profile(grid, rng, spec.cutoff)
    return InitialData(u0=ScalarField(grid, u), v0=ScalarField(grid, v))


# ---------------------------------------------------------------------------
# plans and verdicts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StudyPlan:
    """One scenario, one solver configuration, one parameter ladder.

    The meaning of ``ladder`` depends on the study: regularization
    strengths for :func:`epsilon_sweep` (decreasing, in (0, 1]), unused by
    :func:`truncation_sweep` (which ladders over ``trunc_levels``), and
    ``(cells, dt)`` pairs with ``dt`` proportional to the squared spacing
    for :func:`refinement_study`.  ``metrics`` optionally restricts which
    columns appear in verdict summaries; empty means all.
    """

    scenario: ScenarioSpec
    grid: TensorGrid
    solver: SolverConfig
    epsilon: float
    ladder: tuple
    metrics: tuple = ()
    trunc_levels: tuple = DEFAULT_TRUNCATION_LEVELS
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "ladder", tuple(self.ladder))
        object.__setattr__(self, "metrics", tuple(self.metrics))
        object.__setattr__(self, "trunc_levels", tuple(float(E) for E in self.trunc_levels))
        if not self.ladder:
            raise ValueError("ladder must be non-empty")
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        unknown = [m for m in self.metrics if m not in _KNOWN_METRICS]
        if unknown:
            raise ValueError(f"unknown metrics {unknown}; known: {sorted(_KNOWN_METRICS)}")
        if not self.trunc_levels:
            raise ValueError("trunc_levels must be non-empty")
        if any(b <= a for a, b in zip(self.trunc_levels, self.trunc_levels[1:])):
            raise ValueError("trunc_levels must be strictly increasing")
        if any(E <= 0.0 for E in self.trunc_levels):
            raise ValueError("trunc_levels must be positive")


@dataclass(frozen=True)
class StudyVerdict:
    """Metric table plus the monotonicity/order checks drawn from it.

    ``rows`` is one tuple per ladder rung in ladder order; ``columns``
    names the entries.  ``orders`` holds base-2 logs of successive error
    ratios and is populated only when the ladder has at least three rungs.
    ``summary_lines`` renders the canonical ``study,metric,statistic,value``
    records with values at full round-trip precision.
    """

    study: str
    columns: tuple
    rows: tuple
    monotone: dict
    orders: dict
    passed: bool
    max_u: float = float("nan")
    notes: tuple = ()
    metrics: tuple = ()

    def summary_lines(self) -> list:
        selected = set(self.metrics) if self.metrics else None

        def keep(name: str) -> bool:
            return selected is None or name in selected

        lines = []
        last = self.rows[-1]
        for j, col in enumerate(self.columns):
            if j == 0 or not keep(col):
                continue
            lines.append(f"{self.study},{col},last,{float(last[j])!r}")
        for name, flag in self.monotone.items():
            if keep(name):
                lines.append(f"{self.study},{name},monotone,{flag}")
        for name, orders in self.orders.items():
            if not keep(name):
                continue
            for i, p in enumerate(orders):
                lines.append(f"{self.study},{name},order{i},{float(p)!r}")
        lines.append(f"{self.study},verdict,passed,{self.passed}")
        return lines


def _strictly_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def _pair_orders(errors) -> tuple:
    orders = []
    for a, b in zip(errors, errors[1:]):
        if a <= REFINEMENT_FLOOR and b <= REFINEMENT_FLOOR:
            orders.append(float("inf"))
        elif b == 0.0:
            orders.append(float("inf"))
        else:
            orders.append(math.log2(a / b))
    return tuple(orders)


def _time_weights(times: np.ndarray) -> np.ndarray:
    t = np.asarray(times, dtype=np.float64)
    w = np.zeros_like(t)
    gaps = np.diff(t)
    w[:-1] += 0.5 * gaps
    w[1:] += 0.5 * gaps
    return w


def _l1_space_time(times, snaps_a, snaps_b, cell_volume: float) -> float:
    weights = _time_weights(times)
    total = 0.0
    for w, a, b in zip(weights, snaps_a, snaps_b):
        total += w * float(np.sum(np.abs(a - b))) * cell_volume
    return total


def _run_store(
    init: InitialData, epsilon: float, solver: SolverConfig, with_records: bool
) -> TrajectoryStore:
    every = max(1, solver.n_steps // 64)
    sinks = DiagnosticsSinks(
        snapshot_every=every,
        record_every=every if with_records else 0,
        record_fn=compute_record if with_records else None,
    )
    return run(init, Regularization(epsilon), solver, sinks)


def _default_test_function(dim: int, t_end: float) -> TestFunction:
    bump = TemporalBump(t0=0.2 * t_end, width=0.6 * t_end)
    return TestFunction(modes=((1.0, (1,) * dim),), bump=bump)


def _truncation_family(plan: StudyPlan) -> TruncationFamily:
    return TruncationFamily(CutoffProfile.smooth_bump(), plan.trunc_levels)


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------


def epsilon_sweep(plan: StudyPlan) -> StudyVerdict:
    """Rerun the scenario along a decreasing regularization ladder.

    Passes when the space-time L1 distances between successive solutions
    (both fields) and the renormalized-identity residual all decrease
    monotonically along the ladder.  Dissipation budgets are reported per
    rung with a stability flag (the running maximum may not grow by more
    than 20% when the final rung is added); the flag does not decide the
    verdict.
    """
    ladder = tuple(float(e) for e in plan.ladder)
    if len(ladder) < 2:
        raise ValueError("epsilon ladder needs at least two values")
    if any(not (0.0 < e <= 1.0) for e in ladder):
        raise ValueError(f"epsilon values must lie in (0, 1], got {ladder}")
    if not _strictly_decreasing(ladder):
        raise ValueError(f"epsilon ladder must be strictly decreasing, got {ladder}")

    init = make_initial_data(plan.scenario, plan.grid, plan.seed)
    family = _truncation_family(plan)
    xi = Renormalizer(family, plan.trunc_levels[-1])
    psi = _default_test_function(plan.grid.dim, plan.solver.t_end)
    vol = plan.grid.cell_volume

    stores = [_run_store(init, eps, plan.solver, with_records=True) for eps in ladder]
    budgets = [check_budgets(s.records, plan.solver.t_end) for s in stores]
    residuals = [renormalized_residual(s, xi, psi) for s in stores]

    d_u = [float("nan")]
    d_v = [float("nan")]
    for prev, curr in zip(stores, stores[1:]):
        d_u.append(_l1_space_time(curr.times, prev.u_snaps, curr.u_snaps, vol))
        d_v.append(_l1_space_time(curr.times, prev.v_snaps, curr.v_snaps, vol))

    columns = (
        "epsilon",
        "l1_u",
        "l1_v",
        "renorm_residual",
        "renorm_bound",
        "sup_u_logu_abs",
        "sup_grad_v_sq",
        "int_fisher",
        "int_feps_gradv",
        "int_u_pow",
    )
    rows = tuple(
        (
            ladder[i],
            d_u[i],
            d_v[i],
            residuals[i][0],
            residuals[i][1],
            budgets[i].sup_u_logu_abs,
            budgets[i].sup_grad_v_sq,
            budgets[i].int_fisher,
            budgets[i].int_feps_gradv,
            budgets[i].int_u_pow,
        )
        for i in range(len(ladder))
    )

    res_values = [res for res, _ in residuals]
    stable = True
    for name in ("sup_u_logu_abs", "sup_grad_v_sq", "int_fisher", "int_feps_gradv", "int_u_pow"):
        values = [getattr(b, name) for b in budgets]
        head = max(values[:-1])
        full = max(values)
        stable = stable and (full <= 1.2 * head if head > 0.0 else full == 0.0)

    monotone = {
        "l1_u": _strictly_decreasing(d_u[1:]),
        "l1_v": _strictly_decreasing(d_v[1:]),
        "renorm_residual": _strictly_decreasing(res_values),
        "budgets_stable": stable,
    }
    orders = {}
    if len(ladder) >= 3:
        orders = {
            "l1_u": _pair_orders(d_u[1:]),
            "l1_v": _pair_orders(d_v[1:]),
            "renorm_residual": _pair_orders(res_values),
        }
    passed = monotone["l1_u"] and monotone["l1_v"] and monotone["renorm_residual"]
    return StudyVerdict(
        study="epsilon_sweep",
        columns=columns,
        rows=rows,
        monotone=monotone,
        orders=orders,
        passed=passed,
        metrics=plan.metrics,
    )


def truncation_sweep(plan: StudyPlan) -> StudyVerdict:
    """Measure the defect mass of the truncated identity per level.

    One run at ``plan.epsilon``; passes when the defect mass is exactly
    zero for every level above the solution's range and non-increasing
    from the median of the solution upward.  The reported curvature column
    ``sup_second_below_cap`` uses the same dense-scan evaluator as the
    axiom verifier so the two tables agree bitwise.
    """
    family = _truncation_family(plan)
    init = make_initial_data(plan.scenario, plan.grid, plan.seed)
    store = _run_store(init, plan.epsilon, plan.solver, with_records=False)
    report = defect_measures(store, family)

    samples = np.linspace(0.0, TRUNCATION_SUP_CAP, 4001)
    inside = samples[samples <= TRUNCATION_SUP_CAP]
    sup_col = [
        float(np.max(np.abs(truncation_second(family, float(E), inside))))
        for E in plan.trunc_levels
    ]

    columns = ("level", "mu_abs", "sup_second_below_cap")
    rows = tuple(
        (plan.trunc_levels[i], float(report.mu_abs[i]), sup_col[i])
        for i in range(len(plan.trunc_levels))
    )

    levels = np.asarray(plan.trunc_levels)
    mu = np.asarray(report.mu_abs, dtype=np.float64)
    above = levels > report.max_u
    zero_above = bool(np.all(mu[above] == 0.0)) if above.any() else True
    tail = mu[levels >= report.median_u]
    slack = 1e-12 * max(float(mu.max()), 1.0)
    tail_ok = bool(np.all(np.diff(tail) <= slack)) if tail.size >= 2 else True

    monotone = {
        "mu_abs_zero_above_max": zero_above,
        "mu_abs_tail_nonincreasing": tail_ok,
    }
    return StudyVerdict(
        study="truncation_sweep",
        columns=columns,
        rows=rows,
        monotone=monotone,
        orders={},
        passed=zero_above and tail_ok,
        max_u=report.max_u,
        notes=(f"median_u={report.median_u!r}",),
        metrics=plan.metrics,
    )


def refinement_study(plan: StudyPlan) -> StudyVerdict:
    """Joint space-time refinement with ``dt`` locked to the spacing squared.

    Each rung reruns the scenario on ``cells`` per axis with its own time
    step; the truncated-identity residual, the signal-identity residual,
    and the worst energy-inequality violation are measured per rung.
    Passes when every observed order is at least one (pairs of errors at
    the quadrature floor count as converged).
    """
    ladder = tuple((int(n), float(dt)) for n, dt in plan.ladder)
    if len(ladder) < 2:
        raise ValueError("refinement ladder needs at least two rungs")
    cells = [n for n, _ in ladder]
    dts = [dt for _, dt in ladder]
    if any(b <= a for a, b in zip(cells, cells[1:])):
        raise ValueError(f"cell counts must be strictly increasing, got {cells}")
    if any(dt <= 0.0 for dt in dts):
        raise ValueError("time steps must be positive")
    scale = [dt * n * n for n, dt in ladder]
    if max(scale) - min(scale) > 1e-6 * max(scale):
        raise ValueError(
            f"dt must scale like the squared spacing; got dt*n^2 = {scale}"
        )

    family = _truncation_family(plan)
    top = plan.trunc_levels[-1]
    t_end = plan.solver.t_end
    psi_cache: dict = {}

    errs = {"truncated_residual": [], "v_residual": [], "energy_violation": []}
    rows = []
    for n, dt in ladder:
        grid_n = TensorGrid(cells=(n,) * plan.grid.dim, lengths=plan.grid.lengths)
        init = make_initial_data(plan.scenario, grid_n, plan.seed)
        solver_n = replace(plan.solver, dt=dt)
        every = max(1, solver_n.n_steps // 64)
        sinks = DiagnosticsSinks(
            snapshot_every=every, record_every=1, record_fn=compute_record
        )
        store = run(init, Regularization(plan.epsilon), solver_n, sinks)
        psi = psi_cache.setdefault(grid_n.dim, _default_test_function(grid_n.dim, t_end))
        trunc = truncated_identity_residual(store, family, top, psi)
        v_res = v_weak_residual(store, psi)[0]
        energy = check_energy_inequality(store.records, dt, slack=0.0)
        violation = max(energy.worst_violation, 0.0)
        errs["truncated_residual"].append(trunc)
        errs["v_residual"].append(v_res)
        errs["energy_violation"].append(violation)
        rows.append((float(n), dt, trunc, v_res, violation))

    columns = ("cells", "dt", "truncated_residual", "v_residual", "energy_violation")
    monotone = {name: _strictly_decreasing(vals) for name, vals in errs.items()}
    orders = {}
    if len(ladder) >= 3:
        orders = {name: _pair_orders(vals) for name, vals in errs.items()}
        passed = all(all(p >= 1.0 for p in orders[name]) for name in orders)
    else:
        # two rungs: every consecutive pair must at least halve, with pairs
        # already at the quadrature floor counting as converged
        passed = all(
            all(p >= 1.0 for p in _pair_orders(vals)) for vals in errs.values()
        )
    return StudyVerdict(
        study="refinement_study",
        columns=columns,
        rows=tuple(rows),
        monotone=monotone,
        orders=orders,
        passed=passed,
        metrics=plan.metrics,
    )
