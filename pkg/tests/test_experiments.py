"""Tests for scenario generation and the three parameter studies.

Oracles used here:
  * constant/gaussian scenarios admit closed-form field values, asserted
    bitwise against direct formulas;
  * the band-limited random scenario is resolution-independent by
    construction, so its second differences must be stable under grid
    refinement (rough noise would grow like 1/h^2);
  * the truncation sweep's curvature column must equal, bitwise, the
    column produced by the axiom verifier on the same sample set;
  * study verdicts must be bit-reproducible from an identical plan.
"""

import math

import numpy as np
import pytest

from chemotaxis_lab.dynamics import SolverConfig
from chemotaxis_lab.experiments import (
    DEFAULT_TRUNCATION_LEVELS,
    TRUNCATION_SUP_CAP,
    ScenarioSpec,
    StudyPlan,
    epsilon_sweep,
    make_initial_data,
    refinement_study,
    truncation_sweep,
)
from chemotaxis_lab.grid import TensorGrid
from chemotaxis_lab.regularization import (
    CutoffProfile,
    TruncationFamily,
    verify_truncation_axioms,
)

GRID12 = TensorGrid(cells=(12, 12), lengths=(1.0, 1.0))

GAUSSIAN = ScenarioSpec(
    kind="gaussian",
    u_floor=0.5,
    u_amplitude=2.0,
    u_width=0.15,
    v_base=1.0,
    v_amplitude=0.5,
)

SOLVER = SolverConfig(dt=5e-4, t_end=0.02)


def _plan(**overrides) -> StudyPlan:
    base = dict(
        scenario=GAUSSIAN,
        grid=GRID12,
        solver=SOLVER,
        epsilon=0.5,
        ladder=(1.0, 0.5, 0.25),
        seed=7,
    )
    base.update(overrides)
    return StudyPlan(**base)


# ---------------------------------------------------------------------------
# scenario generation
# ---------------------------------------------------------------------------


def test_constant_scenario_is_exactly_constant():
    spec = ScenarioSpec(kind="constant", u_floor=0.7, u_amplitude=0.3, v_base=1.25)
    init = make_initial_data(spec, GRID12, seed=0)
    assert np.all(init.u0.values == 1.0)
    assert np.all(init.v0.values == 1.25)


def test_gaussian_scenario_matches_direct_formula():
    grid = TensorGrid(cells=(16, 16), lengths=(1.0, 1.0))
    init = make_initial_data(GAUSSIAN, grid, seed=0)
    xs = grid.center_mesh()
    r2 = (xs[0] - 0.5) ** 2 + (xs[1] - 0.5) ** 2
    u_expected = 0.5 + 2.0 * np.exp(-r2 / (2.0 * 0.15**2))
    v_expected = 1.0 + 0.5 * np.cos(np.pi * xs[0]) * np.cos(np.pi * xs[1])
    assert np.array_equal(init.u0.values, u_expected)
    assert np.array_equal(init.v0.values, v_expected)
    # peak sits at the domain centre, floor is respected
    assert init.u0.values.max() == u_expected.max()
    assert init.u0.values.min() >= 0.5
    assert init.v0.values.min() > 0.0


def test_random_smooth_scenario_is_seed_deterministic():
    spec = ScenarioSpec(kind="random-smooth", u_floor=0.4, u_amplitude=1.5)
    a = make_initial_data(spec, GRID12, seed=11)
    b = make_initial_data(spec, GRID12, seed=11)
    c = make_initial_data(spec, GRID12, seed=12)
    assert np.array_equal(a.u0.values, b.u0.values)
    assert np.array_equal(a.v0.values, b.v0.values)
    assert not np.array_equal(a.u0.values, c.u0.values)


def test_random_smooth_scenario_respects_floor_and_range():
    spec = ScenarioSpec(
        kind="random-smooth", u_floor=0.4, u_amplitude=1.5, v_base=1.0, v_amplitude=0.5
    )
    init = make_initial_data(spec, GRID12, seed=3)
    u = init.u0.values
    v = init.v0.values
    # the noise profile is normalized to [0, 1] before scaling
    assert u.min() == 0.4
    assert u.max() <= 0.4 + 1.5 + 1e-12
    assert v.min() >= 1.0
    assert v.max() <= 1.5 + 1e-12


def test_random_smooth_scenario_is_band_limited():
    # A band-limited profile is a fixed smooth function of x, so the max
    # magnitude of its discrete Laplacian is grid-stable. Unfiltered noise
    # would grow like 1/h^2 (x16 here).
    from chemotaxis_lab.grid import laplacian_neumann

    spec = ScenarioSpec(kind="random-smooth", u_floor=0.4, u_amplitude=1.5)
    coarse = make_initial_data(spec, TensorGrid(cells=(16, 16), lengths=(1.0, 1.0)), seed=5)
    fine = make_initial_data(spec, TensorGrid(cells=(64, 64), lengths=(1.0, 1.0)), seed=5)
    lap_coarse = float(np.max(np.abs(laplacian_neumann(coarse.u0).values)))
    lap_fine = float(np.max(np.abs(laplacian_neumann(fine.u0).values)))
    assert lap_fine <= 1.3 * lap_coarse
    assert lap_coarse <= 1.3 * lap_fine


def test_scenario_validation_rejects_bad_parameters():
    with pytest.raises(ValueError):
        ScenarioSpec(kind="plaid")
    with pytest.raises(ValueError):
        ScenarioSpec(kind="constant", u_floor=0.0)
    with pytest.raises(ValueError):
        ScenarioSpec(kind="gaussian", u_width=-0.1)
    with pytest.raises(ValueError):
        ScenarioSpec(kind="gaussian", u_amplitude=-1.0)
    with pytest.raises(ValueError):
        ScenarioSpec(kind="gaussian", v_base=0.5, v_amplitude=0.5)
    with pytest.raises(ValueError):
        make_initial_data(
            ScenarioSpec(kind="gaussian", u_center=(0.5, 0.5, 0.5)), GRID12, seed=0
        )


# ---------------------------------------------------------------------------
# plan validation
# ---------------------------------------------------------------------------


def test_plan_validation():
    with pytest.raises(ValueError):
        _plan(ladder=())
    with pytest.raises(ValueError):
        _plan(epsilon=0.0)
    with pytest.raises(ValueError):
        _plan(epsilon=1.5)
    with pytest.raises(ValueError):
        _plan(metrics=("no-such-metric",))
    with pytest.raises(ValueError):
        _plan(trunc_levels=(4.0, 2.0))


def test_epsilon_ladder_validation():
    with pytest.raises(ValueError):
        epsilon_sweep(_plan(ladder=(0.25, 0.5, 1.0)))  # must decrease
    with pytest.raises(ValueError):
        epsilon_sweep(_plan(ladder=(0.5,)))  # needs at least two runs
    with pytest.raises(ValueError):
        epsilon_sweep(_plan(ladder=(2.0, 1.0)))  # outside (0, 1]


def test_refinement_ladder_validation():
    with pytest.raises(ValueError):
        refinement_study(_plan(ladder=((8, 1e-3),)))  # needs >= 2 rungs
    with pytest.raises(ValueError):
        refinement_study(_plan(ladder=((16, 1e-3), (8, 4e-3))))  # cells must grow
    with pytest.raises(ValueError):
        # dt must scale like the square of the spacing
        refinement_study(_plan(ladder=((8, 1e-3), (16, 1e-3))))


# ---------------------------------------------------------------------------
# epsilon sweep
# ---------------------------------------------------------------------------


def test_epsilon_sweep_distances_and_residuals_decrease():
    verdict = epsilon_sweep(_plan())
    assert verdict.study == "epsilon_sweep"
    assert len(verdict.rows) == 3
    cols = verdict.columns
    i_eps = cols.index("epsilon")
    i_u = cols.index("l1_u")
    i_v = cols.index("l1_v")
    i_res = cols.index("renorm_residual")
    eps_col = [row[i_eps] for row in verdict.rows]
    assert eps_col == [1.0, 0.5, 0.25]
    assert math.isnan(verdict.rows[0][i_u]) and math.isnan(verdict.rows[0][i_v])
    d_u = [row[i_u] for row in verdict.rows[1:]]
    d_v = [row[i_v] for row in verdict.rows[1:]]
    res = [row[i_res] for row in verdict.rows]
    assert all(x > 0.0 for x in d_u + d_v)
    assert d_u[0] > d_u[1] and d_v[0] > d_v[1]
    assert res[0] > res[1] > res[2] > 0.0
    assert verdict.monotone["l1_u"] and verdict.monotone["l1_v"]
    assert verdict.monotone["renorm_residual"]
    assert verdict.passed


def test_epsilon_sweep_budgets_stay_stable_when_ladder_extends():
    verdict = epsilon_sweep(_plan(ladder=(1.0, 0.5, 0.25, 0.125)))
    assert verdict.monotone["budgets_stable"] is True
    # stability is reported but must not decide the verdict
    assert verdict.passed == (
        verdict.monotone["l1_u"]
        and verdict.monotone["l1_v"]
        and verdict.monotone["renorm_residual"]
    )


def test_epsilon_sweep_is_bit_reproducible():
    a = epsilon_sweep(_plan())
    b = epsilon_sweep(_plan())
    np.testing.assert_array_equal(np.asarray(a.rows, dtype=np.float64),
                                  np.asarray(b.rows, dtype=np.float64))
    assert a.summary_lines() == b.summary_lines()
    assert a.monotone == b.monotone and a.orders == b.orders and a.passed == b.passed


def test_epsilon_sweep_orders_only_with_enough_points():
    short = epsilon_sweep(_plan(ladder=(1.0, 0.5)))
    assert short.orders == {}
    long = epsilon_sweep(_plan(ladder=(1.0, 0.5, 0.25, 0.125)))
    assert set(long.orders) == {"l1_u", "l1_v", "renorm_residual"}
    assert len(long.orders["l1_u"]) == 2  # three distances -> two ratios
    assert len(long.orders["renorm_residual"]) == 3


# ---------------------------------------------------------------------------
# truncation sweep
# ---------------------------------------------------------------------------


def test_truncation_sweep_defect_column_rules():
    levels = (0.5, 1.0, 2.0, 4.0, 8.0)
    verdict = truncation_sweep(_plan(trunc_levels=levels))
    assert verdict.study == "truncation_sweep"
    assert [row[0] for row in verdict.rows] == list(levels)
    i_mu = verdict.columns.index("mu_abs")
    mu = [row[i_mu] for row in verdict.rows]
    max_u = verdict.max_u
    assert 2.0 < max_u < 4.0  # gaussian peak 2.5, mild transport
    for level, value in zip(levels, mu):
        if level > max_u:
            assert value == 0.0
        else:
            assert value >= 0.0
    assert any(value > 0.0 for value in mu)
    assert verdict.monotone["mu_abs_zero_above_max"]
    assert verdict.monotone["mu_abs_tail_nonincreasing"]
    assert verdict.passed


def test_truncation_sweep_curvature_column_matches_axiom_verifier():
    levels = (0.5, 1.0, 2.0, 4.0, 8.0)
    verdict = truncation_sweep(_plan(trunc_levels=levels))
    family = TruncationFamily(CutoffProfile.smooth_bump(), levels)
    samples = np.linspace(0.0, TRUNCATION_SUP_CAP, 4001)
    report = verify_truncation_axioms(family, samples, k_values=(TRUNCATION_SUP_CAP,))
    expected = report.sup_second_by_k[TRUNCATION_SUP_CAP]
    i_sup = verdict.columns.index("sup_second_below_cap")
    actual = np.array([row[i_sup] for row in verdict.rows])
    assert np.array_equal(actual, expected)


def test_default_truncation_levels_are_dyadic():
    assert DEFAULT_TRUNCATION_LEVELS == tuple(float(2**k) for k in range(1, 11))


# ---------------------------------------------------------------------------
# refinement study
# ---------------------------------------------------------------------------


def _refinement_plan():
    t_end = 0.04
    ladder = tuple((n, 2.0 * t_end / n**2) for n in (8, 16, 32))
    solver = SolverConfig(dt=ladder[0][1], t_end=t_end)
    return _plan(solver=solver, ladder=ladder)


def test_refinement_study_errors_shrink_at_first_order():
    verdict = refinement_study(_refinement_plan())
    assert verdict.study == "refinement_study"
    assert len(verdict.rows) == 3
    cols = verdict.columns
    for name in ("truncated_residual", "v_residual", "energy_violation"):
        idx = cols.index(name)
        errs = [row[idx] for row in verdict.rows]
        assert all(e >= 0.0 for e in errs)
        orders = verdict.orders[name]
        assert len(orders) == 2
        assert all(p >= 1.0 for p in orders)
    assert verdict.passed


def test_refinement_study_is_bit_reproducible():
    a = refinement_study(_refinement_plan())
    b = refinement_study(_refinement_plan())
    np.testing.assert_array_equal(np.asarray(a.rows, dtype=np.float64),
                                  np.asarray(b.rows, dtype=np.float64))
    assert a.summary_lines() == b.summary_lines()


# ---------------------------------------------------------------------------
# verdict summaries
# ---------------------------------------------------------------------------


def test_summary_lines_are_canonical():
    verdict = epsilon_sweep(_plan())
    lines = verdict.summary_lines()
    assert lines[-1] == f"epsilon_sweep,verdict,passed,{verdict.passed}"
    for line in lines:
        parts = line.split(",")
        assert len(parts) == 4
        assert parts[0] == "epsilon_sweep"
    # every numeric value prints at full round-trip precision
    i_res = verdict.columns.index("renorm_residual")
    expected = repr(float(verdict.rows[-1][i_res]))
    assert f"epsilon_sweep,renorm_residual,last,{expected}" in lines


def test_metric_selection_filters_summary():
    verdict = epsilon_sweep(_plan(metrics=("l1_u",)))
    lines = verdict.summary_lines()
    stats = {line.split(",")[1] for line in lines}
    assert "l1_u" in stats
    assert "l1_v" not in stats
    assert "verdict" in stats
