"""Logarithmic flux limiter and the plateau truncation family.

Frozen oracle values below were computed independently with mpmath at 40
digits before the module existed:

    phi(0.25)  = 0.9350308308713359378724572
    phi(0.5)   = 0.5                (symmetry of the bump)
    phi'(0.5)  = -2                 (exact)
    phi'(0.25) = -1.0799675767359130083
    phi''(0.25) = -9.216907191396424943681897
    trunc(E=4, v=5) = 5.4547841839006484348928
    trunc(E=4, v=6) = 9.0
    trunc(E=4, v=7) = 11.67515415435667968936229

and the measured plateau constants came out near K1 ~ 24.37, K2 ~ 3.749.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from chemotaxis_lab.regularization import (
    CutoffProfile,
    Regularization,
    TruncationFamily,
    f_eps,
    f_eps_prime,
    truncation_prime,
    truncation_second,
    truncation_value,
    verify_truncation_axioms,
)

DYADIC = tuple(float(2**j) for j in range(0, 8))


@pytest.fixture(scope="module")
def bump():
    return CutoffProfile.smooth_bump()


@pytest.fixture(scope="module")
def family(bump):
    return TruncationFamily(bump, DYADIC)


# ---------------------------------------------------------------------------
# flux limiter


def test_regularization_validates_epsilon():
    Regularization(1.0)
    Regularization(1e-6)
    for bad in (0.0, -0.5, 1.5, float("nan")):
        with pytest.raises(ValueError):
            Regularization(bad)


def test_f_eps_point_oracles():
    r1 = Regularization(1.0)
    assert f_eps(r1, math.e - 1.0) == pytest.approx(1.0, rel=1e-14)
    assert f_eps_prime(r1, math.e - 1.0) == pytest.approx(1.0 / math.e, rel=1e-14)
    r2 = Regularization(0.5)
    assert f_eps(r2, 2.0) == pytest.approx(2.0 * math.log(2.0), rel=1e-14)
    assert f_eps(r2, 0.0) == 0.0


@pytest.mark.parametrize("eps", [1.0, 0.5, 0.25, 0.125, 1e-3])
def test_f_eps_bounds_on_log_spaced_samples(eps):
    reg = Regularization(eps)
    s = np.logspace(-8, 9, 20000)
    fp = f_eps_prime(reg, s)
    f = f_eps(reg, s)
    assert np.all(fp >= 0.0) and np.all(fp <= 1.0)
    assert np.all(f >= 0.0) and np.all(f <= s)
    assert np.all(s * fp <= 1.0 / eps)


def test_f_eps_monotone_in_epsilon_and_converges_to_identity():
    s = np.logspace(-4, 3, 500)
    lower = f_eps(Regularization(1.0), s)
    for eps in (0.5, 0.25, 0.125, 0.0625):
        cur = f_eps(Regularization(eps), s)
        assert np.all(cur >= lower - 1e-13 * (1.0 + s))
        # quadratic remainder bound: 0 <= s - F_eps(s) <= eps s^2 / 2
        assert np.all(s - cur <= eps * s**2 / 2.0 + 1e-12)
        lower = cur


# ---------------------------------------------------------------------------
# bump profile oracles


def test_bump_frozen_values(bump):
    assert bump.value(0.5) == pytest.approx(0.5, abs=1e-15)
    assert bump.value(0.25) == pytest.approx(0.9350308308713359, rel=1e-13)
    assert bump.value(0.75) == pytest.approx(1.0 - 0.9350308308713359, rel=1e-12)
    assert bump.deriv(0.5) == pytest.approx(-2.0, rel=1e-13)
    assert bump.deriv(0.25) == pytest.approx(-1.0799675767359130, rel=1e-12)
    assert bump.deriv2(0.25) == pytest.approx(-9.216907191396425, rel=1e-12)
    assert abs(bump.deriv2(0.5)) < 1e-12


def test_bump_exact_limits_outside_and_in_guard_band(bump):
    for x in (-3.0, -1e-9, 0.0, 1e-5, 1e-4):
        assert bump.value(x) == 1.0
        assert bump.deriv(x) == 0.0
        assert bump.deriv2(x) == 0.0
    for x in (1.0 - 1e-5, 1.0, 1.0 + 1e-9, 5.0):
        assert bump.value(x) == 0.0
        assert bump.deriv(x) == 0.0
        assert bump.deriv2(x) == 0.0


def test_bump_monotone_and_bounded(bump):
    x = np.linspace(-0.5, 1.5, 4001)
    vals = bump.value(x)
    assert np.all(vals >= 0.0) and np.all(vals <= 1.0)
    assert np.all(np.diff(vals) <= 1e-15)
    assert np.all(bump.deriv(x) <= 0.0)


def test_bump_derivatives_consistent_with_finite_differences(bump):
    x = np.linspace(0.05, 0.95, 181)
    h = 1e-6
    fd1 = (bump.value(x + h) - bump.value(x - h)) / (2 * h)
    fd2 = (bump.value(x + h) - 2 * bump.value(x) + bump.value(x - h)) / h**2
    assert np.max(np.abs(fd1 - bump.deriv(x))) < 1e-7
    assert np.max(np.abs(fd2 - bump.deriv2(x))) < 1e-3


# ---------------------------------------------------------------------------
# truncation family


def test_truncation_point_oracles(family):
    E = 4.0
    assert truncation_value(family, E, 2.0) == 2.0  # identity below E, bitwise
    assert truncation_value(family, E, 3.999) == 3.999
    assert truncation_value(family, E, 9.0) == 12.0  # plateau at 3E, bitwise
    assert truncation_value(family, E, 6.0) == pytest.approx(9.0, rel=1e-13)
    assert truncation_value(family, E, 5.0) == pytest.approx(5.4547841839006484, rel=1e-13)
    assert truncation_value(family, E, 7.0) == pytest.approx(11.675154154356680, rel=1e-13)


def test_truncation_identity_below_level_is_bitwise(family):
    rng = np.random.default_rng(42)
    for E in (2.0, 8.0, 64.0):
        v = rng.uniform(0.0, np.nextafter(E, 0.0), size=2000)
        out = truncation_value(family, E, v)
        assert np.array_equal(out, v)


def test_truncation_plateau_and_derivative_supports(family):
    E = 8.0
    v_low = np.linspace(0.0, E * (1.0 - 1e-12), 500)
    v_high = np.linspace(2 * E, 10 * E, 500)
    assert np.all(truncation_prime(family, E, v_low) == 1.0)
    assert np.all(truncation_second(family, E, v_low) == 0.0)
    assert np.all(truncation_value(family, E, v_high) == 3 * E)
    assert np.all(truncation_prime(family, E, v_high) == 0.0)
    assert np.all(truncation_second(family, E, v_high) == 0.0)


def test_truncation_scale_invariance_of_weighted_second(family):
    # v * phi_E''(v) depends only on t = v/E - 1
    t = np.linspace(0.01, 0.99, 97)
    v_ref = 2.0 * (1.0 + t)
    ref = v_ref * truncation_second(family, 2.0, v_ref)
    scale = np.max(np.abs(ref))
    assert scale > 1.0  # the band is genuinely active
    for E in (4.0, 32.0, 128.0):
        v = E * (1.0 + t)
        cur = v * truncation_second(family, E, v)
        assert np.max(np.abs(cur - ref)) <= 1e-11 * scale


def test_truncation_errors(family):
    with pytest.raises(ValueError):
        truncation_value(family, 3.0, 1.0)  # 3 is not a family level
    with pytest.raises(ValueError):
        truncation_value(family, 4.0, -0.5)
    with pytest.raises(ValueError):
        TruncationFamily(CutoffProfile.smooth_bump(), (4.0, 2.0))  # not increasing
    with pytest.raises(ValueError):
        TruncationFamily(CutoffProfile.smooth_bump(), (0.0, 2.0))  # non-positive


def test_measured_constants_are_in_expected_brackets(family):
    # independent mpmath scan gave K1 ~ 24.372, K2 ~ 3.7486
    assert 20.0 <= family.k1 <= 30.0
    assert 3.5 <= family.k2 <= 4.0


# ---------------------------------------------------------------------------
# axiom verification


def _samples():
    return np.concatenate([np.linspace(0.0, 300.0, 6001), np.logspace(-3, 3, 500)])


def test_axiom_report_passes_for_smooth_bump(family):
    report = verify_truncation_axioms(family, _samples(), k_values=(1.0, 10.0, 100.0))
    failed = [c.axiom for c in report.checks if not c.passed]
    assert report.passed, f"failed axioms: {failed}"
    names = {c.axiom for c in report.checks}
    assert names == {"E1", "E2", "E3", "E4", "E5", "E6", "E7"}


def test_axiom_e7_sup_table_decreases_then_vanishes(family):
    report = verify_truncation_axioms(family, _samples(), k_values=(10.0,))
    sups = report.sup_second_by_k[10.0]
    levels = np.asarray(family.levels)
    pos = sups[levels <= 10.0]
    assert np.all(np.diff(pos) < 0.0)  # strictly decreasing while the band bites
    assert np.all(sups[levels > 10.0] == 0.0)  # exactly zero once E > K


def test_step_profile_fails_smoothness_axiom():
    step = CutoffProfile(
        value=lambda x: np.where(np.asarray(x, dtype=float) < 0.5, 1.0, 0.0),
        deriv=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        deriv2=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
    )
    fam = TruncationFamily(step, (2.0, 4.0))
    report = verify_truncation_axioms(fam, _samples(), k_values=(10.0,))
    by_name = {c.axiom: c for c in report.checks}
    assert not by_name["E1"].passed
    assert not report.passed


def test_profile_without_plateau_fails_support_axiom():
    flat = CutoffProfile(
        value=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        deriv=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        deriv2=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
    )
    fam = TruncationFamily(flat, (2.0, 4.0))
    report = verify_truncation_axioms(fam, _samples(), k_values=(10.0,))
    by_name = {c.axiom: c for c in report.checks}
    assert not by_name["E3"].passed
    assert not report.passed
