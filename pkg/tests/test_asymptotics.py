import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bergman_lab.asymptotics import (
    KernelSource,
    LogValue,
    decay_analysis,
    expansion_analysis,
    expansion_coefficients,
    fit_log_slope,
    localization_analysis,
    ratio_analysis,
    sup_weight,
)
from bergman_lab.geometry import FS, ChartPoint, CutoffProfile, MetricSpec, Mode, distance_to_divisor

import oracles

MODES = ((1, 1, 0.03), (2, 0, 0.02), (2, -1, 0.005))
PERT_CUT = MetricSpec(tuple(Mode(*m) for m in MODES), hsigma_scale=0.9, eta=CutoffProfile(-0.8, -0.16))
FS_CUT = MetricSpec(hsigma_scale=1.0, eta=CutoffProfile(-0.8, -0.16))

# frozen: log of the exact binomial tail at p = 2000 (mpmath, 40 digits) divided by p
RATE_2000 = -1.6175957058903552
# frozen: sum_{k<15} C(50,k) 9^k / 10^50, log-domain
LOG_DELTA50_U9 = -56.75849061834133


def test_fit_exact_affine():
    fit = fit_log_slope([(p, LogValue(-0.7 * p + 3)) for p in range(10, 20)])
    assert fit.slope == pytest.approx(-0.7, abs=1e-13)
    assert fit.intercept == pytest.approx(3, abs=1e-11)
    assert fit.residual_max < 1e-12
    assert fit.p_range == (10, 19)


def test_fit_constant_and_errors():
    assert fit_log_slope([(p, 2.5) for p in range(5)]).slope == 0
    with pytest.raises(ValueError, match="at least 4"):
        fit_log_slope([(p, 1.0) for p in range(10)], p_min=7)
    with pytest.raises(ValueError, match="non-finite"):
        fit_log_slope([(1, 1.0), (2, math.nan), (3, 0.0), (4, 0.0)])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=4, max_size=20), st.integers(-100, 100))
def test_fit_translation_equivariant(ys, shift):
    a = fit_log_slope([(p + 10, y) for p, y in enumerate(ys)])
    b = fit_log_slope([(p + 10 + abs(shift), y) for p, y in enumerate(ys)])
    assert b.slope == pytest.approx(a.slope, rel=1e-9, abs=1e-9)


def test_rate_against_exact_tail():
    # closed form H(1/2) + log(u)/2 - log(1+u), and the frozen p = 2000 tail
    closed = math.log(2) + 0.5 * math.log(0.01) - math.log(1.01)
    assert closed == pytest.approx(-1.6194, abs=1e-4)
    assert RATE_2000 == pytest.approx(closed, rel=0.02)
    p = np.arange(100, 201, 10)
    src = KernelSource(FS, "oracle")
    logs = [src.log_kernel(int(q), Fraction(1, 2), np.array([0]), np.array([0.1 + 0j]), "partial")[0] for q in p]
    fit = fit_log_slope(zip(p, logs))
    assert fit.slope == pytest.approx(closed, rel=0.02)
    assert fit.slope == pytest.approx(RATE_2000, rel=0.02)


def test_rate_oracle_reproduces_frozen():
    val = oracles.mp.log(oracles.fs_partial(2000, 1000, oracles.mp.mpf("0.01"))) / 2000
    assert float(val) == pytest.approx(RATE_2000, abs=1e-13)


def test_expansion_coefficients_fs():
    for z in (0.3 + 0.1j, -0.8j, 0.05):
        ec = expansion_coefficients(FS, ChartPoint(0, z))
        assert ec.b0 == pytest.approx(1, abs=1e-8)
        assert ec.b1 == pytest.approx(1, abs=1e-4)


def test_expansion_coefficients_perturbed_symbolic():
    for z in (0.3 + 0.2j, 0.9 - 0.4j, 0.05j):
        ec = expansion_coefficients(PERT_CUT, ChartPoint(0, z))
        assert ec.b0 > 0
        assert ec.b1 == pytest.approx(oracles.b1(MODES, z), abs=1e-4)


def test_fs_full_kernel_matches_expansion_exactly():
    for p in range(1, 41):
        assert math.exp(KernelSource(FS, "oracle").log_kernel(p, Fraction(1, 2), np.array([0]), np.array([0.5]), "full")[0]) == pytest.approx(p + 1, abs=1e-6)


def test_sup_weight_fs():
    assert sup_weight(FS) == pytest.approx(0.5 * math.log(2), abs=1e-14)


def test_decay_fs_example():
    rep = decay_analysis(FS, Fraction(1, 2), [ChartPoint(0, 0.1)], list(range(100, 201, 10)))
    assert rep.passed
    assert rep.fitted["L[0]"] == pytest.approx(-1.6194, rel=0.02)
    assert rep.fitted["2t_rho[0]"] == pytest.approx(-2.3076, abs=1e-4)
    assert rep.fitted["h_sup"] == pytest.approx(0.5 * math.log(2))


def test_decay_not_in_regime():
    rep = decay_analysis(FS, Fraction(1, 100), [ChartPoint(0, 0.1)], [10, 20, 30, 40, 50, 60, 70, 80, 90])
    assert any("not in decay regime" in f for f in rep.flags)
    assert not rep.passed


def test_decay_rejects_non_finite_and_bad_points():
    with pytest.raises(ValueError):
        decay_analysis(FS, Fraction(1, 2), [ChartPoint(0, 0)], [10, 20, 30, 40])


def test_decay_lower_rate_property():
    pts = [ChartPoint(0, r * np.exp(1j * th)) for r, th in ((0.05, 0.0), (0.2, 1.0), (0.5, 2.0))]
    for t in (Fraction(3, 10), Fraction(1, 2), Fraction(7, 10)):
        rep = decay_analysis(FS, t, pts, list(range(100, 301, 20)))
        for i in range(len(pts)):
            L, lb = rep.fitted[f"L[{i}]"], rep.fitted[f"2t_rho[{i}]"]
            assert lb - 1e-3 <= L < 0


def test_decay_perturbed_quadrature():
    pts = [ChartPoint(0, 0.05), ChartPoint(0, 0.1j)]
    rep = decay_analysis(PERT_CUT, Fraction(1, 10), pts, list(range(20, 61, 4)))
    assert rep.verdicts["Thm1.1:exp-decay"].passed and rep.verdicts["e:exp2:lower-rate"].passed


def test_ratio_fs_fixed_point():
    fs1 = MetricSpec(hsigma_scale=1.0)
    rep = ratio_analysis(fs1, Fraction(3, 10), 1.0, list(range(50, 301, 25)), fixed_points=[ChartPoint(0, 1.0)])
    assert rep.passed
    d1 = distance_to_divisor(ChartPoint(0, 1.0))
    rows = [r for r in rep.rows if r[1] == d1]
    ps = [r[0] for r in rows]
    dev = [abs(r[2] - 1) for r in rows]
    assert ps == list(range(50, 301, 25))
    # |ratio - 1| decays at least like p^{-1/8}
    assert all(d * p**0.125 <= dev[0] * 50**0.125 + 1e-15 for p, d in zip(ps, dev))


def test_ratio_precondition():
    with pytest.raises(ValueError, match="t0"):
        ratio_analysis(PERT_CUT, Fraction(1, 2), 1.0, [20, 30, 40, 50])


def test_ratio_perturbed_quadrature():
    rep = ratio_analysis(PERT_CUT, Fraction(1, 10), 1.0, list(range(20, 61, 4)))
    assert rep.passed
    assert math.isfinite(rep.fitted["C_empirical"])


def test_localization_fs_u9():
    rep = localization_analysis(FS_CUT, Fraction(3, 10), [ChartPoint(1, 1 / 3)], list(range(20, 61, 5)))
    assert rep.passed
    d50 = [r[2] for r in rep.rows if r[1] == 50][0]
    assert d50 == pytest.approx(LOG_DELTA50_U9, abs=1e-9)
    assert d50 < math.log(1e-20)


def test_localization_m0_identical_spaces():
    rep = localization_analysis(FS_CUT, Fraction(1, 100), [ChartPoint(1, 0.2)], [10, 20, 30, 40, 50, 60, 70, 80, 90])
    assert rep.passed
    assert all(r[2] == -math.inf for r in rep.rows)


def test_localization_regime_flag():
    rep = localization_analysis(FS_CUT, Fraction(3, 10), [ChartPoint(0, 0.1)], [20, 30, 40, 50])
    assert any("not in localization regime" in f for f in rep.flags)
    assert not rep.passed
    rep = localization_analysis(FS, Fraction(3, 10), [ChartPoint(1, 0.1)], [20, 30, 40, 50])
    assert not rep.passed


def test_localization_perturbed_quadrature():
    m = MetricSpec(PERT_CUT.perturbation, hsigma_scale=0.9, eta=CutoffProfile(-1.2, -0.3))
    pts = [ChartPoint(1, math.sqrt(0.3 / 0.7) * np.exp(0.3j)), ChartPoint(1, math.sqrt(0.2 / 0.8) * np.exp(4j))]
    rep = localization_analysis(m, Fraction(1, 2), pts, list(range(20, 61, 4)))
    assert rep.passed
    assert all(v <= -0.1 for k, v in rep.fitted.items() if k.startswith("slope"))


def test_expansion_fs():
    rep = expansion_analysis(FS_CUT, Fraction(3, 10), [ChartPoint(1, 1 / 3), ChartPoint(1, 0.1 - 0.2j)],
                             list(range(20, 61, 5)), tol_resid=1e-6)
    assert rep.passed
    for _, b0h, b1h, b0, b1 in rep.rows:
        assert b0h == pytest.approx(1, abs=1e-6) and b1h == pytest.approx(1, abs=1e-6)


def test_expansion_regime_flag():
    rep = expansion_analysis(FS_CUT, Fraction(3, 10), [ChartPoint(0, 0.1)], [20, 30, 40, 50])
    assert any("not in localization regime" in f for f in rep.flags)


def test_expansion_perturbed_quadrature():
    pts = [ChartPoint(1, 0.2 + 0.1j), ChartPoint(1, -0.15j), ChartPoint(1, 0.3)]
    rep = expansion_analysis(PERT_CUT, Fraction(1, 10), pts, list(range(20, 61, 4)))
    assert rep.passed
    # the regression agrees with the symbolic b1 as well as with the finite-difference one
    for (i, b0h, b1h, b0, b1), x in zip(rep.rows, pts):
        assert b1h == pytest.approx(oracles.b1(MODES, 1 / x.z), rel=0.05)
