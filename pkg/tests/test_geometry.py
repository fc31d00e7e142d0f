import math
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bergman_lab.geometry import (
    FS,
    ChartPoint,
    CutoffProfile,
    DegenerateMetricError,
    DivisorError,
    MetricSpec,
    Mode,
    curvature_density,
    density_field,
    distance_to_divisor,
    estimate_t0,
    eta_at,
    metric_laplacian_log_density,
    point_at_distance,
    rho_at,
    rho_field,
    scalar_curvature_at,
    scalar_curvature_field,
    weight_at,
)
from bergman_lab.quadrature import QuadratureRule, integrate_sphere

import oracles

MODES = ((1, 1, 0.03), (2, 0, 0.02), (2, -1, 0.005))
PERT = MetricSpec(perturbation=tuple(Mode(*m) for m in MODES), hsigma_scale=0.9)

# frozen from the sympy oracle (tests/oracles.py)
SYMPY_FROZEN = [
    # z, density, scalar curvature, b1
    (0.3 + 0.2j, 0.9212655650403321, 19.77353851830448, 1.2751813274113946),
    (-0.7 + 0.1j, 0.96, 29.64718987336253, 0.8675607638888889),
    (0.05j, 0.7457165067381422, -0.004196269066477219, 2.000124507990637),
    (0.9 - 0.4j, 1.230674328119766, 28.30555025943481, 0.6139628092861789),
]

disk = st.tuples(st.floats(0.02, 0.99), st.floats(0, 2 * math.pi)).map(lambda a: a[0] * complex(math.cos(a[1]), math.sin(a[1])))


def test_weight_examples():
    assert weight_at(FS, ChartPoint(0, 0)) == 0.0
    assert weight_at(FS, ChartPoint(0, 1)) == pytest.approx(0.3465735903, abs=1e-10)
    fs1 = MetricSpec(hsigma_scale=1.0)
    assert weight_at(fs1, ChartPoint(0, 1), ("singular", 0.5)) == pytest.approx(0.1732867951, abs=1e-10)
    assert weight_at(fs1, ChartPoint(0, 1), 0.5) == pytest.approx(0.5 * math.log(2) + 0.5 * rho_at(fs1, ChartPoint(0, 1)))


def test_weight_singular_at_divisor_signals():
    with pytest.raises(DivisorError):
        weight_at(FS, ChartPoint(0, 0), ("singular", 0.3))
    with pytest.raises(DivisorError):
        rho_at(FS, ChartPoint(0, 0))


def test_rho_examples():
    assert rho_at(MetricSpec(hsigma_scale=1.0), ChartPoint(0, 1)) == pytest.approx(-0.3465735903, abs=1e-10)
    assert rho_at(MetricSpec(hsigma_scale=0.9), ChartPoint(1, 0)) == pytest.approx(-0.1053605157, abs=1e-10)
    assert rho_at(MetricSpec(hsigma_scale=1.0), ChartPoint(1, 0)) == 0.0


def test_rho_negative_on_million_points():
    m = MetricSpec(hsigma_scale=0.9)
    rng = np.random.default_rng(7)
    n = 500_000
    for chart in (0, 1):
        z = np.sqrt(rng.uniform(1e-12, 1, n)) * np.exp(2j * np.pi * rng.uniform(size=n))
        assert np.max(rho_field(m, np.full(n, chart), z)) < 0


def test_eta_plateaus_and_midpoint():
    prof = CutoffProfile(-0.8, -0.2)
    assert prof(-0.9) == 1.0 and prof(-0.8) == 1.0
    assert prof(-0.1) == 0.0 and prof(-0.2) == 0.0
    assert prof(-0.5) == pytest.approx(0.5, abs=1e-15)
    vals = prof(np.linspace(-1, 0, 1001))
    assert np.all((vals >= 0) & (vals <= 1))
    m = MetricSpec(hsigma_scale=1.0, eta=prof)
    # z = 1 has rho = -log(2)/2 = -0.3466 inside the transition
    assert 0 < eta_at(m, ChartPoint(0, 1)) < 1
    assert eta_at(MetricSpec(), ChartPoint(0, 0.3)) == 1.0


def test_eta_smooth_across_transition():
    prof = CutoffProfile(-0.8, -0.2)
    h = 1e-4
    x = np.linspace(-0.9, -0.1, 4001)
    d1 = (prof(x + h) - prof(x - h)) / (2 * h)
    d2 = (prof(x + h) - 2 * prof(x) + prof(x - h)) / h**2
    # derivatives stay bounded and continuous: no jumps between neighbours
    assert np.max(np.abs(np.diff(d1))) < 1e-2
    assert np.max(np.abs(np.diff(d2))) < 0.5
    assert abs(d1[0]) < 1e-12 and abs(d1[-1]) < 1e-12


def test_cutoff_validation():
    with pytest.raises(ValueError):
        CutoffProfile(-0.1, -0.2)
    with pytest.raises(ValueError):
        CutoffProfile(-0.2, 0.1)


@settings(max_examples=60, deadline=None)
@given(disk, st.integers(0, 1))
def test_fs_density_is_one(z, chart):
    assert curvature_density(FS, ChartPoint(chart, z)) == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(disk)
def test_fs_singular_density(z):
    m = MetricSpec(hsigma_scale=1.0)
    assert curvature_density(m, ChartPoint(0, z), 0.3) == pytest.approx(0.7, abs=1e-6)
    assert curvature_density(m, ChartPoint(1, z), 0.3) == pytest.approx(0.7, abs=1e-6)


@pytest.mark.parametrize("z,dens,scal,b1", SYMPY_FROZEN)
def test_perturbed_against_frozen_symbolic(z, dens, scal, b1):
    x = ChartPoint(0, z)
    assert curvature_density(PERT, x) == pytest.approx(dens, abs=1e-8)
    assert scalar_curvature_at(PERT, x) == pytest.approx(scal, abs=1e-4)


def test_symbolic_oracle_reproduces_frozen():
    for z, dens, scal, b1 in SYMPY_FROZEN[:2]:
        assert oracles.density(MODES, z) == pytest.approx(dens, rel=1e-14)
        assert oracles.scalar_curvature(MODES, z) == pytest.approx(scal, rel=1e-12)
        assert oracles.b1(MODES, z) == pytest.approx(b1, rel=1e-12)


def test_density_matches_harmonic_eigenvalues():
    # density = 1 - 2 sum coef l(l+1) Y_lm for the mode family
    rng = np.random.default_rng(3)
    z = np.sqrt(rng.uniform(0.01, 1, 50)) * np.exp(2j * np.pi * rng.uniform(size=50))
    chart = rng.integers(0, 2, 50)
    from bergman_lab.geometry import perturbation_field

    want = np.ones(50)
    for l, m, c in MODES:
        one = MetricSpec(perturbation=(Mode(l, m, c),))
        want -= 2 * l * (l + 1) * perturbation_field(one, chart, z)
    assert np.max(np.abs(density_field(PERT, chart, z) - want)) < 1e-8


@settings(max_examples=40, deadline=None)
@given(disk)
def test_fs_scalar_curvature(z):
    assert scalar_curvature_at(FS, ChartPoint(0, z)) == pytest.approx(8 * math.pi, abs=1e-4)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.2, 0.99), st.floats(0, 2 * math.pi))
def test_chart_consistency(r, th):
    x = ChartPoint(0, r * complex(math.cos(th), math.sin(th)))
    y = x.other()
    m = MetricSpec(PERT.perturbation, hsigma_scale=0.9, eta=CutoffProfile(-0.9, -0.2))
    assert rho_at(m, y) == pytest.approx(rho_at(m, x), rel=1e-10, abs=1e-14)
    assert eta_at(m, y) == pytest.approx(eta_at(m, x), rel=1e-10, abs=1e-14)
    assert curvature_density(m, y) == pytest.approx(curvature_density(m, x), rel=1e-8)


@settings(max_examples=100, deadline=None)
@given(st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False, allow_infinity=False))
def test_chart_point_round_trip(z):
    x = ChartPoint(0, z)
    back = x.other().other()
    assert abs(back.z - z) <= 4 * np.spacing(abs(z)) * 2
    c = x.canonical()
    assert abs(c.z) <= 1


def test_gauss_bonnet():
    rule = QuadratureRule(32, 16)
    for m in (FS, PERT):
        res = integrate_sphere(lambda c, z: scalar_curvature_field(m, c, z) * density_field(m, c, z), rule)
        assert res.value == pytest.approx(8 * math.pi, abs=1e-4)
    fs = integrate_sphere(lambda c, z: scalar_curvature_field(FS, c, z), rule)
    assert fs.value == pytest.approx(8 * math.pi, abs=1e-4)


def test_metric_laplacian_symbolic():
    for z, dens, scal, b1 in SYMPY_FROZEN:
        x = ChartPoint(0, z)
        got = dens / (8 * math.pi) * (scalar_curvature_at(PERT, x) + 2 * metric_laplacian_log_density(PERT, x))
        assert got == pytest.approx(b1, abs=1e-4)


def test_check_positive_and_degenerate():
    assert PERT.check_positive() > 0.7
    bad = MetricSpec(perturbation=(Mode(2, 0, 0.2),))
    with pytest.raises(DegenerateMetricError):
        bad.check_positive()
    with pytest.raises(DegenerateMetricError):
        scalar_curvature_at(bad, bad.curvature.worst_point)


def test_metric_spec_validation():
    with pytest.raises(ValueError):
        MetricSpec(hsigma_scale=1.5)
    with pytest.raises(ValueError):
        MetricSpec(sigma=ChartPoint(0, 0.5))
    with pytest.raises(ValueError):
        Mode(1, 2, 0.1)


def test_metric_json_round_trip():
    m = MetricSpec(PERT.perturbation, hsigma_scale=0.9, eta=CutoffProfile(-0.8, -0.16))
    s = m.dumps()
    assert MetricSpec.loads(s) == m
    d = json.loads(s)
    assert d["eta"] == {"a": -0.8, "b": -0.16}
    assert d["perturbation"][0] == {"mode": "Y_lm_like", "l": 1, "m": 1, "coef": 0.03}
    assert MetricSpec.loads(FS.dumps()) == FS


def test_distance_schedule():
    for d in (0.05, 0.3, 0.8):
        assert distance_to_divisor(point_at_distance(d, 1.0)) == pytest.approx(d, rel=1e-12)


def test_t0_fs_examples():
    assert estimate_t0(FS, None, None, delta_floor=1e-3) == pytest.approx(0.999, abs=1e-3)
    assert estimate_t0(FS, None, None, delta_floor=0.5) == pytest.approx(0.5, abs=1e-3)


def test_t0_precondition_and_monotone():
    prof = CutoffProfile(-0.8, -0.16)
    with pytest.raises(ValueError):
        estimate_t0(PERT, [ChartPoint(0, 0.5)], prof)
    with pytest.raises(ValueError):
        estimate_t0(PERT, -0.5, None)
    vals = [estimate_t0(PERT, None, None, delta_floor=f) for f in (1e-3, 0.1, 0.3, 0.6)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert 0 < estimate_t0(PERT, [ChartPoint(1, 0.1)], prof) < vals[0]


def test_t0_zero_with_warning():
    with pytest.warns(RuntimeWarning):
        assert estimate_t0(PERT, None, None, delta_floor=0.9) == 0.0
