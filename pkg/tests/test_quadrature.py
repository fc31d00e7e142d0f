import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bergman_lab.quadrature import (
    QuadratureError,
    QuadratureRule,
    disk_moment_check,
    disk_moment_quadrature,
    integrate_radial_singular,
    integrate_sphere,
    log_abs_z,
    sphere_nodes,
)
from bergman_lab.spectra import fs_norm


def _u(chart, zeta):
    a2 = np.abs(zeta) ** 2
    return np.where(chart == 0, a2, 1 / np.where(a2 == 0, np.inf, a2))


def test_rule_validation():
    for bad in ((7, 8), (6, 8), (8, 3)):
        with pytest.raises(ValueError):
            QuadratureRule(*bad)
    with pytest.raises(ValueError):
        QuadratureRule(8, 8, alpha=-2.0)
    with pytest.raises(ValueError):
        QuadratureRule(8, 8, alpha=0.5)
    with pytest.raises(ValueError):
        QuadratureRule(8, 8, split_radius=2.0)
    assert QuadratureRule.for_degree(10).descriptor == (36, 26, 0.0)


def test_constant_integrates_to_one():
    r = integrate_sphere(lambda c, z: np.ones(z.shape), QuadratureRule(8, 4))
    assert r.value == pytest.approx(1.0, abs=1e-12)
    assert r.err_estimate >= 0


def test_half_integral():
    r = integrate_sphere(lambda c, z: _u(c, z) / (1 + _u(c, z)), QuadratureRule(8, 8))
    assert r.value == pytest.approx(0.5, abs=1e-10)


def test_gram_integrand_one_sixth():
    # |z|^2 / (1+|z|^2)^2 is the (p=2, k=1) FS Gram integrand
    r = integrate_sphere(lambda c, z: _u(c, z) / (1 + _u(c, z)) ** 2, QuadratureRule(8, 8))
    assert r.value == pytest.approx(1 / 6, abs=1e-10)


@pytest.mark.parametrize("p", [1, 5, 20, 40, 60])
def test_fs_monomial_norms_exact(p):
    rule = QuadratureRule(16, p // 2 + 8)
    for k in range(0, p + 1, max(1, p // 7)):
        r = integrate_sphere(lambda c, z: _u(c, z) ** k / (1 + _u(c, z)) ** p, rule)
        assert r.value == pytest.approx(fs_norm(p, k), rel=1e-9)


def test_refinement_within_estimate():
    f = lambda c, z: np.exp(-_u(c, z)) * (1 + 0.3 * np.cos(np.angle(z)))
    rule = QuadratureRule(16, 8)
    a = integrate_sphere(f, rule)
    b = integrate_sphere(f, rule.doubled())
    assert abs(b.value - a.value) <= max(1e-12, 10 * a.err_estimate)
    assert b.err_estimate <= 2 * a.err_estimate


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 2 * math.pi))
def test_rotation_invariance_bit_exact(offset):
    f = lambda c, z: 1 / (1 + _u(c, z)) ** 3
    rule = QuadratureRule(16, 10)
    assert integrate_sphere(f, rule, offset).value == integrate_sphere(f, rule, 0.0).value


def test_nodes_immutable_and_reproducible():
    a = sphere_nodes(QuadratureRule(8, 6, -0.4))
    b = sphere_nodes(QuadratureRule(8, 6, -0.4))
    assert a is b
    with pytest.raises(ValueError):
        a.weight[0] = 0.0


def test_nan_reports_node():
    def f(c, z):
        out = np.ones(z.shape)
        out[3] = np.nan
        return out

    with pytest.raises(QuadratureError, match="node 3"):
        integrate_sphere(f, QuadratureRule(8, 4))


@pytest.mark.parametrize("alpha", [-0.2, -0.9, -1.5, -1.95])
def test_singular_sphere_weight(alpha):
    # total integrand v^{alpha/2}, v = u/(1+u): singular at z = 0 only; int = 1/(1 + alpha/2)
    f = lambda c, z: (1 + _u(c, z)) ** (-alpha / 2)
    r = integrate_sphere(f, QuadratureRule(8, 12, alpha))
    assert r.value == pytest.approx(1 / (1 + alpha / 2), rel=1e-12)


def test_radial_singular_examples():
    assert integrate_radial_singular(lambda r: np.ones_like(r), -1.0, 1.0, 8).value == pytest.approx(1.0, abs=1e-12)
    assert integrate_radial_singular(lambda r: r**2, -0.6, 1.0, 8).value == pytest.approx(1 / 3.4, abs=1e-10)
    with pytest.raises(QuadratureError, match="non-integrable"):
        integrate_radial_singular(lambda r: r, -2.0, 1.0, 8)


@settings(max_examples=40, deadline=None)
@given(st.floats(-1.99, 0.0), st.integers(0, 15), st.floats(0.1, 3.0))
def test_radial_monomial_exactness(alpha, j, rmax):
    got = integrate_radial_singular(lambda r: r**j, alpha, rmax, QuadratureRule(8, 8, 0.0)).value
    want = rmax ** (alpha + j + 2) / (alpha + j + 2)
    assert got == pytest.approx(want, rel=1e-10)


def test_log_abs_z_charts():
    assert log_abs_z(np.array([0, 1]), np.array([0.5, 0.5])) == pytest.approx([math.log(0.5), math.log(2)])


def test_disk_examples():
    lhs, rhs, ok = disk_moment_check([1.0], 0)
    assert lhs == pytest.approx(4 * math.pi) and rhs == pytest.approx(4 * math.pi) and ok
    lhs, rhs, ok = disk_moment_check([0, 1.0], 1)
    assert lhs == pytest.approx(8 * math.pi) and rhs == pytest.approx(32 * math.pi / 3) and ok
    with pytest.raises(ValueError):
        disk_moment_check([1.0], -1)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_disk_k0_equality(seed):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    lhs, rhs, ok = disk_moment_check(c, 0)
    assert ok and lhs == pytest.approx(rhs, rel=1e-14)


def test_disk_quadrature_agrees():
    rng = np.random.default_rng(11)
    for _ in range(5):
        c = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        k = int(rng.integers(0, 5))
        lhs, rhs, _ = disk_moment_check(c, k)
        ql, qr = disk_moment_quadrature(c, k)
        assert ql == pytest.approx(lhs, rel=1e-10) and qr == pytest.approx(rhs, rel=1e-10)
