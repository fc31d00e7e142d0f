"""Deterministic quadrature on P^1 and on disks.

The sphere is split at ``|z| = 1`` into the chart-0 and chart-1 hemispheres.
On each hemisphere the radial variable is ``v = |zeta|^2 / (1 + |zeta|^2)``
in ``[0, 1/2]``, for which ``omega = dv dtheta / (2 pi)``; the Fubini-Study
Gram integrands are polynomials in ``v``, so Gauss rules in ``v`` are exact
for them.  The angle uses the trapezoid rule.

A radial singularity ``|z|^alpha`` at ``z = 0`` (``-2 < alpha <= 0``) is
absorbed into Gauss-Jacobi weights on the chart-0 hemisphere; integrands are
then supplied with the factor removed.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

__all__ = [
    "QuadratureRule",
    "IntegralResult",
    "QuadratureError",
    "SphereNodes",
    "sphere_nodes",
    "integrate_sphere",
    "integrate_radial_singular",
    "disk_moment_check",
    "disk_moment_quadrature",
    "log_abs_z",
]


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    n_angular: int
    n_radial: int
    alpha: float = 0.0
    split_radius: float = 1.0

    def __post_init__(self):
        if self.n_angular < 8 or self.n_angular % 2:
            raise ValueError(f"n_angular must be even and >= 8, got {self.n_angular}")
        if self.n_radial < 4:
            raise ValueError(f"n_radial must be >= 4, got {self.n_radial}")
        if not (-2.0 < self.alpha <= 0.0):
            raise ValueError(f"alpha must lie in (-2, 0], got {self.alpha}")
        if self.split_radius != 1.0:
            raise ValueError("only the |z| = 1 hemisphere split is supported")

    @classmethod
    def for_degree(cls, p: int, alpha: float = 0.0) -> "QuadratureRule":
        """Default rule for sections of O(p): ``n_radial = p + 16``, ``n_angular = 2p + 16``."""
        return cls(2 * p + 16, p + 16, alpha)

    def doubled(self) -> "QuadratureRule":
        return QuadratureRule(2 * self.n_angular, 2 * self.n_radial, self.alpha)

    @property
    def descriptor(self) -> tuple[int, int, float]:
        return (self.n_angular, self.n_radial, float(self.alpha))


@dataclass(frozen=True)
class IntegralResult:
    value: float | complex
    err_estimate: float


@dataclass(frozen=True)
class SphereNodes:
    """Flattened nodes: ``sum(weight * g(chart, zeta))`` approximates ``int |z|^alpha g omega``."""

    chart: np.ndarray
    zeta: np.ndarray
    weight: np.ndarray


@lru_cache(maxsize=64)
def _radial_nodes(n: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    # nodes v in (0, 1/2) and weights for  int_0^{1/2} v^{alpha/2} G(v) dv
    if alpha == 0.0:
        x, w = roots_legendre(n)
    else:
        x, w = roots_jacobi(n, 0.0, alpha / 2.0)
    v = (x + 1.0) / 4.0
    w = w * 4.0 ** (-(alpha / 2.0 + 1.0))
    return v, w


@lru_cache(maxsize=64)
def _sphere_nodes(rule: QuadratureRule, offset: float) -> SphereNodes:
    na, nr, alpha = rule.n_angular, rule.n_radial, rule.alpha
    theta = offset + 2.0 * np.pi * np.arange(na) / na
    phase = np.exp(1j * theta)
    # chart 0 (divisor side): Jacobi weight v^{alpha/2}; r^alpha = v^{a/2} (1-v)^{-a/2}
    v0, w0 = _radial_nodes(nr, alpha)
    w0 = w0 * (1.0 - v0) ** (-alpha / 2.0)
    # chart 1: smooth side, |z|^alpha = |w|^{-alpha} folded into the weights
    v1, w1 = _radial_nodes(nr, 0.0)
    r1 = np.sqrt(v1 / (1.0 - v1))
    w1 = w1 * r1 ** (-alpha) if alpha else w1
    r0 = np.sqrt(v0 / (1.0 - v0))
    z0 = (r0[:, None] * phase[None, :]).ravel()
    z1 = (r1[:, None] * phase[None, :]).ravel()
    ww0 = np.repeat(w0 / na, na)
    ww1 = np.repeat(w1 / na, na)
    chart = np.concatenate([np.zeros(z0.size, dtype=int), np.ones(z1.size, dtype=int)])
    out = SphereNodes(chart, np.concatenate([z0, z1]), np.concatenate([ww0, ww1]))
    for a in (out.chart, out.zeta, out.weight):
        a.setflags(write=False)
    return out


def sphere_nodes(rule: QuadratureRule, offset: float = 0.0) -> SphereNodes:
    return _sphere_nodes(rule, float(offset))


def log_abs_z(chart, zeta) -> np.ndarray:
    """``log|z|`` of the chart-0 coordinate for points given in either chart."""
    with np.errstate(divide="ignore"):
        lr = np.log(np.abs(zeta))
    return np.where(np.asarray(chart) == 0, lr, -lr)


def _apply(f, nodes: SphereNodes):
    vals = np.asarray(f(nodes.chart, nodes.zeta))
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise QuadratureError(
            f"non-finite integrand at node {i}: chart {nodes.chart[i]}, zeta {nodes.zeta[i]!r}"
        )
    return np.sum(nodes.weight * vals)


def integrate_sphere(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray], rule: QuadratureRule, offset: float = 0.0
) -> IntegralResult:
    """Integrate ``|z|^alpha f`` against ``omega`` over P^1.

    ``f(chart, zeta)`` is called once per hemisphere batch with arrays; the
    error estimate is the change under doubling both node counts.
    """
    value = _apply(f, sphere_nodes(rule, offset))
    fine = _apply(f, sphere_nodes(rule.doubled(), offset))
    return IntegralResult(value.item(), float(abs(fine - value)))


def integrate_radial_singular(
    g: Callable[[np.ndarray], np.ndarray], alpha: float, r_max: float, rule: QuadratureRule | int
) -> IntegralResult:
    """``int_0^r_max r^alpha g(r) r dr`` with Gauss-Jacobi nodes for the weight ``r^(alpha+1)``."""
    if alpha <= -2:
        raise QuadratureError("non-integrable singularity: alpha must exceed -2")
    n = rule if isinstance(rule, int) else rule.n_radial

    def once(n):
        x, w = roots_jacobi(n, 0.0, alpha + 1.0)
        y = (x + 1.0) / 2.0
        scale = r_max ** (alpha + 2.0) * 2.0 ** (-(alpha + 2.0))
        return scale * np.sum(w * np.asarray(g(r_max * y)))

    value = once(n)
    return IntegralResult(value.item(), float(abs(once(2 * n) - value)))


def disk_moment_check(coeffs, k: int) -> tuple[float, float, bool]:
    """Both sides of ``int_D |f|^2 <= (k+1)/4^k int_D |zeta|^{2k} |f|^2`` on the radius-2 disk.

    Evaluated from the power-series coefficients of ``f``.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    a2 = np.abs(np.asarray(coeffs, dtype=complex)) ** 2
    j = np.arange(a2.size)
    lhs = 2 * np.pi * np.sum(a2 * 4.0 ** (j + 1) / (2 * j + 2))
    shifted = 2 * np.pi * np.sum(a2 * 4.0 ** (j + k + 1) / (2 * j + 2 * k + 2))
    rhs = (k + 1) / 4.0**k * shifted
    return float(lhs), float(rhs), bool(lhs <= rhs * (1 + 1e-12))


def disk_moment_quadrature(coeffs, k: int, n_r: int = 64, n_theta: int | None = None) -> tuple[float, float]:
    """Direct 2-D polar quadrature of both sides of the disk inequality."""
    coeffs = np.asarray(coeffs, dtype=complex)
    deg = coeffs.size - 1
    n_theta = n_theta or 2 * (deg + k) + 8
    x, w = roots_legendre(n_r)
    r = x + 1.0  # [0, 2]
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    zeta = r[:, None] * np.exp(1j * theta)[None, :]
    f2 = np.abs(np.polynomial.polynomial.polyval(zeta, coeffs)) ** 2
    cell = (w * r)[:, None] * (2 * np.pi / n_theta)
    lhs = np.sum(cell * f2)
    rhs = (k + 1) / 4.0**k * np.sum(cell * np.abs(zeta) ** (2 * k) * f2)
    return float(lhs), float(rhs)
