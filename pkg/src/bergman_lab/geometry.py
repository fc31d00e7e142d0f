"""Model manifold P^1 with the line bundle O(1).

Points live in one of two affine charts, ``chart 0`` with coordinate ``z`` and
``chart 1`` with coordinate ``w = 1/z``.  All scalar fields in this module are
evaluated in vectorised form ``f(chart, zeta)`` where ``zeta`` is a complex
array of coordinates in that chart.

Conventions
-----------
* ``dd^c = (i/pi) d dbar``, so the Fubini-Study form ``omega`` has unit volume
  and ``c_1(O(1), h_FS) = omega``.
* The weight of ``h`` in the chart-``j`` frame is ``phi_j`` with
  ``|e_j|_h = exp(-phi_j)``.  For Fubini-Study ``phi_j = log(1 + |zeta|^2) / 2``
  in both charts; perturbations are global functions and enter both charts
  unchanged.
* The divisor is the point ``z = 0`` and ``rho = log(c |z| / sqrt(1 + |z|^2))``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import lpmv

__all__ = [
    "ChartPoint",
    "Mode",
    "CutoffProfile",
    "MetricSpec",
    "CurvatureReport",
    "DivisorError",
    "DegenerateMetricError",
    "FS",
    "weight_at",
    "rho_at",
    "eta_at",
    "curvature_density",
    "scalar_curvature_at",
    "metric_laplacian_log_density",
    "estimate_t0",
    "weight_field",
    "rho_field",
    "eta_field",
    "density_field",
    "scalar_curvature_field",
    "distance_to_divisor",
    "point_at_distance",
    "sphere_grid",
]

# Finite-difference steps: Laplacian of the weight, and the outer Laplacian
# used for scalar curvature (nested on top of the inner one).
H_FD = 1e-2
H_FD_OUTER = 3e-2


class DivisorError(ValueError):
    """Evaluation at the divisor where the singular weight is -inf."""


class DegenerateMetricError(ValueError):
    """Curvature density is not positive."""


@dataclass(frozen=True)
class ChartPoint:
    chart: int
    z: complex

    def __post_init__(self):
        if self.chart not in (0, 1):
            raise ValueError(f"chart must be 0 or 1, got {self.chart}")
        object.__setattr__(self, "z", complex(self.z))

    @classmethod
    def from_affine(cls, z: complex) -> "ChartPoint":
        """Canonical point for the chart-0 coordinate ``z`` (``inf`` allowed)."""
        if z == complex("inf") or (isinstance(z, float) and math.isinf(z)):
            return cls(1, 0j)
        return cls(0, complex(z)).canonical()

    def other(self) -> "ChartPoint":
        if self.z == 0:
            raise ValueError("point is the pole of the other chart")
        return ChartPoint(1 - self.chart, 1.0 / self.z)

    def canonical(self) -> "ChartPoint":
        return self.other() if abs(self.z) > 1 else self

    @property
    def affine(self) -> complex:
        """Chart-0 coordinate (``inf`` at the pole of chart 1)."""
        if self.chart == 0:
            return self.z
        return complex("inf") if self.z == 0 else 1.0 / self.z

    @property
    def u(self) -> float:
        """``|z|^2`` in chart 0 (``inf`` at the pole)."""
        a = self.affine
        return math.inf if math.isinf(a.real) else abs(a) ** 2

    def to_json(self) -> dict:
        return {"chart": self.chart, "z": [_f17(self.z.real), _f17(self.z.imag)]}

    @classmethod
    def from_json(cls, d: dict) -> "ChartPoint":
        re, im = d["z"]
        return cls(int(d["chart"]), complex(float(re), float(im)))


@dataclass(frozen=True)
class Mode:
    """Real spherical-harmonic-like mode ``coef * P_l^|m|(s) * trig(m theta)``.

    ``s = (|z|^2 - 1)/(|z|^2 + 1)`` and ``theta = arg z``; ``trig`` is ``cos``
    for ``m >= 0`` and ``sin`` for ``m < 0``.  ``(l, m) = (0, 0)`` is a constant.
    """

    l: int
    m: int
    coef: float

    def __post_init__(self):
        if self.l < 0 or abs(self.m) > self.l:
            raise ValueError(f"invalid mode (l={self.l}, m={self.m})")

    def values(self, s: np.ndarray, theta: np.ndarray) -> np.ndarray:
        am = abs(self.m)
        radial = lpmv(am, self.l, s)
        if self.m > 0:
            ang = np.cos(am * theta)
        elif self.m < 0:
            ang = np.sin(am * theta)
        else:
            ang = 1.0
        return self.coef * radial * ang


@dataclass(frozen=True)
class CutoffProfile:
    """Smooth step ``eta = chi(rho)`` with ``chi = 1`` on ``rho <= a``, ``0`` on ``rho >= b``."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a < self.b < 0):
            raise ValueError(f"cutoff needs a < b < 0, got a={self.a}, b={self.b}")

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        s = (self.b - rho) / (self.b - self.a)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            f0 = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
            f1 = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
            out = f0 / (f0 + f1)
        out = np.where(s >= 1, 1.0, out)
        out = np.where(s <= 0, 0.0, out)
        return out


@dataclass(frozen=True)
class CurvatureReport:
    epsilon_min: float
    grid_size: int
    worst_point: ChartPoint


@dataclass(frozen=True)
class MetricSpec:
    """Weight data for ``(L, h)`` on P^1.

    ``eta=None`` means ``eta == 1`` on all of X (no cutoff).
    """

    perturbation: tuple[Mode, ...] = ()
    sigma: ChartPoint = field(default_factory=lambda: ChartPoint(0, 0j))
    hsigma_scale: float = 0.9
    eta: CutoffProfile | None = None

    def __post_init__(self):
        object.__setattr__(self, "perturbation", tuple(self.perturbation))
        if self.sigma != ChartPoint(0, 0j):
            raise ValueError("the divisor must sit at z = 0 in chart 0")
        c = float(self.hsigma_scale)
        if not (0 < c <= 1):
            raise ValueError(f"hsigma_scale must lie in (0, 1] so that rho < 0, got {c}")

    @property
    def is_fs(self) -> bool:
        return all(md.coef == 0 for md in self.perturbation)

    @property
    def is_circle_invariant(self) -> bool:
        return all(md.m == 0 or md.coef == 0 for md in self.perturbation)

    @cached_property
    def curvature(self) -> CurvatureReport:
        """Certified positivity: minimum of the smooth curvature density on a grid."""
        chart, zeta = sphere_grid(64, 48)
        dens = density_field(self, chart, zeta)
        i = int(np.argmin(dens))
        return CurvatureReport(float(dens.flat[i]), dens.size, ChartPoint(int(chart.flat[i]), complex(zeta.flat[i])))

    def check_positive(self) -> float:
        eps = self.curvature.epsilon_min
        if not eps > 0:
            raise DegenerateMetricError(f"curvature density min {eps:.3g} <= 0")
        return eps

    # --- serialisation -------------------------------------------------
    def to_json(self) -> dict:
        return {
            "perturbation": [
                {"mode": "Y_lm_like", "l": md.l, "m": md.m, "coef": _f17(md.coef)} for md in self.perturbation
            ],
            "sigma": self.sigma.to_json(),
            "hsigma_scale": _f17(self.hsigma_scale),
            "eta": None if self.eta is None else {"a": _f17(self.eta.a), "b": _f17(self.eta.b)},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, d: dict) -> "MetricSpec":
        modes = []
        for e in d.get("perturbation", []):
            if e.get("mode", "Y_lm_like") != "Y_lm_like":
                raise ValueError(f"unknown perturbation family {e['mode']!r}")
            modes.append(Mode(int(e["l"]), int(e["m"]), float(e["coef"])))
        sigma = ChartPoint.from_json(d["sigma"]) if "sigma" in d else ChartPoint(0, 0j)
        eta = d.get("eta")
        return cls(
            perturbation=tuple(modes),
            sigma=sigma,
            hsigma_scale=float(d.get("hsigma_scale", 0.9)),
            eta=None if eta is None else CutoffProfile(float(eta["a"]), float(eta["b"])),
        )

    @classmethod
    def loads(cls, s: str) -> "MetricSpec":
        return cls.from_json(json.loads(s))


FS = MetricSpec(hsigma_scale=1.0)


def _f17(x: float) -> float:
    # 17 significant digits round-trips any double
    return float(f"{float(x):.17g}")


# ----------------------------------------------------------------------
# vectorised fields f(chart, zeta)
# ----------------------------------------------------------------------

def _height_angle(chart, zeta):
    u = np.abs(zeta) ** 2
    s = (u - 1.0) / (u + 1.0)
    theta = np.angle(zeta)
    # w = 1/z flips the height and the angle
    s = np.where(chart == 0, s, -s)
    theta = np.where(chart == 0, theta, -theta)
    return s, theta


def perturbation_field(metric: MetricSpec, chart, zeta) -> np.ndarray:
    zeta = np.asarray(zeta, dtype=complex)
    out = np.zeros(zeta.shape)
    if not metric.perturbation:
        return out
    s, theta = _height_angle(np.asarray(chart), zeta)
    for md in metric.perturbation:
        out = out + md.values(s, theta)
    return out


def rho_field(metric: MetricSpec, chart, zeta) -> np.ndarray:
    zeta = np.asarray(zeta, dtype=complex)
    chart = np.asarray(chart)
    logc = math.log(metric.hsigma_scale)
    with np.errstate(divide="ignore"):
        near = np.log(np.abs(zeta)) - 0.5 * np.log1p(np.abs(zeta) ** 2)
    far = -0.5 * np.log1p(np.abs(zeta) ** 2)
    return logc + np.where(chart == 0, near, far)


def eta_field(metric: MetricSpec, chart, zeta) -> np.ndarray:
    if metric.eta is None:
        return np.ones(np.shape(zeta))
    return metric.eta(rho_field(metric, chart, zeta))


def weight_field(metric: MetricSpec, chart, zeta, t: float | None = None) -> np.ndarray:
    """Weight of ``h`` (``t=None``) or of ``h e^{-2 t eta rho}`` in the chart frame."""
    zeta = np.asarray(zeta, dtype=complex)
    phi = 0.5 * np.log1p(np.abs(zeta) ** 2) + perturbation_field(metric, chart, zeta)
    if t is not None and t != 0:
        rho = rho_field(metric, chart, zeta)
        eta = np.ones_like(rho) if metric.eta is None else metric.eta(rho)
        with np.errstate(invalid="ignore"):
            xi = np.where(eta == 0, 0.0, eta * rho)
        phi = phi + t * xi
    return phi


def _lap5(f, zeta, h):
    return (f(zeta + h) + f(zeta - h) + f(zeta + 1j * h) + f(zeta - 1j * h) - 4.0 * f(zeta)) / h**2


def _laplacian(f: Callable, zeta: np.ndarray, h) -> np.ndarray:
    """5-point Laplacian at steps h, 2h, 4h with two Richardson levels (O(h^6))."""
    l1, l2, l4 = _lap5(f, zeta, h), _lap5(f, zeta, 2 * h), _lap5(f, zeta, 4 * h)
    r1 = (4.0 * l1 - l2) / 3.0
    r2 = (4.0 * l2 - l4) / 3.0
    return (16.0 * r1 - r2) / 15.0


def _regular_weight_field(metric: MetricSpec, chart, zeta, t: float | None) -> np.ndarray:
    # Singular weight minus the pluriharmonic t*log|z| in chart 0, i.e. the weight
    # in the frame twisted by z^t.  Smooth across z = 0, same dd^c off the divisor.
    zeta = np.asarray(zeta, dtype=complex)
    phi = 0.5 * np.log1p(np.abs(zeta) ** 2) + perturbation_field(metric, chart, zeta)
    if not t:
        return phi
    rho = rho_field(metric, chart, zeta)
    eta = np.ones_like(rho) if metric.eta is None else metric.eta(rho)
    smooth_rho = math.log(metric.hsigma_scale) - 0.5 * np.log1p(np.abs(zeta) ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.where(eta == 1, 0.0, (eta - 1.0) * np.log(np.abs(zeta)))
    xi0 = eta * smooth_rho + tail
    xi1 = np.where(eta == 0, 0.0, eta * rho)
    return phi + t * np.where(np.asarray(chart) == 0, xi0, xi1)


def density_field(metric: MetricSpec, chart, zeta, t: float | None = None, h: float = H_FD) -> np.ndarray:
    """Ratio ``c_1(L, h)/omega`` (or of the singular metric for ``t`` given)."""
    chart = np.asarray(chart)
    zeta = np.asarray(zeta, dtype=complex)
    chart, zeta = np.broadcast_arrays(chart, zeta)
    if t and np.any((chart == 0) & (zeta == 0)):
        raise DivisorError("weight is -inf at divisor")
    lap = _laplacian(lambda q: _regular_weight_field(metric, chart, q, t), zeta, h)
    return 0.5 * lap * (1.0 + np.abs(zeta) ** 2) ** 2


def _log_metric_density(metric, chart, zeta):
    # log of the Riemannian density of c_1(L, h) up to the constant -log(pi)
    return np.log(density_field(metric, chart, zeta)) - 2.0 * np.log1p(np.abs(zeta) ** 2)


def scalar_curvature_field(metric: MetricSpec, chart, zeta, H: float = H_FD_OUTER) -> np.ndarray:
    chart = np.asarray(chart)
    zeta = np.asarray(zeta, dtype=complex)
    chart, zeta = np.broadcast_arrays(chart, zeta)
    b0 = density_field(metric, chart, zeta)
    if np.any(b0 <= 0):
        raise DegenerateMetricError("metric degenerate: non-positive curvature density")
    lap = _laplacian(lambda q: _log_metric_density(metric, chart, q), zeta, H)
    return -math.pi * (1.0 + np.abs(zeta) ** 2) ** 2 / b0 * lap


def laplacian_log_density_field(metric: MetricSpec, chart, zeta, H: float = H_FD_OUTER) -> np.ndarray:
    """Laplace-Beltrami (analyst sign, ``<= 0`` at maxima) of ``log b0`` for the metric ``c_1(L, h)``."""
    chart = np.asarray(chart)
    zeta = np.asarray(zeta, dtype=complex)
    chart, zeta = np.broadcast_arrays(chart, zeta)
    b0 = density_field(metric, chart, zeta)
    lap = _laplacian(lambda q: np.log(density_field(metric, chart, q)), zeta, H)
    return math.pi * (1.0 + np.abs(zeta) ** 2) ** 2 / b0 * lap


# ----------------------------------------------------------------------
# point API
# ----------------------------------------------------------------------

def _at(x: ChartPoint):
    x = x.canonical()
    return np.array(x.chart), np.array(x.z)


def _mode_t(mode) -> float | None:
    """Accept ``None``/``"smooth"`` or a number / ``("singular", t)``."""
    if mode is None or mode == "smooth":
        return None
    if isinstance(mode, tuple):
        return float(mode[1])
    return float(mode)


def _on_divisor(x: ChartPoint) -> bool:
    x = x.canonical()
    return x.chart == 0 and x.z == 0


def weight_at(m: MetricSpec, x: ChartPoint, mode=None) -> float:
    """Weight at ``x`` in its canonical chart frame; ``mode`` is ``None`` or ``t``."""
    t = _mode_t(mode)
    if t and _on_divisor(x):
        raise DivisorError("weight is -inf at divisor")
    return float(weight_field(m, *_at(x), t))


def rho_at(m: MetricSpec, x: ChartPoint) -> float:
    if _on_divisor(x):
        raise DivisorError("rho is -inf at divisor")
    return float(rho_field(m, *_at(x)))


def eta_at(m: MetricSpec, x: ChartPoint) -> float:
    if _on_divisor(x):
        return 1.0
    return float(eta_field(m, *_at(x)))


def curvature_density(m: MetricSpec, x: ChartPoint, mode=None) -> float:
    return float(density_field(m, *_at(x), _mode_t(mode)))


def scalar_curvature_at(m: MetricSpec, x: ChartPoint) -> float:
    return float(scalar_curvature_field(m, *_at(x)))


def metric_laplacian_log_density(m: MetricSpec, x: ChartPoint) -> float:
    return float(laplacian_log_density_field(m, *_at(x)))


# ----------------------------------------------------------------------
# distances and grids
# ----------------------------------------------------------------------

def distance_to_divisor(x: ChartPoint) -> float:
    """omega-geodesic distance to z = 0: ``arctan|z| / sqrt(pi)``."""
    a = x.affine
    ang = math.pi / 2 if math.isinf(a.real) else math.atan(abs(a))
    return ang / math.sqrt(math.pi)


def point_at_distance(d: float, theta: float = 0.0) -> ChartPoint:
    ang = d * math.sqrt(math.pi)
    if not 0 < ang <= math.pi / 2 + 1e-15:
        raise ValueError(f"distance {d} outside (0, sqrt(pi)/2]")
    return ChartPoint.from_affine(math.tan(min(ang, math.pi / 2 - 1e-300)) * complex(math.cos(theta), math.sin(theta)))


def sphere_grid(n_theta: int, n_v: int, v_min: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Canonical grid on both hemispheres, equispaced in ``v = u/(1+u)`` and angle.

    Chart-0 points with ``v < v_min`` are omitted (used to stay off the divisor).
    """
    v = (np.arange(n_v) + 0.5) / n_v * 0.5
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    r = np.sqrt(v / (1.0 - v))
    zeta = (r[:, None] * np.exp(1j * theta[None, :])).ravel()
    vv = np.repeat(v, n_theta)
    keep = vv >= v_min
    z0 = zeta[keep]
    chart = np.concatenate([np.zeros(z0.size, int), np.ones(zeta.size, int)])
    return chart, np.concatenate([z0, zeta])


# ----------------------------------------------------------------------
# t0 estimator
# ----------------------------------------------------------------------

def _region_rho_min(m: MetricSpec, K) -> float | None:
    """K as a rho-threshold (``K = {rho >= kappa}``) or a point list; None for K empty."""
    if K is None:
        return None
    if isinstance(K, (int, float)):
        return float(K)
    pts = list(K)
    if not pts:
        return None
    return min(rho_at(m, x) for x in pts)


def estimate_t0(
    m: MetricSpec,
    K=None,
    profile: CutoffProfile | None = None,
    delta_floor: float = 1e-3,
    resolution: float = 1e-3,
    grid: tuple[int, int] = (32, 48),
    t_max: float = 4.0,
    fd_tol: float = 1e-9,
) -> float:
    """Largest ``t`` on the ``resolution`` lattice keeping ``c_1 + t dd^c(eta rho) >= delta_floor``.

    ``profile=None`` means ``eta == 1``.  ``K`` is ``None`` (empty), a threshold
    ``kappa`` meaning ``{rho >= kappa}``, or an iterable of points.  The grid
    minimum is compared against ``delta_floor - fd_tol`` to absorb the
    finite-difference error on lattice-boundary cases.
    """
    if delta_floor <= 0:
        raise ValueError("delta_floor must be positive")
    kappa = _region_rho_min(m, K)
    if kappa is not None:
        if profile is None or profile.b > kappa:
            raise ValueError("precondition: supp eta must avoid K (need profile.b <= min rho on K)")
    spec = MetricSpec(m.perturbation, m.sigma, m.hsigma_scale, profile)
    chart, zeta = sphere_grid(*grid, v_min=2.5e-3)
    base = density_field(spec, chart, zeta)
    # density is affine in t; isolate the t-slope once
    slope = density_field(spec, chart, zeta, t=1.0) - base

    def ok(t):
        return float(np.min(base + t * slope)) >= delta_floor - fd_tol

    if not ok(0.0):
        warnings.warn("density below delta_floor already at t = 0; returning 0", RuntimeWarning, stacklevel=2)
        return 0.0
    lo, hi = 0, int(round(t_max / resolution))
    if ok(hi * resolution):
        return round(hi * resolution, 12)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid * resolution):
            lo = mid
        else:
            hi = mid
    if lo == 0:
        warnings.warn("t0 below resolution; returning 0", RuntimeWarning, stacklevel=2)
    return round(lo * resolution, 12)


def _as_points(points: Iterable[ChartPoint]) -> tuple[np.ndarray, np.ndarray]:
    pts = [p.canonical() for p in points]
    return np.array([p.chart for p in pts]), np.array([p.z for p in pts], dtype=complex)
