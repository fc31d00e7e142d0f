"""Sections of O(p), Gram matrices and log-domain Bergman kernel functions.

Sections of ``O(p)`` are spanned by the monomials ``z^k`` (``k = 0..p``) in the
chart-0 frame; in chart 1 the same section reads ``w^(p-k)``.  ``H^0_0`` is
the span of ``k >= m`` with ``m = floor(t p)``.

A Gram matrix is stored in a diagonally rescaled basis ``z^k / sqrt(n_k)``
with ``n_k`` the raw squared norm of ``z^k`` (so the stored matrix has unit
diagonal).  Kernel values are assembled in log-domain:
``log P(x) = 2 s + log |L^{-1} c|^2`` with ``c`` the conjugated basis values
at ``x`` divided by their largest modulus ``e^s``.
"""
from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import betaln, gammaln, logsumexp

from .geometry import ChartPoint, DivisorError, MetricSpec, eta_field, rho_field, weight_field
from .quadrature import QuadratureRule, integrate_sphere, log_abs_z, sphere_nodes

__all__ = [
    "LogValue",
    "SubspaceSpec",
    "Basis",
    "GramData",
    "GramError",
    "vanishing_order",
    "build_basis",
    "fs_norm",
    "log_fs_norm",
    "gram_matrix",
    "kernel_at",
    "kernel_log_field",
    "kernel_split_log_field",
    "fs_oracle_kernel",
    "fs_oracle_log",
    "variational_check",
    "VariationalReport",
    "trace_identity",
    "sandwich_log_slack",
    "metric_hash",
]

COND_FALLBACK = 1e10
COND_MAX = 1e12
CLIP_REL = 1e-13


class GramError(RuntimeError):
    pass


# ----------------------------------------------------------------------
# log-domain scalar
# ----------------------------------------------------------------------

@dataclass(frozen=True, order=False)
class LogValue:
    """``phase * exp(log_mag)``; ``log_mag = -inf`` encodes zero."""

    log_mag: float
    phase: complex = 1.0

    @classmethod
    def from_value(cls, x: complex) -> "LogValue":
        if x == 0:
            return cls(-math.inf, 1.0)
        a = abs(x)
        return cls(math.log(a), 1.0 if isinstance(x, (int, float)) and x > 0 else x / a)

    def value(self) -> complex | float:
        if self.log_mag > 700 or (self.log_mag < -700 and self.log_mag != -math.inf):
            raise OverflowError(f"exp({self.log_mag:.1f}) is outside double range")
        v = self.phase * math.exp(self.log_mag)
        return v.real if isinstance(v, complex) and v.imag == 0 else v

    def __mul__(self, other: "LogValue | float") -> "LogValue":
        if not isinstance(other, LogValue):
            other = LogValue.from_value(other)
        return LogValue(self.log_mag + other.log_mag, self.phase * other.phase)

    __rmul__ = __mul__

    def __add__(self, other: "LogValue") -> "LogValue":
        if self.log_mag == -math.inf:
            return other
        if other.log_mag == -math.inf:
            return self
        s = max(self.log_mag, other.log_mag)
        tot = self.phase * math.exp(self.log_mag - s) + other.phase * math.exp(other.log_mag - s)
        if tot == 0:
            return LogValue(-math.inf, 1.0)
        return LogValue(s + math.log(abs(tot)), tot / abs(tot))

    def scale(self, log_factor: float) -> "LogValue":
        return LogValue(self.log_mag + log_factor, self.phase)

    def __le__(self, other: "LogValue") -> bool:
        return self.log_mag <= other.log_mag


# ----------------------------------------------------------------------
# bases
# ----------------------------------------------------------------------

def vanishing_order(t, p: int) -> int:
    """``floor(t p)``, exact for rationals and guarded when ``t p`` is within 1e-9 of an integer."""
    if isinstance(t, (Fraction, int)):
        return math.floor(Fraction(t) * p)
    x = float(t) * p
    n = round(x)
    if abs(x - n) < 1e-9:
        return int(n)
    return math.floor(x)


@dataclass(frozen=True)
class SubspaceSpec:
    p: int
    m: int = 0

    def __post_init__(self):
        if self.p < 0:
            raise ValueError("p must be >= 0")
        if self.m < 0:
            raise ValueError("m must be >= 0")
        if self.m > self.p:
            raise ValueError(f"empty space: vanishing order {self.m} exceeds p = {self.p}")

    @classmethod
    def partial(cls, p: int, t) -> "SubspaceSpec":
        return cls(p, vanishing_order(t, p))

    @property
    def dim(self) -> int:
        return self.p - self.m + 1


def log_fs_norm(p: int, k) -> np.ndarray | float:
    """``log ||z^k||^2 = -log((p+1) binom(p, k))`` for Fubini-Study."""
    k = np.asarray(k)
    if np.any(k < 0) or np.any(k > p):
        raise ValueError(f"k out of range 0..{p}")
    out = gammaln(k + 1) + gammaln(p - k + 1) - gammaln(p + 2)
    return float(out) if out.ndim == 0 else out


def fs_norm(p: int, k: int) -> float:
    return math.exp(log_fs_norm(p, k))


@dataclass(frozen=True)
class Basis:
    p: int
    ks: np.ndarray
    log_norms: np.ndarray  # FS preconditioning: log ||z^k||^2

    @property
    def dim(self) -> int:
        return self.ks.size

    @property
    def scales(self) -> np.ndarray:
        return np.exp(0.5 * self.log_norms)


def build_basis(spec: SubspaceSpec) -> Basis:
    ks = np.arange(spec.m, spec.p + 1)
    return Basis(spec.p, ks, np.asarray(log_fs_norm(spec.p, ks), dtype=float).reshape(ks.shape))


def _singular_log_norms(p: int, ks: np.ndarray, t: float, c: float) -> np.ndarray:
    # exact norms for FS with eta == 1: c^{-2tp} B(k - tp + 1, p - k + 1)
    return -2 * t * p * math.log(c) + betaln(ks - t * p + 1.0, p - ks + 1.0)


def metric_hash(metric: MetricSpec) -> str:
    return hashlib.sha256(metric.dumps().encode()).hexdigest()


# ----------------------------------------------------------------------
# pointwise section values
# ----------------------------------------------------------------------

def _section_logs(p: int, ks: np.ndarray, metric: MetricSpec, chart, zeta, t):
    """log-modulus and phase of ``z^k`` (frame-normalised, weighted) at points.

    Returns arrays of shape ``(len(ks), npts)``.
    """
    chart = np.asarray(chart).ravel()
    zeta = np.asarray(zeta, dtype=complex).ravel()
    if t and np.any((chart == 0) & (zeta == 0)):
        raise DivisorError("kernel of the singular metric is undefined on the divisor")
    phi = weight_field(metric, chart, zeta, t)
    with np.errstate(divide="ignore"):
        logr = np.log(np.abs(zeta))
    ang = np.angle(zeta)
    expo = np.where(chart[None, :] == 0, ks[:, None], p - ks[:, None]).astype(float)
    with np.errstate(invalid="ignore"):
        logmag = np.where(expo == 0, 0.0, expo * logr[None, :]) - p * phi[None, :]
    phase = np.exp(1j * expo * ang[None, :])
    return logmag, phase


# ----------------------------------------------------------------------
# Gram matrices
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GramData:
    p: int
    m: int
    t: Fraction | float | None  # None: smooth metric h
    matrix: np.ndarray  # unit diagonal, Hermitian PD
    chol: np.ndarray  # factor F with matrix = F F^H
    log_norms: np.ndarray  # basis is z^k / exp(log_norms/2)
    cond_estimate: float
    quadrature: tuple[int, int, float]
    metric_hash: str
    fallback: bool = False

    @property
    def spec(self) -> SubspaceSpec:
        return SubspaceSpec(self.p, self.m)

    @property
    def ks(self) -> np.ndarray:
        return np.arange(self.m, self.p + 1)

    @property
    def dim(self) -> int:
        return self.p - self.m + 1

    @property
    def mode(self) -> str:
        return "smooth" if self.t is None else "singular"

    @property
    def alpha(self) -> float:
        return self.quadrature[2]

    def raw_matrix(self) -> np.ndarray:
        """Gram matrix of the bare monomials ``z^k``."""
        s = np.exp(0.5 * self.log_norms)
        return self.matrix * np.outer(s, s)

    def solve_factor(self, c: np.ndarray) -> np.ndarray:
        """``y`` with ``|y|^2 = c^H G^{-1} c`` column-wise."""
        if self.fallback:
            # chol = V sqrt(lam): G^{-1} = V lam^{-1} V^H
            lam = np.sum(np.abs(self.chol) ** 2, axis=0)
            v = self.chol / np.sqrt(lam)
            return (v.conj().T @ c) / np.sqrt(lam)[:, None]
        return solve_triangular(self.chol, c, lower=True, check_finite=False)


def _factor(mat: np.ndarray) -> tuple[np.ndarray, float, bool]:
    lam = np.linalg.eigvalsh(mat)
    cond = float(lam[-1] / lam[0]) if lam[0] > 0 else math.inf
    if cond > COND_MAX:
        raise GramError(f"basis ill-conditioned (cond {cond:.3g}), reduce p or refine rule")
    if cond <= COND_FALLBACK:
        return cholesky(mat, lower=True, check_finite=False), cond, False
    warnings.warn(f"Gram cond {cond:.3g} > {COND_FALLBACK:g}; using clipped eigendecomposition", RuntimeWarning)
    lam, vec = np.linalg.eigh(mat)
    lam = np.maximum(lam, CLIP_REL * lam[-1])
    return vec * np.sqrt(lam), cond, True


def _alpha_for(p: int, m: int, t) -> float:
    if t is None:
        return 0.0
    a = 2.0 * (m - float(t) * p)
    return 0.0 if abs(a) < 1e-12 else a


def gram_matrix(
    spec: SubspaceSpec, metric: MetricSpec, t=None, rule: QuadratureRule | None = None
) -> GramData:
    """Gram matrix of ``{z^k : k >= spec.m}`` for ``h`` (``t=None``) or ``h e^{-2 t eta rho}``.

    In singular mode ``spec.m`` must equal ``floor(t p)`` so that every basis
    section is square integrable.
    """
    p, m = spec.p, spec.m
    if t is not None:
        if not 0 < float(t) < 1:
            raise ValueError("t must satisfy 0 < t < 1")
        if m != vanishing_order(t, p):
            raise ValueError(f"singular Gram needs m = floor(tp) = {vanishing_order(t, p)}, got {m}")
    alpha = _alpha_for(p, m, t)
    if rule is None:
        rule = QuadratureRule.for_degree(p, alpha)
    elif abs(rule.alpha - alpha) > 1e-12:
        raise ValueError(f"rule alpha {rule.alpha} does not match 2(floor(tp) - tp) = {alpha}")
    basis = build_basis(spec)
    ks = basis.ks
    tf = None if t is None else float(t)
    if tf is None:
        log_norms = basis.log_norms.copy()
    else:
        log_norms = _singular_log_norms(p, ks, tf, metric.hsigma_scale)

    nodes = sphere_nodes(rule)
    logmag, phase = _section_logs(p, ks, metric, nodes.chart, nodes.zeta, tf)
    logmag = logmag - 0.5 * log_norms[:, None]
    if alpha:
        # the rule supplies |z|^alpha; remove it, half per factor
        logmag = logmag - 0.5 * alpha * log_abs_z(nodes.chart, nodes.zeta)[None, :]
    b = np.exp(logmag) * phase
    if not np.all(np.isfinite(b)):
        raise GramError("non-finite Gram integrand")
    # G_jk = int conj(s_j) s_k  so that ||sum a_k s_k||^2 = a^H G a
    mat = (b.conj() * nodes.weight[None, :]) @ b.T
    mat = 0.5 * (mat + mat.conj().T)
    d = np.diag(mat).real.copy()
    if np.any(d <= 0):
        raise GramError("non-positive Gram diagonal")
    sd = np.sqrt(d)
    mat = mat / np.outer(sd, sd)
    np.fill_diagonal(mat, 1.0)
    if np.all(mat.imag == 0):
        mat = mat.real
    log_norms = log_norms + np.log(d)
    chol, cond, fb = _factor(mat)
    # C order so that a cached copy follows the same BLAS path bit for bit
    chol = np.ascontiguousarray(chol)
    return GramData(
        p=p,
        m=m,
        t=t,
        matrix=mat,
        chol=chol,
        log_norms=log_norms,
        cond_estimate=cond,
        quadrature=rule.descriptor,
        metric_hash=metric_hash(metric),
        fallback=fb,
    )


# ----------------------------------------------------------------------
# kernel evaluation
# ----------------------------------------------------------------------

def _scaled_conj_values(g: GramData, metric: MetricSpec, chart, zeta):
    tf = None if g.t is None else float(g.t)
    logmag, phase = _section_logs(g.p, g.ks, metric, chart, zeta, tf)
    logmag = logmag - 0.5 * g.log_norms[:, None]
    s = np.max(logmag, axis=0)
    c = np.exp(logmag - s[None, :]) * np.conj(phase)
    return c, s


def _check_metric(g: GramData, metric: MetricSpec):
    if g.metric_hash != metric_hash(metric):
        raise ValueError("GramData was built for a different metric")


def kernel_log_field(g: GramData, metric: MetricSpec, chart, zeta) -> np.ndarray:
    """Vectorised ``log P(x)`` at canonical (or any) chart points."""
    _check_metric(g, metric)
    c, s = _scaled_conj_values(g, metric, chart, zeta)
    y = g.solve_factor(c)
    return 2.0 * s + np.log(np.sum(np.abs(y) ** 2, axis=0))


def kernel_split_log_field(g_full: GramData, metric: MetricSpec, m: int, chart, zeta):
    """``(log P_{0,p}, log(P_p - P_{0,p}))`` from one full-space Gram.

    The basis is reordered so that ``k >= m`` comes first; the trailing block
    of ``L^{-1} c`` then spans the orthogonal complement of ``H^0_0`` and the
    difference is obtained without subtracting the two kernels.
    """
    if g_full.m != 0 or g_full.t is not None:
        raise ValueError("split evaluation needs the smooth full-space Gram")
    _check_metric(g_full, metric)
    d0 = g_full.p - m + 1
    c, s = _scaled_conj_values(g_full, metric, chart, zeta)
    order = np.r_[np.arange(m, g_full.p + 1), np.arange(m)]
    mat = g_full.matrix[np.ix_(order, order)]
    chol = cholesky(mat, lower=True, check_finite=False)
    y = solve_triangular(chol, c[order], lower=True, check_finite=False)
    a2 = np.abs(y) ** 2
    with np.errstate(divide="ignore"):
        head = 2.0 * s + np.log(np.sum(a2[:d0], axis=0))
        tail = 2.0 * s + np.log(np.sum(a2[d0:], axis=0)) if m > 0 else np.full(s.shape, -np.inf)
    return head, tail


def kernel_at(g: GramData, spec: SubspaceSpec, metric: MetricSpec, mode, x: ChartPoint) -> LogValue:
    """``log P(x)`` for the subspace/metric that ``g`` was built for."""
    if spec != g.spec:
        raise ValueError("spec does not match GramData")
    want = None if mode in (None, "smooth") else mode
    if (want is None) != (g.t is None):
        raise ValueError(f"mode {mode!r} does not match GramData ({g.mode})")
    x = x.canonical()
    val = kernel_log_field(g, metric, np.array([x.chart]), np.array([x.z]))
    return LogValue(float(val[0]))


# ----------------------------------------------------------------------
# Fubini-Study closed forms
# ----------------------------------------------------------------------

def _log_v(chart, zeta):
    """``log v`` and ``log(1 - v)`` with ``v = |z|^2/(1+|z|^2)``, stable in both charts."""
    chart = np.asarray(chart)
    zeta = np.asarray(zeta, dtype=complex)
    a2 = np.abs(zeta) ** 2
    with np.errstate(divide="ignore"):
        l_small = np.log(a2) - np.log1p(a2)
    l_big = -np.log1p(a2)
    return np.where(chart == 0, l_small, l_big), np.where(chart == 0, l_big, l_small)


def fs_oracle_log(p: int, t, chart, zeta, kind: str = "partial", part: str = "kernel") -> np.ndarray:
    """Closed-form ``log`` kernels for Fubini-Study (no quadrature).

    ``kind``: ``full``, ``partial`` or ``singular`` (``eta == 1``; independent of
    ``c``).  ``part="complement"`` gives ``log(P_p - P_{0,p})`` for ``partial``.
    """
    lv, l1v = _log_v(chart, zeta)
    lv, l1v = np.atleast_1d(lv), np.atleast_1d(l1v)
    if kind == "full":
        return np.full(lv.shape, math.log(p + 1))
    m = vanishing_order(t, p)
    ks = np.arange(p + 1)[:, None]
    if kind == "partial":
        with np.errstate(invalid="ignore"):
            terms = (
                gammaln(p + 1) - gammaln(ks + 1) - gammaln(p - ks + 1)
                + np.where(ks == 0, 0.0, ks * lv) + np.where(ks == p, 0.0, (p - ks) * l1v)
            )
        sel = ks[:, 0] >= m if part == "kernel" else ks[:, 0] < m
        if not np.any(sel):
            return np.full(lv.shape, -np.inf)
        return math.log(p + 1) + logsumexp(terms[sel], axis=0)
    if kind == "singular":
        tp = float(t) * p
        if not float(t) < 1:
            raise ValueError("singular oracle needs t < 1")
        kk = ks[m:]
        with np.errstate(invalid="ignore"):
            terms = (kk - tp) * lv + np.where(kk == p, 0.0, (p - kk) * l1v) - betaln(kk - tp + 1.0, p - kk + 1.0)
        return logsumexp(terms, axis=0)
    raise ValueError(f"unknown kind {kind!r}")


def fs_oracle_kernel(p: int, t, x: ChartPoint, kind: str = "partial") -> LogValue:
    x = x.canonical()
    if kind == "singular" and x.chart == 0 and x.z == 0:
        raise DivisorError("singular kernel undefined on the divisor")
    return LogValue(float(fs_oracle_log(p, t, np.array([x.chart]), np.array([x.z]), kind)[0]))


# ----------------------------------------------------------------------
# checks
# ----------------------------------------------------------------------

@dataclass
class VariationalReport:
    log_kernel: float
    max_log_ratio: float  # max over samples of log(|S(x)|^2 / P(x))
    extremal_log_ratio: float
    n_samples: int
    violation: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return self.violation is None and abs(self.extremal_log_ratio) <= 1e-9


def variational_check(
    g: GramData, spec: SubspaceSpec, metric: MetricSpec, mode, x: ChartPoint, n_samples: int = 500, seed: int = 0
) -> VariationalReport:
    """Sample unit-norm sections and compare ``|S(x)|^2`` with the kernel at ``x``."""
    logp = kernel_at(g, spec, metric, mode, x).log_mag
    x = x.canonical()
    c, s = _scaled_conj_values(g, metric, np.array([x.chart]), np.array([x.z]))
    beta = np.conj(c[:, 0])  # S(x) = beta . a, scaled by e^{-s}
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((g.dim, n_samples)) + 1j * rng.standard_normal((g.dim, n_samples))
    norms = np.real(np.einsum("in,ij,jn->n", a.conj(), g.matrix, a))
    vals = np.abs(beta @ a) ** 2 / norms
    ratios = np.log(vals) + 2 * s[0] - logp
    worst = int(np.argmax(ratios))
    violation = a[:, worst] / math.sqrt(norms[worst]) if ratios[worst] > math.log1p(1e-9) else None
    # extremal section a* = G^{-1} c, normalised
    ext = np.linalg.solve(g.matrix, c[:, 0])
    ext_norm = np.real(ext.conj() @ g.matrix @ ext)
    ext_ratio = math.log(abs(beta @ ext) ** 2 / ext_norm) + 2 * s[0] - logp
    return VariationalReport(logp, float(ratios[worst]), float(ext_ratio), n_samples, violation)


def trace_identity(
    g: GramData, metric: MetricSpec, rule: QuadratureRule | None = None
) -> tuple[float, int]:
    """``(int_X P omega, dim)``; the integral is taken with the singular factor removed."""
    alpha = g.alpha
    rule = rule or QuadratureRule(*g.quadrature)
    if abs(rule.alpha - alpha) > 1e-12:
        raise ValueError("trace rule must carry the Gram's alpha")

    def f(chart, zeta):
        logp = kernel_log_field(g, metric, chart, zeta)
        if alpha:
            logp = logp - alpha * log_abs_z(chart, zeta)
        return np.exp(logp)

    return float(integrate_sphere(f, rule).value), g.dim


def sandwich_log_slack(
    g_full: GramData, g_partial: GramData, g_sing: GramData, metric: MetricSpec, chart, zeta
) -> tuple[np.ndarray, np.ndarray]:
    """Log-slacks of ``P~ e^{2 t p eta rho} <= P_{0,p} <= P_p`` at points off the divisor.

    Returns ``(log P_{0,p} - log P~ - 2tp eta rho, log P_p - log P_{0,p})``;
    each Gram is factored independently, so neither side is implied by the
    construction.
    """
    if g_sing.t is None or g_partial.m != g_sing.m or g_full.m != 0:
        raise ValueError("need full, partial (m = floor(tp)) and singular Grams of the same p")
    tf = float(g_sing.t)
    lp = kernel_log_field(g_full, metric, chart, zeta)
    l0 = kernel_log_field(g_partial, metric, chart, zeta)
    ls = kernel_log_field(g_sing, metric, chart, zeta)
    decay = 2 * tf * g_sing.p * eta_field(metric, chart, zeta) * rho_field(metric, chart, zeta)
    return l0 - ls - decay, lp - l0
