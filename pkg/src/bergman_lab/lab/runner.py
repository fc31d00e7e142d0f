"""Experiment orchestration and deterministic report emission."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .. import __version__
from ..asymptotics import (
    AnalysisReport,
    KernelSource,
    Verdict,
    decay_analysis,
    expansion_analysis,
    localization_analysis,
    ratio_analysis,
)
from ..geometry import FS, ChartPoint, CutoffProfile, MetricSpec, estimate_t0
from ..quadrature import disk_moment_check, disk_moment_quadrature
from ..spectra import (
    SubspaceSpec,
    fs_oracle_log,
    gram_matrix,
    kernel_log_field,
    sandwich_log_slack,
    trace_identity,
    variational_check,
)
from .cache import GramCache
from .config import ExperimentConfig

log = logging.getLogger(__name__)


@dataclass
class ExperimentReport:
    experiment: str
    verdicts: dict[str, Verdict] = field(default_factory=dict)
    fitted_constants: dict[str, float] = field(default_factory=dict)
    tables: dict[str, str] = field(default_factory=dict)
    provenance: dict[str, str] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and bool(self.verdicts) and all(v.passed for v in self.verdicts.values())

    def to_json(self) -> dict:
        from ..asymptotics import _jsonable

        return {
            "experiment": self.experiment,
            "passed": self.passed,
            "verdicts": {k: v.to_json() for k, v in sorted(self.verdicts.items())},
            "fitted_constants": {k: _jsonable(v) for k, v in sorted(self.fitted_constants.items())},
            "tables": dict(sorted(self.tables.items())),
            "provenance": self.provenance,
            "flags": list(self.flags),
            "error": self.error,
        }


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def csv_bytes(columns, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue().encode()


def _write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def _source(cfg: ExperimentConfig, cache: GramCache | None) -> KernelSource:
    provider = cache.provider() if (cache is not None and cfg.backend == "quadrature") else None
    return KernelSource(cfg.metric, cfg.backend, provider)


def _analysis(cfg: ExperimentConfig, cache: GramCache | None) -> AnalysisReport:
    src = _source(cfg, cache)
    pts = cfg.explicit_points()
    if cfg.experiment == "decay":
        return decay_analysis(cfg.metric, cfg.t, pts, cfg.p_grid, src, tol=cfg.tol("decay_slope"))
    if cfg.experiment == "ratio":
        probe = cfg.probe()
        return ratio_analysis(
            cfg.metric, cfg.t, float(probe.params["C"]), cfg.p_grid, src, fixed_points=pts,
            theta=float(probe.params.get("theta", 0.0)),
        )
    if cfg.experiment == "localize":
        return localization_analysis(
            cfg.metric, cfg.t, pts, cfg.p_grid, src, min_rate=cfg.tol("localize_rate"), delta_floor=cfg.tol("delta_floor")
        )
    if cfg.experiment == "expand":
        return expansion_analysis(cfg.metric, cfg.t, pts, cfg.p_grid, src, tol_b0=cfg.tol("b0_rel"), tol_b1=cfg.tol("b1_rel"))
    if cfg.experiment == "t0":
        rep = AnalysisReport("t0")
        t0 = estimate_t0(cfg.metric, cfg.K, cfg.metric.eta, delta_floor=cfg.tol("t0_delta_floor"))
        rep.fitted["t0"] = t0
        rep.verdicts["e:t0"] = Verdict(float(cfg.t) < t0, t0, f"> t = {cfg.t}", "certified lower bound for t0")
        return rep
    raise ValueError(f"unknown experiment {cfg.experiment!r}")


def run(cfg: ExperimentConfig, out_dir=None, cache: GramCache | None = None) -> ExperimentReport:
    """Run one experiment; files go to ``out_dir`` when given.

    Backend failures are captured in the report (``error``) rather than raised.
    """
    if cache is None and cfg.backend == "quadrature":
        cache = GramCache(cfg.resolved_cache_dir)
    rep = ExperimentReport(cfg.experiment, provenance={"config_hash": cfg.config_hash(), "version": __version__})
    try:
        a = _analysis(cfg, cache)
    except Exception as e:  # noqa: BLE001 - one experiment must not sink a batch
        log.error("experiment %s failed: %s", cfg.experiment, e)
        rep.error = f"{type(e).__name__}: {e}"
        a = None
    if a is not None:
        rep.verdicts = a.verdicts
        rep.fitted_constants = a.fitted
        rep.flags = a.flags
    if out_dir is not None:
        out = Path(out_dir)
        if a is not None and a.columns:
            name = f"{cfg.experiment}.csv"
            _write(out / name, csv_bytes(a.columns, a.rows))
            rep.tables[cfg.experiment] = name
        _write(out / f"{cfg.experiment}.json", (json.dumps(rep.to_json(), indent=2, sort_keys=True) + "\n").encode())
    return rep


def _run_one(args):
    cfg, out = args
    return run(cfg, out)


def run_batch(configs: list[ExperimentConfig], out_root, workers: int = 1) -> list[ExperimentReport]:
    """Run each config into ``out_root/<index>-<experiment>``; results keep input order."""
    out_root = Path(out_root)
    jobs = [(c, out_root / f"{i:03d}-{c.experiment}") for i, c in enumerate(configs)]
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_one, jobs))


# ----------------------------------------------------------------------
# selftest
# ----------------------------------------------------------------------

SELFTEST_ANCHORS = (
    "Thm1.1", "Thm3.1", "Lemma3.2", "Cor3.3", "Thm1.2", "e:bv", "e:exp1", "e:exp2",
    "e:exp3o", "e:exp3", "e:coeff", "e:pPvar", "e:ip", "e:t0",
)


def _merge(into: ExperimentReport, a: AnalysisReport, prefix: str):
    for k, v in a.verdicts.items():
        into.verdicts[k] = v
    for k, v in a.fitted.items():
        into.fitted_constants[f"{prefix}.{k}"] = v
    into.flags.extend(f"{prefix}: {f}" for f in a.flags)


def selftest(out_dir=None, seed: int = 0) -> ExperimentReport:
    """FS oracle suite touching every anchor; quadrature only at small ``p``."""
    rep = ExperimentReport("selftest", provenance={"version": __version__, "seed": str(seed)})
    tables: list[tuple[str, AnalysisReport]] = []
    rng = np.random.default_rng(seed)
    started = time.perf_counter()

    # Thm1.1, Thm3.1, Cor3.3, e:exp1, e:exp2
    d = decay_analysis(FS, Fraction(1, 2), [ChartPoint(0, 0.01), ChartPoint(0, 0.1), ChartPoint(0, 0.3j)],
                       list(range(100, 201, 10)))
    _merge(rep, d, "decay")
    tables.append(("decay", d))
    slope = d.fitted["L[1]"]
    rep.verdicts["Thm1.1:rate-u0.01"] = Verdict(abs(slope / -1.6194 - 1) <= 0.02, slope, "-1.6194 +- 2%")

    # disk moment inequality
    viol, worst = 0, 0.0
    for _ in range(200):
        coeffs = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        k = int(rng.integers(0, 21))
        lhs, rhs, ok = disk_moment_check(coeffs, k)
        viol += not ok
    for _ in range(5):
        coeffs = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        k = int(rng.integers(0, 6))
        lhs, rhs, _ = disk_moment_check(coeffs, k)
        ql, qr = disk_moment_quadrature(coeffs, k)
        worst = max(worst, abs(ql - lhs) / lhs, abs(qr - rhs) / rhs)
    rep.verdicts["Lemma3.2:violations"] = Verdict(viol == 0, float(viol), 0)
    rep.verdicts["Lemma3.2:quadrature"] = Verdict(worst <= 1e-8, worst, 1e-8)

    # Thm1.2
    r = ratio_analysis(FS, Fraction(3, 10), 1.0, list(range(50, 301, 25)), fixed_points=[ChartPoint(0, 1.0)])
    _merge(rep, r, "ratio")
    tables.append(("ratio", r))

    # e:exp3o, e:exp3, e:coeff
    fsc = MetricSpec(hsigma_scale=1.0, eta=CutoffProfile(-0.8, -0.16))
    loc = localization_analysis(fsc, Fraction(3, 10), [ChartPoint(1, 1 / 3)], list(range(20, 61, 5)))
    _merge(rep, loc, "localize")
    tables.append(("localize", loc))
    d50 = float(fs_oracle_log(50, Fraction(3, 10), np.array([1]), np.array([1 / 3 + 0j]), "partial", "complement")[0]
                - math.log(51))
    rep.verdicts["e:exp3o:delta50-u9"] = Verdict(d50 < math.log(1e-20), d50, "log delta_50 < log 1e-20")
    ex = expansion_analysis(fsc, Fraction(3, 10), [ChartPoint(1, 1 / 3), ChartPoint(1, 0.2j)], list(range(20, 61, 5)),
                            tol_resid=1e-6)
    _merge(rep, ex, "expand")
    tables.append(("expand", ex))

    # e:bv, e:pPvar, e:ip on small quadrature Grams
    t = Fraction(3, 10)
    chart = rng.integers(0, 2, 16)
    zeta = np.sqrt(rng.uniform(0.01, 1.0, 16)) * np.exp(2j * np.pi * rng.uniform(size=16))
    worst_bv, worst_ip, var_ok = math.inf, 0.0, True
    for p in (7, 10, 16):
        gf = gram_matrix(SubspaceSpec(p, 0), FS)
        gp = gram_matrix(SubspaceSpec.partial(p, t), FS)
        gs = gram_matrix(SubspaceSpec.partial(p, t), FS, t)
        lo, up = sandwich_log_slack(gf, gp, gs, FS, chart, zeta)
        worst_bv = min(worst_bv, float(lo.min()), float(up.min()))
        for g in (gf, gp, gs):
            val, dim = trace_identity(g, FS)
            worst_ip = max(worst_ip, abs(val - dim) / dim)
        x = ChartPoint(int(chart[0]), complex(zeta[0]))
        vr = variational_check(gp, gp.spec, FS, None, x, n_samples=200, seed=seed)
        var_ok &= vr.ok
        po = kernel_log_field(gp, FS, chart, zeta) - fs_oracle_log(p, t, chart, zeta, "partial")
        worst_ip = max(worst_ip, float(np.max(np.abs(po))))
    rep.verdicts["e:bv:sandwich"] = Verdict(worst_bv >= -1e-8, worst_bv, ">= -1e-8")
    rep.verdicts["e:ip:trace"] = Verdict(worst_ip <= 1e-5, worst_ip, 1e-5)
    rep.verdicts["e:pPvar:variational"] = Verdict(bool(var_ok), float(var_ok), "sup attained, never exceeded")

    # e:t0
    t0 = estimate_t0(FS, None, None)
    rep.verdicts["e:t0:fs"] = Verdict(abs(t0 - 0.999) <= 1e-3, t0, "0.999 +- 1e-3")

    missing = [a for a in SELFTEST_ANCHORS if not any(k.startswith(a + ":") for k in rep.verdicts)]
    rep.verdicts["selftest:anchor-coverage"] = Verdict(not missing, float(len(missing)), 0, ",".join(missing))
    rep.fitted_constants["wall_seconds"] = time.perf_counter() - started

    if out_dir is not None:
        out = Path(out_dir)
        for name, a in tables:
            _write(out / f"{name}.csv", csv_bytes(a.columns, a.rows))
            rep.tables[name] = f"{name}.csv"
        body = rep.to_json()
        body["fitted_constants"].pop("wall_seconds", None)  # keep the JSON byte-stable
        _write(out / "selftest.json", (json.dumps(body, indent=2, sort_keys=True) + "\n").encode())
    return rep
