"""Content-addressed on-disk cache of Gram data.

Entries are JSON with hexadecimal float literals, so a round trip is bit exact.
Each file carries a sha256 checksum of its payload; a mismatch (truncation,
bit rot) is treated as a miss with a warning.  Writes go through a temporary
file and an atomic rename under a per-key advisory lock.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np
from filelock import FileLock

from ..geometry import MetricSpec
from ..quadrature import QuadratureRule
from ..spectra import GramData, SubspaceSpec, gram_matrix

log = logging.getLogger(__name__)

FORMAT = 1


class CacheCorruption(RuntimeWarning):
    pass


def _mode_key(t) -> str:
    if t is None:
        return "smooth"
    f = Fraction(t) if not isinstance(t, float) else Fraction(t).limit_denominator(10**12)
    return f"singular:{f.numerator}/{f.denominator}"


def cache_key(metric: MetricSpec, spec: SubspaceSpec, t, rule_descriptor) -> str:
    n_ang, n_rad, alpha = rule_descriptor
    payload = {
        "metric": metric.to_json(),
        "p": spec.p,
        "m": spec.m,
        "mode": _mode_key(t),
        "rule": [int(n_ang), int(n_rad), float(alpha).hex()],
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _hex(a: np.ndarray):
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return {"re": [float(x).hex() for x in a.real.ravel()], "im": [float(x).hex() for x in a.imag.ravel()],
                "shape": list(a.shape)}
    return {"re": [float(x).hex() for x in a.ravel()], "shape": list(a.shape)}


def _unhex(d) -> np.ndarray:
    re = np.array([float.fromhex(x) for x in d["re"]]).reshape(d["shape"])
    if "im" in d:
        return re + 1j * np.array([float.fromhex(x) for x in d["im"]]).reshape(d["shape"])
    return re


def _encode(g: GramData) -> dict:
    return {
        "format": FORMAT,
        "p": g.p,
        "m": g.m,
        "t": _mode_key(g.t),
        "matrix": _hex(g.matrix),
        "chol": _hex(g.chol),
        "log_norms": _hex(g.log_norms),
        "cond_estimate": float(g.cond_estimate).hex(),
        "quadrature": [g.quadrature[0], g.quadrature[1], float(g.quadrature[2]).hex()],
        "metric_hash": g.metric_hash,
        "fallback": bool(g.fallback),
    }


def _decode(d: dict, t) -> GramData:
    q = d["quadrature"]
    return GramData(
        p=int(d["p"]),
        m=int(d["m"]),
        t=t,
        matrix=_unhex(d["matrix"]),
        chol=_unhex(d["chol"]),
        log_norms=_unhex(d["log_norms"]),
        cond_estimate=float.fromhex(d["cond_estimate"]),
        quadrature=(int(q[0]), int(q[1]), float.fromhex(q[2])),
        metric_hash=d["metric_hash"],
        fallback=bool(d["fallback"]),
    )


class GramCache:
    def __init__(self, root):
        self.root = Path(root)
        self.hits = 0
        self.misses = 0

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, metric: MetricSpec, spec: SubspaceSpec, t, rule: QuadratureRule) -> GramData | None:
        key = cache_key(metric, spec, t, rule.descriptor)
        path = self._path(key)
        if not path.exists():
            self.misses += 1
            return None
        try:
            raw = path.read_text()
            doc = json.loads(raw)
            body = json.dumps(doc["payload"], sort_keys=True, separators=(",", ":"))
            if hashlib.sha256(body.encode()).hexdigest() != doc["checksum"]:
                raise ValueError("checksum mismatch")
            g = _decode(doc["payload"], t)
        except (OSError, ValueError, KeyError, TypeError) as e:
            warnings.warn(f"corrupted cache entry {path.name} ({e}); recomputing", CacheCorruption, stacklevel=2)
            self.misses += 1
            return None
        self.hits += 1
        return g

    def put(self, metric: MetricSpec, spec: SubspaceSpec, t, rule: QuadratureRule, g: GramData) -> Path:
        key = cache_key(metric, spec, t, rule.descriptor)
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = _encode(g)
        body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        doc = {"checksum": hashlib.sha256(body.encode()).hexdigest(), "payload": payload}
        with FileLock(str(path) + ".lock"):
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            try:
                with os.fdopen(fd, "w") as fh:
                    json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
        return path

    def provider(self):
        """``gram_provider`` for :class:`~bergman_lab.asymptotics.KernelSource`."""

        def provide(spec: SubspaceSpec, metric: MetricSpec, t=None) -> GramData:
            alpha = 0.0
            if t is not None:
                a = 2.0 * (spec.m - float(t) * spec.p)
                alpha = 0.0 if abs(a) < 1e-12 else a
            rule = QuadratureRule.for_degree(spec.p, alpha)
            g = self.get(metric, spec, t, rule)
            if g is None:
                g = gram_matrix(spec, metric, t, rule)
                self.put(metric, spec, t, rule, g)
            return g

        return provide
