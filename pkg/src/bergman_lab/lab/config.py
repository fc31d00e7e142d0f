"""Experiment configuration: parsing and all-at-once validation."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from ..geometry import ChartPoint, MetricSpec

EXPERIMENTS = ("decay", "ratio", "localize", "expand", "t0")
SCHEDULES = ("radial", "theorem12-probe")

DEFAULT_TOLERANCES = {
    "decay_slope": 1e-3,  # L(x) >= 2 t rho(x) - tol
    "localize_rate": 0.1,
    "delta_floor": -1e-10,
    "b0_rel": 0.01,
    "b1_rel": 0.05,
    "t0_delta_floor": 1e-3,
}


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def parse_rational(v) -> Fraction:
    """``"3/10"``, ``[3, 10]``, ``{"num": 3, "den": 10}`` or an integer."""
    if isinstance(v, bool):
        raise ValueError("t must be rational")
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, str):
        return Fraction(v.strip())
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(a, int) for a in v):
        return Fraction(v[0], v[1])
    if isinstance(v, dict) and isinstance(v.get("num"), int) and isinstance(v.get("den"), int):
        return Fraction(v["num"], v["den"])
    raise ValueError(f"t must be a rational (\"n/d\", [n, d] or {{num, den}}), got {v!r}")


@dataclass(frozen=True)
class Schedule:
    kind: str
    params: dict

    def to_json(self) -> dict:
        return {"schedule": self.kind, **self.params}


@dataclass
class ExperimentConfig:
    experiment: str
    metric: MetricSpec
    t: Fraction
    p_grid: list[int]
    points: list = field(default_factory=list)  # ChartPoint or Schedule
    backend: str = "oracle"
    tolerances: dict = field(default_factory=dict)
    cache_dir: str = ".bergman_cache"
    seed: int = 0
    K: list[ChartPoint] | float | None = None  # t0 only

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    @property
    def resolved_cache_dir(self) -> Path:
        return Path(os.environ.get("BERGMAN_CACHE") or self.cache_dir)

    def explicit_points(self) -> list[ChartPoint]:
        out = []
        for x in self.points:
            if isinstance(x, ChartPoint):
                out.append(x)
            elif x.kind == "radial":
                th = float(x.params.get("theta", 0.0))
                for r in x.params["radii"]:
                    out.append(ChartPoint.from_affine(complex(r * np.cos(th), r * np.sin(th))))
        return out

    def probe(self) -> Schedule | None:
        for x in self.points:
            if isinstance(x, Schedule) and x.kind == "theorem12-probe":
                return x
        return None

    def to_json(self) -> dict:
        d = {
            "experiment": self.experiment,
            "metric": self.metric.to_json(),
            "t": f"{self.t.numerator}/{self.t.denominator}",
            "p_grid": list(self.p_grid),
            "points": [x.to_json() for x in self.points],
            "backend": self.backend,
            "tolerances": dict(sorted(self.tolerances.items())),
            "seed": self.seed,
        }
        if self.K is not None:
            d["K"] = self.K if isinstance(self.K, float) else [x.to_json() for x in self.K]
        return d

    def config_hash(self) -> str:
        # cache_dir is a location, not content
        s = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(s.encode()).hexdigest()


def _parse_point(d, errors: list[str], where: str):
    if not isinstance(d, dict):
        errors.append(f"{where}: expected an object, got {d!r}")
        return None
    if "schedule" in d:
        kind = d["schedule"]
        if kind not in SCHEDULES:
            errors.append(f"{where}: unknown schedule {kind!r} (expected one of {', '.join(SCHEDULES)})")
            return None
        params = {k: v for k, v in d.items() if k != "schedule"}
        if kind == "radial":
            radii = params.get("radii")
            if not isinstance(radii, list) or not radii or not all(isinstance(r, (int, float)) and r > 0 for r in radii):
                errors.append(f"{where}: radial schedule needs a non-empty list of positive 'radii'")
                return None
        else:
            c = params.get("C", 1.0)
            if not isinstance(c, (int, float)) or c <= 0:
                errors.append(f"{where}: theorem12-probe needs C > 0")
                return None
            params.setdefault("C", float(c))
        return Schedule(kind, params)
    try:
        return ChartPoint.from_json(d)
    except (KeyError, TypeError, ValueError) as e:
        errors.append(f"{where}: bad point {d!r} ({e})")
        return None


def parse_config(d: dict, experiment: str | None = None) -> ExperimentConfig:
    """Validate a config mapping; every problem is reported in one :class:`ConfigError`."""
    errors: list[str] = []
    exp = experiment or d.get("experiment")
    if exp not in EXPERIMENTS:
        errors.append(f"experiment must be one of {', '.join(EXPERIMENTS)}, got {exp!r}")

    metric = None
    try:
        metric = MetricSpec.from_json(d.get("metric", {}))
    except (KeyError, TypeError, ValueError) as e:
        errors.append(f"metric: {e}")

    t = None
    if "t" not in d:
        errors.append("t is required")
    else:
        try:
            t = parse_rational(d["t"])
            if not 0 < t < 1:
                errors.append("t must satisfy 0 < t < 1 for model positivity")
        except (ValueError, ZeroDivisionError) as e:
            errors.append(str(e))

    p_grid = d.get("p_grid", [])
    if not isinstance(p_grid, list) or not all(isinstance(p, int) and not isinstance(p, bool) for p in p_grid):
        errors.append("p_grid must be an explicit list of integers")
        p_grid = []
    else:
        if exp != "t0" and not p_grid:
            errors.append("p_grid must not be empty")
        if any(p < 1 for p in p_grid):
            errors.append("p_grid entries must be >= 1")
        if any(b <= a for a, b in zip(p_grid, p_grid[1:])):
            errors.append("p_grid must be strictly increasing")

    # default: closed forms when they exist, quadrature otherwise
    backend = d.get("backend", "oracle" if metric is None or metric.is_fs else "quadrature")
    if backend not in ("oracle", "quadrature"):
        errors.append(f"backend must be 'oracle' or 'quadrature', got {backend!r}")
    elif metric is not None and backend == "oracle" and not metric.is_fs:
        errors.append("oracle backend needs the Fubini-Study metric (no perturbation)")
    if p_grid and backend == "quadrature" and max(p_grid) > 60:
        errors.append("quadrature backend is validated for p <= 60")
    if p_grid and backend == "oracle" and max(p_grid) > 300:
        errors.append("oracle backend is validated for p <= 300")

    points = []
    for i, e in enumerate(d.get("points", [])):
        x = _parse_point(e, errors, f"points[{i}]")
        if x is not None:
            points.append(x)
    if exp in ("decay", "localize", "expand") and not any(
        isinstance(x, ChartPoint) or x.kind == "radial" for x in points
    ):
        errors.append(f"{exp} needs at least one point")
    if exp == "ratio" and not any(isinstance(x, Schedule) and x.kind == "theorem12-probe" for x in points):
        errors.append("ratio needs a theorem12-probe schedule entry")

    tolerances = d.get("tolerances", {})
    if not isinstance(tolerances, dict):
        errors.append("tolerances must be a mapping")
        tolerances = {}
    for k, v in tolerances.items():
        if k not in DEFAULT_TOLERANCES:
            errors.append(f"unknown tolerance {k!r}")
        elif not isinstance(v, (int, float)):
            errors.append(f"tolerance {k!r} must be a number")

    seed = d.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        errors.append("seed must be a 64-bit unsigned integer")

    K = d.get("K")
    if K is not None:
        if isinstance(K, (int, float)) and not isinstance(K, bool):
            K = float(K)
        elif isinstance(K, list):
            K = [x for i, e in enumerate(K) if (x := _parse_point(e, errors, f"K[{i}]")) is not None]
        else:
            errors.append("K must be a rho threshold or a list of points")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        experiment=exp,
        metric=metric,
        t=t,
        p_grid=list(p_grid),
        points=points,
        backend=backend,
        tolerances=dict(tolerances),
        cache_dir=str(d.get("cache_dir", ".bergman_cache")),
        seed=seed,
        K=K,
    )


def load_config(path, experiment: str | None = None) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(json.load(fh), experiment)
