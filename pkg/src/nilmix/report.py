"""Experiment reports and rate fits."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AllPointsNoiseDominated, NonPositiveError, TooFewPoints


@dataclass
class FitResult:
    rate: float
    intercept: float
    r2: float
    points: int
    dropped: int = 0  # non-positive values removed before the fit

    def to_dict(self) -> dict:
        return {"rate": self.rate, "intercept": self.intercept, "r2": self.r2,
                "points": self.points, "dropped": self.dropped}


def rate_fit(xs, ys, model: str = "log-linear", drop_nonpositive: bool = True) -> FitResult:
    """OLS fit of log y against x (``log-linear``) or log x (``log-log``); rate = -slope."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if model not in ("log-linear", "log-log"):
        raise ValueError(f"unknown model {model!r}")
    finite = np.isfinite(xs) & np.isfinite(ys)
    pos = finite & (ys > 0)
    if model == "log-log":
        pos &= xs > 0
    dropped = int(finite.sum() - pos.sum())
    if dropped and not drop_nonpositive:
        raise NonPositiveError(f"{dropped} non-positive values cannot be log-transformed")
    if pos.sum() < 4:
        raise TooFewPoints(f"need at least 4 positive finite points, got {int(pos.sum())}")
    u = np.log(xs[pos]) if model == "log-log" else xs[pos]
    v = np.log(ys[pos])
    slope, intercept = np.polyfit(u, v, 1)
    resid = v - (slope * u + intercept)
    ss = ((v - v.mean()) ** 2).sum()
    r2 = 1.0 - (resid ** 2).sum() / ss if ss > 0 else 1.0
    return FitResult(float(-slope), float(intercept), float(r2), int(pos.sum()), dropped)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


@dataclass
class ExperimentReport:
    """Series of estimates with standard errors, errors against a reference and fit results."""

    command: str
    parameter: str
    params: list
    means: np.ndarray
    ses: np.ndarray
    errors: np.ndarray
    noisy: np.ndarray  # True where the error is within the noise threshold
    budget: int = 0
    flags: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    extra_columns: dict = field(default_factory=dict)

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        self.ses = np.asarray(self.ses, dtype=float)
        self.errors = np.asarray(self.errors, dtype=float)
        self.noisy = np.asarray(self.noisy, dtype=bool)

    @property
    def usable(self) -> int:
        return int((~self.noisy).sum())

    def fit(self, model: str) -> FitResult | None:
        """Fit the non-noise-dominated points; results go to ``summary``."""
        keep = ~self.noisy
        if not keep.any():
            raise AllPointsNoiseDominated(f"every {self.command} point is within the noise threshold")
        try:
            res = rate_fit(np.asarray(self.params, dtype=float)[keep], self.errors[keep], model)
        except TooFewPoints:
            self.flags.append("TooFewPoints")
            self.summary.update({"rate": None, "r2": None, "model": model})
            return None
        if res.dropped:
            self.flags.append("ZerosDropped")
        self.summary.update({"rate": res.rate, "intercept": res.intercept, "r2": res.r2,
                             "fit_points": res.points, "model": model})
        return res

    def rows(self):
        for i, p in enumerate(self.params):
            flag = "noise" if self.noisy[i] else "ok"
            row = [_fmt(p), _fmt(self.means[i]), _fmt(self.ses[i]), _fmt(self.errors[i]), flag]
            row += [_fmt(v[i]) for v in self.extra_columns.values()]
            yield row

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.parameter, "mean", "se", "error", "flag", *self.extra_columns])
        w.writerows(self.rows())
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"command": self.command, "budget": self.budget, "flags": list(self.flags),
                "usable_points": self.usable, **_jsonable(self.summary)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)
