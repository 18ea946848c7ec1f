"""Test functions on a nilmanifold with known integrals.

Every observable is a callable on batches of points (second-kind coordinates,
shape ``batch + (d,)``) returning a float array of shape ``batch``.  Points do
not need to be reduced: all observables are Lambda-invariant by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import beta as beta_fn

from .errors import SupportTooLarge
from .nilmanifold import Nilmanifold


class Observable:
    """Base class; subclasses set ``manifold`` and implement ``__call__``."""

    manifold: Nilmanifold
    kind: str = "observable"

    #: exact Haar integral when known, else None
    integral: float | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def focus(self, rng: np.random.Generator, size: int) -> np.ndarray | None:
        """Points where the observable varies most, used to sharpen Hölder estimates."""
        return None

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass(eq=False)
class Constant(Observable):
    manifold: Nilmanifold
    value: float = 1.0
    kind = "constant"

    @property
    def integral(self) -> float:
        return float(self.value)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], float(self.value))

    def to_dict(self):
        return {"kind": self.kind, "value": self.value}


@dataclass(eq=False)
class Character(Observable):
    """cos or sin of 2 pi <m, pi_ab(x)> with m an integer frequency on the toral quotient."""

    manifold: Nilmanifold
    m: tuple
    phase: str = "cos"
    kind = "character"

    def __post_init__(self):
        self.m = tuple(int(v) for v in self.m)
        if len(self.m) != self.manifold.abelian_dim:
            raise ValueError(f"frequency must have length l = {self.manifold.abelian_dim}")
        if self.phase not in ("cos", "sin"):
            raise ValueError("phase must be 'cos' or 'sin'")

    @property
    def integral(self) -> float:
        if any(self.m):
            return 0.0
        return 1.0 if self.phase == "cos" else 0.0

    def angle(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        l = len(self.m)
        return 2 * np.pi * (x[..., :l] @ np.asarray(self.m, dtype=float))

    def __call__(self, x):
        a = self.angle(x)
        return np.cos(a) if self.phase == "cos" else np.sin(a)

    def to_dict(self):
        return {"kind": self.kind, "m": list(self.m), "phase": self.phase}


def profile(s: np.ndarray, degree: int = 3) -> np.ndarray:
    """(1 - s^2)^degree on [0, 1), zero beyond; C^(degree-1) at the cutoff."""
    s = np.asarray(s, dtype=float)
    return np.where(s < 1.0, np.clip(1.0 - s * s, 0.0, None) ** degree, 0.0)


def profile_max_slope(degree: int) -> float:
    """max_s |d/ds (1 - s^2)^k|, attained at s = 1/sqrt(2k - 1)."""
    if degree == 1:
        return 2.0
    s = 1.0 / math.sqrt(2 * degree - 1)
    return 2 * degree * s * (1 - s * s) ** (degree - 1)


@dataclass(eq=False)
class Bump(Observable):
    """Lattice-periodized radial bump around ``center`` in the local metric."""

    manifold: Nilmanifold
    center: np.ndarray
    radius: float
    degree: int = 3
    kind = "bump"

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.center.shape != (self.manifold.dim,):
            raise ValueError("center must be a point of X")
        if self.degree < 1:
            raise ValueError("profile degree must be >= 1")
        guard = self.manifold.injectivity_guard
        if not 0 < self.radius < guard:
            raise SupportTooLarge(f"bump radius {self.radius} must lie in (0, {guard:.6g})")

    @property
    def integral(self) -> float:
        # Haar on G is Lebesgue in log coordinates around the center (right invariance)
        d = self.manifold.dim
        sphere = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
        rho = self.radius / self.manifold.metric_scale
        return sphere * rho ** d * beta_fn(d / 2, self.degree + 1) / 2

    @property
    def lipschitz(self) -> float:
        return profile_max_slope(self.degree) / self.radius

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        disp = self.manifold.displacements(np.broadcast_to(self.center, x.shape), x, central_only=True)
        return profile(disp / self.radius, self.degree).sum(axis=-1)

    def focus(self, rng, size):
        d = self.manifold.dim
        u = rng.standard_normal((size, d))
        u *= (self.radius / self.manifold.metric_scale) * rng.random((size, 1)) / np.linalg.norm(u, axis=1, keepdims=True)
        return self.manifold.translate_first(u, np.broadcast_to(self.center, (size, d)))

    def to_dict(self):
        return {"kind": self.kind, "center": self.center.tolist(), "radius": self.radius, "degree": self.degree}


def ball_sample(manifold: Nilmanifold, eps: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples u in L(G) with metric_scale * |u| <= eps."""
    d = manifold.dim
    u = rng.standard_normal((size, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return u * (eps / manifold.metric_scale) * rng.random((size, 1)) ** (1.0 / d)


@dataclass(eq=False)
class Mollified(Observable):
    """f_eps(x) = average of f(exp(u) x) over a fixed sample of u in the eps-ball."""

    manifold: Nilmanifold
    base: Observable
    epsilon: float
    shifts: np.ndarray  # (n, d) first-kind translation vectors
    kind = "mollified"

    @property
    def integral(self):
        return self.base.integral

    def __call__(self, x, chunk: int = 1 << 16):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, x.shape[-1])
        out = np.zeros(flat.shape[0])
        n = self.shifts.shape[0]
        step = max(1, chunk // n)
        for i in range(0, flat.shape[0], step):
            pts = flat[i:i + step]
            moved = self.manifold.translate_first(self.shifts[None, :, :], pts[:, None, :])
            out[i:i + step] = self.base(moved).mean(axis=1)
        return out.reshape(x.shape[:-1])

    def focus(self, rng, size):
        return self.base.focus(rng, size)

    def to_dict(self):
        return {"kind": self.kind, "base": self.base.to_dict(), "epsilon": self.epsilon,
                "samples": int(self.shifts.shape[0])}


def mollify(f: Observable, eps: float, sample_count: int, rng: np.random.Generator) -> Observable:
    """Monte-Carlo version of the left convolution with the normalized eps-ball."""
    if not 0 < eps < 0.5:
        raise ValueError("epsilon must lie in (0, 1/2)")
    if isinstance(f, Constant):
        return f
    return Mollified(f.manifold, f, eps, ball_sample(f.manifold, eps, sample_count, rng))


@dataclass(eq=False)
class Shifted(Observable):
    """f - c, used to center observables."""

    base: Observable
    offset: float

    @property
    def manifold(self):
        return self.base.manifold

    @property
    def kind(self):
        return self.base.kind

    @property
    def integral(self):
        return None if self.base.integral is None else self.base.integral - self.offset

    def __call__(self, x):
        return self.base(x) - self.offset

    def focus(self, rng, size):
        return self.base.focus(rng, size)

    def to_dict(self):
        return {**self.base.to_dict(), "offset": self.offset}


def centered(f: Observable, mean: float | None = None) -> Observable:
    """Subtract the exact integral (or a supplied estimate)."""
    c = f.integral if mean is None else mean
    if c is None:
        raise ValueError("observable has no known integral; supply an estimate")
    return f if c == 0 else Shifted(f, float(c))


@dataclass
class HolderEstimate:
    """Sampled lower bound for the C^theta norm: ``seminorm + sup``."""

    theta: float
    seminorm: float
    sup: float
    pair_count: int

    @property
    def norm(self) -> float:
        return self.seminorm + self.sup

    def to_dict(self) -> dict:
        return {"theta": self.theta, "seminorm": self.seminorm, "sup": self.sup,
                "norm": self.norm, "pairs": self.pair_count}


def holder_norm_estimate(f: Observable, theta: float, pair_count: int, rng: np.random.Generator,
                         scales=(1e-1, 3e-2, 1e-2, 3e-3)) -> HolderEstimate:
    """Max of |f(x) - f(y)| / d(x, y)^theta over sampled nearby pairs, plus sup |f|.

    Base points are half Haar samples and half drawn from the observable's
    ``focus`` region (if it has one); partners are y = exp(u) x with |u| at each
    of the given scales.
    """
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    X = f.manifold
    d = X.dim
    per = max(1, pair_count // len(scales))
    best = 0.0
    sup = 0.0
    for s in scales:
        x = X.haar_sample(rng, per)
        hint = f.focus(rng, per // 2)
        if hint is not None:
            x[: per // 2] = hint
        u = rng.standard_normal((per, d))
        u *= s / (X.metric_scale * np.linalg.norm(u, axis=1, keepdims=True))
        y = X.translate_first(u, x)
        fx, fy = f(x), f(y)
        dist = X.local_distance(x, y)
        ok = dist > 0
        if ok.any():
            best = max(best, float((np.abs(fx - fy)[ok] / dist[ok] ** theta).max()))
        sup = max(sup, float(np.abs(fx).max()), float(np.abs(fy).max()))
    return HolderEstimate(theta, best, sup, per * len(scales))


def observable_from_config(manifold: Nilmanifold, cfg: dict, rng: np.random.Generator | None = None) -> Observable:
    """Build an observable from a tagged dict ``{"kind": ..., ...}``."""
    kind = cfg.get("kind")
    if kind == "constant":
        return Constant(manifold, float(cfg.get("value", 1.0)))
    if kind == "character":
        return Character(manifold, tuple(cfg["m"]), cfg.get("phase", "cos"))
    if kind == "bump":
        return Bump(manifold, np.asarray(cfg["center"], dtype=float), float(cfg["radius"]),
                    int(cfg.get("degree", 3)))
    if kind == "mollified":
        base = observable_from_config(manifold, cfg["base"], rng)
        rng = rng if rng is not None else np.random.default_rng(int(cfg.get("seed", 0)))
        return mollify(base, float(cfg["epsilon"]), int(cfg.get("samples", 256)), rng)
    raise ValueError(f"unknown observable kind {kind!r}")
