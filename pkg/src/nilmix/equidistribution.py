"""Box maps, their averages along translated orbits, and unstable-leaf averages.

Box integrals are estimated by antithetic stratified sampling: the box is cut
into a grid of strata and each stratum receives two independent mirror pairs
(t, 2c - t) about its center.  The pair averages cancel the linear part of the
integrand inside a stratum, and the difference of the two pairs gives an
unbiased variance estimate, so every mean still comes with a standard error.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SearchBoxTooLarge
from .nilmanifold import Nilmanifold
from .observables import Constant, Observable
from .report import ExperimentReport, rate_fit  # noqa: F401  (rate_fit re-exported)
from .spectral import Automorphism, JordanSplit, _canonical_sign

__all__ = [
    "BoxMap", "UnstableChart", "box_average", "stratified_average", "dichotomy_probe",
    "DichotomyResult", "box_rate_experiment", "unstable_average", "unstable_rate_experiment", "rate_fit",
]


@dataclass(eq=False)
class BoxMap:
    """iota(t) = v + t_1 w_1 + ... + t_k w_k on the box prod [0, T_i]."""

    manifold: Nilmanifold
    v: np.ndarray
    directions: np.ndarray  # (k, d)
    sides: np.ndarray  # (k,)

    def __post_init__(self):
        d = self.manifold.dim
        self.v = np.asarray(self.v, dtype=float)
        self.directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        self.sides = np.atleast_1d(np.asarray(self.sides, dtype=float))
        k = self.directions.shape[0]
        if self.v.shape != (d,) or self.directions.shape[1] != d:
            raise DimensionMismatch("box vectors must live in L(G)")
        if k < 1 or self.sides.shape != (k,):
            raise ValueError("need one side length per direction and k >= 1")
        if np.any(self.sides <= 0):
            raise ValueError("box sides must be positive")
        sv = np.linalg.svd(self.directions, compute_uv=False)
        if sv[-1] <= 1e-10 * max(sv[0], 1.0):
            raise ValueError("box directions are linearly dependent")

    @property
    def k(self) -> int:
        return self.directions.shape[0]

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def min_side(self) -> float:
        return float(self.sides.min())

    def __call__(self, t: np.ndarray) -> np.ndarray:
        return self.v + np.asarray(t) @ self.directions

    def permuted(self, order) -> "BoxMap":
        order = list(order)
        return BoxMap(self.manifold, self.v, self.directions[order], self.sides[order])


def _grid_shape(strata: int, sides: np.ndarray) -> tuple:
    """Strata per axis, roughly proportional to the side lengths."""
    k = len(sides)
    if k == 1:
        return (max(1, strata),)
    logs = np.log(sides)
    share = math.log(max(strata, 1)) / k + (logs - logs.mean())
    counts = np.maximum(1, np.round(np.exp(share))).astype(int)
    return tuple(int(c) for c in counts)


def stratified_average(g, sides, strata: int, rng: np.random.Generator, workers: int = 1,
                       chunk: int = 1 << 15):
    """Mean and SE of g(t) over t uniform in prod [0, sides_i].

    ``g`` maps a (n, k) array of box parameters to n values.  Uses the
    antithetic stratified design described in the module docstring (four
    evaluations per stratum).
    """
    sides = np.asarray(sides, dtype=float)
    shape = _grid_shape(strata, sides)
    h = sides / np.array(shape)
    total = int(np.prod(shape))
    workers = max(1, int(workers))
    streams = rng.spawn(workers)
    bounds = np.linspace(0, total, workers + 1).astype(np.int64)

    def work(w):
        r = streams[w]
        s_mean = 0.0
        s_var = 0.0
        for start in range(int(bounds[w]), int(bounds[w + 1]), chunk):
            idx = np.arange(start, min(start + chunk, int(bounds[w + 1])))
            cell = np.stack(np.unravel_index(idx, shape), axis=1).astype(float)
            lo = cell * h
            u = r.random((2, idx.size, len(sides)))
            pts = [lo + h * u[0], lo + h * (1 - u[0]), lo + h * u[1], lo + h * (1 - u[1])]
            vals = g(np.concatenate(pts)).reshape(4, idx.size)
            p1 = 0.5 * (vals[0] + vals[1])
            p2 = 0.5 * (vals[2] + vals[3])
            s_mean += float((p1 + p2).sum() / 2)
            s_var += float(((p1 - p2) ** 2).sum() / 4)
        return s_mean, s_var

    if workers == 1:
        parts = [work(0)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, range(workers)))
    s_mean = sum(p[0] for p in parts)
    s_var = sum(p[1] for p in parts)
    return s_mean / total, math.sqrt(s_var) / total


def box_average(f: Observable, box: BoxMap, u, g, budget: int, rng: np.random.Generator,
                workers: int = 1):
    """(1/|B|) int_B f(exp(u) exp(iota(t)) g) dt with a standard error.

    ``u`` is in first-kind coordinates, ``g`` a point (second-kind); ``budget``
    counts evaluations (four per stratum).
    """
    X = box.manifold
    if isinstance(f, Constant):
        return float(f.value), 0.0
    alg = X.algebra
    U = np.asarray(u, dtype=float)
    G = X.lift(np.asarray(g, dtype=float))

    def integrand(t):
        y = alg.bch(alg.bch(U, box(t)), G)
        return f(X.reduce_first(y)[0])

    return stratified_average(integrand, box.sides, max(1, budget // 4), rng, workers)


# -- dichotomy probe -------------------------------------------------------------------

@dataclass
class DichotomyResult:
    status: str  # "Equidistributed" or "Obstruction"
    z: tuple | None
    norm_bound: int
    frequency_bounds: list
    candidates: int

    def to_dict(self) -> dict:
        return {"status": self.status, "z": None if self.z is None else list(self.z),
                "norm_bound": self.norm_bound, "frequency_bounds": self.frequency_bounds,
                "candidates": self.candidates}


def _shell(radius: int, l: int) -> np.ndarray:
    """Integer vectors with |z|_inf == radius whose first nonzero entry is positive, lex order."""
    if radius == 0:
        return np.zeros((0, l), dtype=np.int64)
    rng = np.arange(-radius, radius + 1)
    parts = []
    for j in range(l):
        axes = [np.arange(-radius + 1, radius) if i < j else rng for i in range(l)]
        axes[j] = np.array([-radius, radius])
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, l)
        parts.append(grid)
    z = np.concatenate(parts)
    first = z[np.arange(len(z)), np.argmax(z != 0, axis=1)]
    z = z[first > 0]
    order = np.lexsort(z.T[::-1])
    return z[order]


def dichotomy_probe(box: BoxMap, delta: float, L1: float = 1.0, L2: float = 1.0,
                    norm_multiplier: float = 1.0, frequency_multiplier: float = 1.0,
                    max_candidates: float = 1e8) -> DichotomyResult:
    """Search for a small integer frequency z almost orthogonal to the abelianized box.

    Candidates have |z|_inf <= norm_multiplier * delta^-L1 and are scanned by
    increasing sup-norm, then lexicographically (sign normalized so the first
    nonzero entry is positive).  The first z with
    |<z, pi(w_i)>| <= frequency_multiplier * delta^-L2 / T_i for every i is returned.
    """
    if not 0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    l = box.manifold.abelian_dim
    B = int(math.floor(norm_multiplier * delta ** (-L1)))
    count = (2 * B + 1) ** l - 1
    if count > max_candidates:
        raise SearchBoxTooLarge(f"{count} candidates exceed {max_candidates:.0e}; reduce L1 or the multiplier")
    W = box.directions[:, :l]
    bounds = frequency_multiplier * delta ** (-L2) / box.sides
    checked = 0
    for R in range(1, B + 1):
        z = _shell(R, l)
        checked += len(z)
        ok = np.all(np.abs(z @ W.T) <= bounds, axis=1)
        if ok.any():
            hit = z[np.argmax(ok)]
            return DichotomyResult("Obstruction", tuple(int(c) for c in _canonical_sign(hit)), B,
                                   bounds.tolist(), checked)
    return DichotomyResult("Equidistributed", None, B, bounds.tolist(), checked)


# -- rate experiments --------------------------------------------------------------------

def box_rate_experiment(f: Observable, direction, u, g, T_schedule, budget: int,
                        rng: np.random.Generator, workers: int = 1, max_budget: int | None = None,
                        se_fraction: float = 1 / 3, v=None, integral: float | None = None) -> ExperimentReport:
    """Errors |box_average - int f| for boxes with all sides T, fitted against log T.

    ``direction`` is a (k, d) array of box directions.  The budget doubles (up to
    ``max_budget``) until SE <= se_fraction * error; points that never get there
    are flagged noise-dominated.
    """
    X = f.manifold
    mu = f.integral if integral is None else integral
    if mu is None:
        raise ValueError("box rate experiments need a known integral")
    W = np.atleast_2d(np.asarray(direction, dtype=float))
    v = np.zeros(X.dim) if v is None else np.asarray(v, dtype=float)
    Ts = [float(t) for t in T_schedule]
    max_budget = max_budget or budget
    means, ses, errs, noisy, used = [], [], [], [], []
    for T in Ts:
        box = BoxMap(X, v, W, np.full(W.shape[0], T))
        b = budget
        while True:
            m, se = box_average(f, box, u, g, b, rng, workers)
            e = abs(m - mu)
            if se <= se_fraction * e or b >= max_budget:
                break
            b = min(2 * b, max_budget)
        means.append(m)
        ses.append(se)
        errs.append(e)
        noisy.append(not se <= se_fraction * e)
        used.append(b)
    report = ExperimentReport("equid", "T", Ts, means, ses, errs, noisy, budget=max(used),
                              extra_columns={"budget": np.array(used)})
    report.summary["integral"] = mu
    if np.all(np.array(errs) == 0) and np.all(np.array(ses) == 0):
        report.flags.append("ExactAgreement")
        return report
    report.fit("log-log")
    if report.summary.get("rate") is not None:
        report.summary["kappa_hat"] = report.summary["rate"]
    return report


@dataclass(eq=False)
class UnstableChart:
    """psi(b) = product of exp(b_j v_j) over the unstable Jordan vectors, in block order."""

    aut: Automorphism
    split: JordanSplit
    sides: np.ndarray

    def __post_init__(self):
        self.sides = np.atleast_1d(np.asarray(self.sides, dtype=float))
        if self.sides.shape != (self.vectors.shape[0],):
            raise DimensionMismatch(f"chart needs {self.vectors.shape[0]} side lengths")
        if np.any(self.sides <= 0):
            raise ValueError("box sides must be positive")

    @property
    def vectors(self) -> np.ndarray:
        """(dim W, d) unstable vectors ordered by block modulus, then w_1, w_1', w_2, ..."""
        return self.split.unstable_basis.T

    @property
    def manifold(self) -> Nilmanifold:
        return self.aut.manifold

    def psi(self, b: np.ndarray) -> np.ndarray:
        """First-kind coordinates of psi(b) for b of shape (n, dim W)."""
        alg = self.manifold.algebra
        V = self.vectors
        b = np.asarray(b, dtype=float)
        out = b[..., -1:] * V[-1]
        for j in range(V.shape[0] - 2, -1, -1):
            out = alg.bch(b[..., j:j + 1] * V[j], out)
        return out


def unstable_average(engine, f: Observable, chart: UnstableChart, h, g, n: int, budget: int,
                     rng: np.random.Generator, workers: int = 1):
    """(1/|B|) int_B f(alpha^n(h psi(b) g)) db with a standard error."""
    X = chart.manifold
    if isinstance(f, Constant):
        return float(f.value), 0.0
    alg = X.algebra
    Hf = alg.first_from_second(np.asarray(h, dtype=float))
    G = X.lift(np.asarray(g, dtype=float))

    def integrand(b):
        y = X.reduce_first(alg.bch(alg.bch(Hf, chart.psi(b)), G))[0]
        return f(engine.apply(n, y))

    return stratified_average(integrand, chart.sides, max(1, budget // 4), rng, workers)


def unstable_rate_experiment(engine, f: Observable, chart: UnstableChart, h, g, ns, budget: int,
                             rng: np.random.Generator, workers: int = 1, max_budget: int | None = None,
                             integral: float | None = None, integral_se: float = 0.0,
                             se_fraction: float = 1 / 3) -> ExperimentReport:
    """Errors of unstable averages along n with a log-linear fit (rate = -log rho).

    Each point doubles its budget (up to ``max_budget``) until the total SE
    (including the SE of an estimated integral) is at most ``se_fraction``
    times the error; points that never get there are flagged noise-dominated.
    """
    mu = f.integral if integral is None else integral
    if mu is None:
        raise ValueError("need the integral of f (exact or estimated)")
    ns = [int(n) for n in ns]
    max_budget = max_budget or budget
    means, ses, errs, noisy, used = [], [], [], [], []
    for n in ns:
        b = budget
        while True:
            m, se = unstable_average(engine, f, chart, h, g, n, b, rng, workers)
            e = abs(m - mu)
            tot = math.hypot(se, integral_se)
            if tot <= se_fraction * e or b >= max_budget:
                break
            b = min(2 * b, max_budget)
        means.append(m)
        ses.append(se)
        errs.append(e)
        noisy.append(not tot <= se_fraction * e)
        used.append(b)
    report = ExperimentReport("unstable", "n", ns, means, ses, errs, noisy, budget=max(used),
                              extra_columns={"budget": np.array(used)})
    report.summary["integral"] = mu
    if np.all(report.errors == 0) and np.all(report.ses == 0):
        report.flags.append("ExactAgreement")
        return report
    report.fit("log-linear")
    if report.summary.get("rate") is not None:
        report.summary["rho_hat"] = math.exp(-report.summary["rate"])
    return report
