"""Orbit dynamics and statistical experiments driven by an automorphism."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import sympy
from scipy import stats

from .errors import (
    HorizonExceeded,
    NegativeVarianceEstimate,
    NotCentered,
    NotErgodic,
    ZeroVariance,
)
from .lie_core import is_exact
from .observables import Constant, Observable, centered
from .report import ExperimentReport, rate_fit
from .spectral import Automorphism, is_ergodic

DEFAULT_HORIZON = 2 ** 13


class OrbitEngine:
    """Applies powers of an automorphism to points of X.

    Exact input (Fraction arrays) is pushed through the exact matrix power.
    Float input is advanced in chunks whose matrix norm stays below
    ``max_growth`` with a reduction to the fundamental domain after each chunk,
    so first-kind coordinates never grow beyond a few thousand.
    """

    def __init__(self, aut: Automorphism, horizon: int = DEFAULT_HORIZON, max_growth: float = 1e3):
        self.aut = aut
        self.manifold = aut.manifold
        self.horizon = int(horizon)
        self.max_growth = max_growth

    @cached_property
    def _chunk(self) -> tuple[int, int]:
        """Largest forward and backward step count whose matrix stays below max_growth."""
        out = []
        for sign in (1, -1):
            c = 1
            while c < 64 and np.abs(self.aut.power(sign * (c + 1)).astype(float)).max() <= self.max_growth:
                c += 1
            out.append(c)
        return out[0], out[1]

    def power_float(self, n: int) -> np.ndarray:
        return self.aut.power(n).astype(float)

    def _check(self, n: int):
        if abs(n) > self.horizon:
            raise HorizonExceeded(f"|n| = {abs(n)} exceeds the horizon {self.horizon}")

    def apply(self, n: int, x: np.ndarray) -> np.ndarray:
        """alpha^n(x) for points x (batched)."""
        n = int(n)
        self._check(n)
        X = self.manifold
        x = np.asarray(x)
        if is_exact(x):
            P = self.aut.power(n)
            y = X.lift(x).dot(P.T)
            return X.reduce_first(y)[0]
        x = x.astype(float)
        if n == 0:
            return X.reduce(x)[0]
        c = self._chunk[0] if n > 0 else self._chunk[1]
        sign = 1 if n > 0 else -1
        left = abs(n)
        while left:
            k = min(c, left)
            x = X.reduce_first(X.lift(x) @ self.power_float(sign * k).T)[0]
            left -= k
        return x

    def step(self, x: np.ndarray) -> np.ndarray:
        return self.apply(1, x)


# -- sampling infrastructure --------------------------------------------------------

def _split(budget: int, workers: int) -> list[int]:
    base, extra = divmod(int(budget), workers)
    return [base + (i < extra) for i in range(workers)]


def parallel_sums(fn, budget: int, rng: np.random.Generator, workers: int = 1, chunk: int = 1 << 15):
    """Run ``fn(rng, count) -> (m, count)`` array over the budget and return column sums.

    Each worker gets its own child stream and processes its share in chunks;
    partial sums (of values and squares) are combined in worker order, so
    results depend only on (seed, workers, budget).
    """
    workers = max(1, int(workers))
    streams = rng.spawn(workers)
    shares = _split(budget, workers)

    def work(i):
        r = streams[i]
        s1 = s2 = None
        left = shares[i]
        while left > 0:
            k = min(chunk, left)
            v = np.asarray(fn(r, k), dtype=float)
            if s1 is None:
                s1, s2 = v.sum(axis=-1), (v * v).sum(axis=-1)
            else:
                s1, s2 = s1 + v.sum(axis=-1), s2 + (v * v).sum(axis=-1)
            left -= k
        return s1, s2

    if workers == 1:
        parts = [work(0)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, range(workers)))
    parts = [p for p in parts if p[0] is not None]
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    return s1, s2


def mean_se(s1, s2, n: int):
    mean = s1 / n
    var = np.maximum(s2 / n - mean * mean, 0.0) * n / max(n - 1, 1)
    return mean, np.sqrt(var / n)


def haar_mean(f: Observable, budget: int, rng: np.random.Generator, workers: int = 1):
    """Exact integral when known (SE 0), else a Haar Monte-Carlo estimate."""
    if f.integral is not None:
        return float(f.integral), 0.0
    X = f.manifold
    s1, s2 = parallel_sums(lambda r, k: f(X.haar_sample(r, k))[None, :], budget, rng, workers)
    m, se = mean_se(s1, s2, budget)
    return float(m[0]), float(se[0])


def _require_ergodic(aut: Automorphism):
    cert = is_ergodic(aut)
    if not cert.ergodic:
        raise NotErgodic(f"abelianized map has a root-of-unity eigenvalue (cyclotomic order {cert.cyclotomic_factor})")


# -- correlations -------------------------------------------------------------------

def correlation_series(engine: OrbitEngine, f0: Observable, f1: Observable, ns, budget: int,
                       rng: np.random.Generator, workers: int = 1):
    """Estimates of int f0 * f1(alpha^n x) dmu for every n in ``ns``, with SEs.

    The same Haar samples serve every n (common random numbers); the orbit is
    advanced one step at a time.
    """
    ns = sorted(int(n) for n in ns)
    for n in ns:
        engine._check(n)
    if isinstance(f0, Constant) and isinstance(f1, Constant):
        v = f0.value * f1.value
        return np.full(len(ns), v), np.zeros(len(ns))
    X = engine.manifold

    def fn(r, k):
        x = X.haar_sample(r, k)
        a = f0(x)
        out = np.empty((len(ns), k))
        cur, pos = x, 0
        for i, n in enumerate(ns):
            if n != pos:
                cur = engine.apply(n - pos, cur) if n - pos > 1 else engine.step(cur)
                pos = n
            out[i] = a * f1(cur)
        return out

    s1, s2 = parallel_sums(fn, budget, rng, workers)
    return mean_se(s1, s2, budget)


def correlation(engine: OrbitEngine, f0: Observable, f1: Observable, n: int, budget: int,
                rng: np.random.Generator, workers: int = 1):
    c, se = correlation_series(engine, f0, f1, [n], budget, rng, workers)
    return float(c[0]), float(se[0])


def mixing_experiment(engine: OrbitEngine, f0: Observable, f1: Observable, ns, budget: int,
                      rng: np.random.Generator, workers: int = 1, max_budget: int | None = None,
                      min_usable: int = 6, noise_factor: float = 3.0,
                      mean_budget_factor: int = 10) -> ExperimentReport:
    """Decay of |C_n - mu0 mu1| along ``ns`` with a log-linear fit of the rate.

    The budget doubles (up to ``max_budget``) while fewer than ``min_usable``
    points clear ``noise_factor`` standard errors.  Means use the exact
    integrals when known, otherwise ``mean_budget_factor`` times the budget.
    """
    _require_ergodic(engine.aut)
    ns = [int(n) for n in ns]
    max_budget = max_budget or budget
    mu0, se0 = haar_mean(f0, mean_budget_factor * budget, rng, workers)
    mu1, se1 = haar_mean(f1, mean_budget_factor * budget, rng, workers) if f1 is not f0 else (mu0, se0)
    target = mu0 * mu1
    target_se = math.hypot(mu0 * se1, mu1 * se0)
    b = budget
    while True:
        C, se = correlation_series(engine, f0, f1, ns, b, rng, workers)
        err = np.abs(C - target)
        tot_se = np.sqrt(se ** 2 + target_se ** 2)
        noisy = err <= noise_factor * tot_se
        if (~noisy).sum() >= min(min_usable, len(ns)) or b >= max_budget:
            break
        b = min(2 * b, max_budget)
    report = ExperimentReport("mixing", "n", ns, C, se, err, noisy, budget=b)
    report.summary.update({"mu0": mu0, "mu1": mu1, "mu_se": target_se})
    if np.all(se == 0) and np.all(err == 0):
        report.flags.append("ExactAgreement")
    elif noisy.all():
        # every correlation agrees with the product of means: mixing is exact here
        report.flags.append("ExactMixing")
    else:
        report.fit("log-linear")
        if report.summary.get("rate") is not None:
            report.summary["rho_hat"] = math.exp(-report.summary["rate"])
    return report


def multi_correlation(engine: OrbitEngine, fs, ns, budget: int, rng: np.random.Generator, workers: int = 1):
    """Estimate of int prod_i f_i(alpha^{n_i} x) dmu (pairs sorted by n)."""
    if len(fs) != len(ns) or len(fs) < 2:
        raise ValueError("need equally many observables and times, at least two")
    order = sorted(range(len(ns)), key=lambda i: ns[i])
    fs = [fs[i] for i in order]
    ns = [int(ns[i]) for i in order]
    for n in ns:
        engine._check(n)
    if all(isinstance(f, Constant) for f in fs):
        return float(np.prod([f.value for f in fs])), 0.0
    X = engine.manifold

    def fn(r, k):
        x = X.haar_sample(r, k)
        cur = engine.apply(ns[0], x) if ns[0] else x
        out = fs[0](cur)
        pos = ns[0]
        for f, n in zip(fs[1:], ns[1:]):
            if n != pos:
                cur = engine.apply(n - pos, cur) if n - pos > 1 else engine.step(cur)
                pos = n
            out = out * f(cur)
        return out[None, :]

    s1, s2 = parallel_sums(fn, budget, rng, workers)
    m, se = mean_se(s1, s2, budget)
    return float(m[0]), float(se[0])


def character_product_integral(aut: Automorphism, ms, ns) -> float:
    """Exact int prod_i cos(2 pi <m_i, alpha^{n_i} x>) dmu on the toral quotient.

    Uses cos a = (e^{ia} + e^{-ia}) / 2: the integral is 2^-k times the number of
    sign patterns whose frequency sum sum_i s_i (A^T)^{n_i} m_i vanishes.
    """
    A = aut.abelianization_matrix.astype(object)
    AT = A.T
    vecs = []
    for m, n in zip(ms, ns):
        v = np.array([int(c) for c in m], dtype=object)
        P = _int_power(AT, int(n))
        vecs.append(P.dot(v))
    count = 0
    k = len(vecs)
    for signs in range(2 ** k):
        tot = sum(((1 if signs >> i & 1 else -1) * vecs[i] for i in range(k)), np.zeros(A.shape[0], dtype=object))
        count += all(c == 0 for c in tot)
    return count / 2 ** k


def _int_power(M: np.ndarray, n: int) -> np.ndarray:
    if n < 0:
        inv = sympy.Matrix(M.tolist()).inv()
        M = np.array(inv.tolist(), dtype=object)
        n = -n
    out = np.eye(M.shape[0], dtype=object) * 1
    base = M
    while n:
        if n & 1:
            out = out.dot(base)
        base = base.dot(base)
        n >>= 1
    return out


def multimix_experiment(engine: OrbitEngine, fs, gaps, budget: int, rng: np.random.Generator,
                        workers: int = 1, max_budget: int | None = None, oracle=None,
                        min_usable: int = 6) -> ExperimentReport:
    """Error of the multiple correlation at times (0, g, 2g, ...) for each gap g.

    The reference is the product of the means, or ``oracle(g)`` when an exact
    value is available (then no rate is fitted).  The budget doubles up to
    ``max_budget`` while fewer than ``min_usable`` errors clear 3 SE.
    """
    _require_ergodic(engine.aut)
    gaps = [int(g) for g in gaps]
    max_budget = max_budget or budget
    mus = [haar_mean(f, 10 * budget, rng, workers) for f in fs]
    target = float(np.prod([m for m, _ in mus]))
    target_se = 0.0
    for i, (m, s) in enumerate(mus):
        others = np.prod([mm for j, (mm, _) in enumerate(mus) if j != i])
        target_se = math.hypot(target_se, s * others)
    b = budget
    while True:
        est, ses = [], []
        for g in gaps:
            e, s = multi_correlation(engine, fs, [i * g for i in range(len(fs))], b, rng, workers)
            est.append(e)
            ses.append(s)
        est, ses = np.array(est), np.array(ses)
        ref = np.array([oracle(g) for g in gaps]) if oracle is not None else np.full(len(gaps), target)
        err = np.abs(est - ref)
        tot = np.sqrt(ses ** 2 + (0 if oracle is not None else target_se) ** 2)
        noisy = err <= 3 * tot
        if oracle is not None or (~noisy).sum() >= min(min_usable, len(gaps)) or b >= max_budget:
            break
        b = min(2 * b, max_budget)
    report = ExperimentReport("multimix", "gap", gaps, est, ses, err, noisy, budget=b)
    report.summary.update({"product_of_means": target, "reference": ref.tolist()})
    if oracle is None and (~noisy).sum() >= 2:
        report.fit("log-linear")
        if report.summary.get("rate") is not None:
            report.summary["rho_hat"] = math.exp(-report.summary["rate"])
    return report


# -- central limit theorem ---------------------------------------------------------------

@dataclass
class GreenKubo:
    lags: np.ndarray  # estimates of <f o alpha^j, f>, j = 0..J
    lag_ses: np.ndarray
    sigma2: float
    sigma2_se: float
    window: int
    tail_exceeds_noise: bool

    def to_dict(self) -> dict:
        return {"sigma2_hat": self.sigma2, "sigma2_se": self.sigma2_se, "window": self.window,
                "tail_exceeds_noise": self.tail_exceeds_noise, "lags": self.lags.tolist(),
                "lag_ses": self.lag_ses.tolist()}


def green_kubo(engine: OrbitEngine, f: Observable, J: int, budget: int, rng: np.random.Generator,
               workers: int = 1) -> GreenKubo:
    """Truncated sigma^2 = <f, f> + 2 sum_{j=1}^J <f o alpha^j, f> for centered f.

    The SE is propagated exactly through the per-sample quantity
    f(x) (f(x) + 2 sum_j f(alpha^j x)), whose mean is the truncated sum.
    """
    J = int(J)
    if J < 0:
        raise ValueError("window must be >= 0")
    engine._check(J)
    X = engine.manifold
    if isinstance(f, Constant) and f.value == 0:
        z = np.zeros(J + 1)
        return GreenKubo(z, z, 0.0, 0.0, J, False)

    def fn(r, k):
        x = X.haar_sample(r, k)
        a = f(x)
        rows = np.empty((J + 2, k))
        rows[0] = a * a
        tail = np.zeros(k)
        cur = x
        for j in range(1, J + 1):
            cur = engine.step(cur)
            fj = f(cur)
            rows[j] = a * fj
            tail += fj
        rows[J + 1] = a * (a + 2 * tail)
        return rows

    s1, s2 = parallel_sums(fn, budget, rng, workers)
    m, se = mean_se(s1, s2, budget)
    lags, lag_ses = m[:J + 1], se[:J + 1]
    last = slice(max(1, J - 2), J + 1)
    tail_flag = bool(J >= 1 and np.any(np.abs(lags[last]) > 3 * lag_ses[last]))
    return GreenKubo(lags, lag_ses, float(m[J + 1]), float(se[J + 1]), J, tail_flag)


def birkhoff_sums(engine: OrbitEngine, f: Observable, ns, path_count: int, rng: np.random.Generator,
                  workers: int = 1) -> np.ndarray:
    """S_n(f, x) = sum_{i<n} f(alpha^i x) for every n in ``ns`` over Haar starts: (paths, len(ns))."""
    ns = [int(n) for n in ns]
    if any(b <= a for a, b in zip(ns, ns[1:])) or ns[0] < 0:
        raise ValueError("schedule must be strictly increasing and nonnegative")
    engine._check(ns[-1])
    X = engine.manifold
    workers = max(1, int(workers))
    streams = rng.spawn(workers)
    shares = _split(path_count, workers)

    def work(w):
        k = shares[w]
        x = X.haar_sample(streams[w], k)
        out = np.zeros((k, len(ns)))
        s = np.zeros(k)
        pos = 0
        for i, n in enumerate(ns):
            while pos < n:
                s += f(x)
                x = engine.step(x)
                pos += 1
            out[:, i] = s
        return out

    if workers == 1:
        parts = [work(0)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, range(workers)))
    return np.concatenate(parts)


@dataclass
class CltReport:
    n_schedule: list
    sigma2_hat: float
    sigma2_se: float
    empirical_variances: np.ndarray
    ks_statistics: np.ndarray
    sample_count: int
    path_count: int
    green_kubo: GreenKubo
    flags: list = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["n,ks,empirical_var"]
        for n, ks, v in zip(self.n_schedule, self.ks_statistics, self.empirical_variances):
            lines.append(f"{int(n)},{float(ks)!r},{float(v)!r}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"command": "clt", "sigma2_hat": self.sigma2_hat, "sigma2_se": self.sigma2_se,
                "n_schedule": list(self.n_schedule), "ks": self.ks_statistics.tolist(),
                "empirical_variances": self.empirical_variances.tolist(), "budget": self.sample_count,
                "paths": self.path_count, "window": self.green_kubo.window, "flags": list(self.flags),
                "lags": self.green_kubo.lags.tolist()}


def _center(f: Observable, mean, budget, rng, workers):
    if mean is None and f.integral is None:
        mean, _ = haar_mean(f, budget, rng, workers)
    return centered(f, mean)


def clt_experiment(engine: OrbitEngine, f: Observable, n_schedule, path_count: int, J: int = 32,
                   budget: int = 100_000, rng: np.random.Generator | None = None, workers: int = 1,
                   mean: float | None = None) -> CltReport:
    """Green-Kubo variance and KS distances of n^-1/2 S_n to Normal(0, sigma^2)."""
    _require_ergodic(engine.aut)
    rng = rng if rng is not None else np.random.default_rng()
    fc = _center(f, mean, 10 * budget, rng, workers)
    gk = green_kubo(engine, fc, J, budget, rng, workers)
    flags = []
    sigma2 = gk.sigma2
    if sigma2 < 0:
        if sigma2 < -3 * gk.sigma2_se:
            raise NegativeVarianceEstimate(f"truncated sigma^2 = {sigma2:.3g}; increase the window J")
        sigma2 = 0.0
        flags.append("ClippedAtZero")
    if gk.tail_exceeds_noise:
        flags.append("WindowTail")
    ns = [int(n) for n in n_schedule]
    S = birkhoff_sums(engine, fc, ns, path_count, rng, workers)
    scaled = S / np.sqrt(ns)
    variances = scaled.var(axis=0, ddof=1)
    if sigma2 > 0:
        ks = np.array([stats.kstest(scaled[:, i], "norm", args=(0.0, math.sqrt(sigma2))).statistic
                       for i in range(len(ns))])
    else:
        ks = np.full(len(ns), np.nan)
    return CltReport(ns, sigma2, gk.sigma2_se, variances, ks, budget, path_count, gk, flags)


@dataclass
class DonskerReport:
    grid: np.ndarray
    paths: np.ndarray  # (path_count, len(grid))
    variances: np.ndarray
    variance_slope: float
    increment_correlation: float

    def to_csv(self) -> str:
        lines = ["t,empirical_var"]
        for t, v in zip(self.grid, self.variances):
            lines.append(f"{float(t)!r},{float(v)!r}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"command": "donsker", "variance_slope": self.variance_slope,
                "increment_correlation": self.increment_correlation, "grid": self.grid.tolist()}


def donsker_paths(engine: OrbitEngine, f: Observable, n: int, path_count: int, grid, sigma2: float,
                  rng: np.random.Generator, workers: int = 1, mean: float | None = None) -> DonskerReport:
    """(n sigma^2)^-1/2 S_{nt} on a time grid, linearly interpolated between integers.

    Diagnostics: least-squares slope (through the origin) of Var(path(t)) against
    t, and the correlation of path(1/2) - path(1/4) with path(1/4).
    """
    if not sigma2 > 0:
        raise ZeroVariance("sigma^2 = 0: f is a coboundary, use coboundary_solve")
    fc = _center(f, mean, 10 * path_count, rng, workers)
    grid = np.asarray(grid, dtype=float)
    if np.any(grid < 0) or np.any(grid > 1):
        raise ValueError("grid times must lie in [0, 1]")
    probe = np.array([0.25, 0.5])
    times = np.concatenate([grid, probe])
    nt = times * n
    lo = np.floor(nt).astype(int)
    need = sorted(set(lo.tolist()) | set((lo + 1).tolist()))
    need = [k for k in need if k <= n]
    if need[0] != 0:
        need = [0] + need
    # S_0 = 0 is a column of zeros; birkhoff_sums needs a positive schedule start
    S = birkhoff_sums(engine, fc, need, path_count, rng, workers)
    col = {k: S[:, i] for i, k in enumerate(need)}
    vals = np.empty((S.shape[0], len(times)))
    for i, (t, k) in enumerate(zip(nt, lo)):
        frac = t - k
        upper = col[k + 1] if frac > 0 else col[k]
        vals[:, i] = col[k] + frac * (upper - col[k])
    vals /= math.sqrt(n * sigma2)
    paths, pr = vals[:, :len(grid)], vals[:, len(grid):]
    var = paths.var(axis=0, ddof=1)
    pos = grid > 0
    slope = float((grid[pos] * var[pos]).sum() / (grid[pos] ** 2).sum()) if pos.any() else float("nan")
    inc = pr[:, 1] - pr[:, 0]
    corr = float(np.corrcoef(inc, pr[:, 0])[0, 1])
    return DonskerReport(grid, paths, var, slope, corr)


# -- cohomological equation ---------------------------------------------------------------

@dataclass(eq=False)
class Coboundary(Observable):
    """f = psi o alpha - psi."""

    engine: OrbitEngine
    psi: Observable
    kind = "coboundary"
    integral = 0.0

    @property
    def manifold(self):
        return self.engine.manifold

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.psi(self.engine.step(x)) - self.psi(x)

    def to_dict(self):
        return {"kind": self.kind, "psi": self.psi.to_dict()}


def coboundary_make(engine: OrbitEngine, psi: Observable) -> Observable:
    if isinstance(psi, Constant):
        return Constant(engine.manifold, 0.0)
    return Coboundary(engine, psi)


def solve_weights(N: int, scheme: str = "cesaro", r: float = 0.9) -> np.ndarray:
    i = np.arange(N, dtype=float)
    if scheme == "partial":
        return np.ones(N)
    if scheme == "cesaro":
        return 1.0 - i / N
    if scheme == "abel":
        if not 0 < r < 1:
            raise ValueError("Abel parameter must lie in (0, 1)")
        return r ** i
    raise ValueError(f"unknown scheme {scheme!r}")


@dataclass
class SolveReport:
    N: int
    scheme: str
    residual_sup: float
    residual_l2: float
    f_sup: float
    phi_sup: float
    sample_count: int

    def to_dict(self) -> dict:
        return {"N": self.N, "scheme": self.scheme, "residual_sup": self.residual_sup,
                "residual_l2": self.residual_l2, "f_sup": self.f_sup, "phi_sup": self.phi_sup,
                "samples": self.sample_count}


def _check_centered(f: Observable, rng, budget, workers):
    if f.integral is not None:
        if abs(f.integral) > 1e-12:
            raise NotCentered(f"integral of f is {f.integral}, not 0")
        return
    m, se = haar_mean(f, budget, rng, workers)
    if abs(m) > 3 * se + 1e-12:
        raise NotCentered(f"estimated mean {m:.3g} exceeds 3 SE ({se:.2g})")


def coboundary_solve(engine: OrbitEngine, f: Observable, N: int, scheme: str = "cesaro",
                     sample_count: int = 2000, rng: np.random.Generator | None = None,
                     r: float = 0.9, workers: int = 1) -> SolveReport:
    """phi(x) = -sum_{i<N} w_i f(alpha^i x) and the residual f - (phi o alpha - phi) on Haar samples.

    phi(x) and phi(alpha x) are read off one shared orbit x, alpha x, ...,
    alpha^N x, so the telescoping is exact up to rounding.
    """
    rng = rng if rng is not None else np.random.default_rng()
    N = int(N)
    if N < 1:
        raise ValueError("N must be >= 1")
    engine._check(N + 1)
    _check_centered(f, rng, 10 * sample_count, workers)
    w = solve_weights(N, scheme, r)
    X = engine.manifold
    x = X.haar_sample(rng, sample_count)
    vals = np.empty((N + 1, sample_count))
    cur = x
    for i in range(N + 1):
        vals[i] = f(cur)
        if i < N:
            cur = engine.step(cur)
    phi_x = -(w @ vals[:N])
    phi_ax = -(w @ vals[1:])
    res = vals[0] - (phi_ax - phi_x)
    return SolveReport(N, scheme, float(np.abs(res).max()), float(np.sqrt((res ** 2).mean())),
                       float(np.abs(vals[0]).max()), float(np.abs(phi_x).max()), sample_count)


@dataclass
class CoboundaryDecision:
    decision: str  # "Coboundary", "NotCoboundary" or "Inconclusive"
    sigma2_hat: float
    sigma2_se: float
    residuals: list
    residual_rate: float | None

    def to_dict(self) -> dict:
        return {"decision": self.decision, "sigma2_hat": self.sigma2_hat, "sigma2_se": self.sigma2_se,
                "residuals": [r.to_dict() for r in self.residuals], "residual_rate": self.residual_rate}


def coboundary_test(engine: OrbitEngine, f: Observable, J: int, budget: int, rng: np.random.Generator,
                    workers: int = 1, Ns=(50, 100, 200, 400), sample_count: int = 2000,
                    min_rate: float = 0.75) -> CoboundaryDecision:
    """Three-way decision from sigma^2 (window J) and the decay of Cesaro residuals.

    sigma^2 above 3 SE means NotCoboundary.  Otherwise Cesaro residuals must
    decay like 1/N (fitted rate >= ``min_rate``; a coboundary gives rate 1,
    while a non-coboundary only reaches 1/2) for a Coboundary verdict.
    """
    gk = green_kubo(engine, f, J, budget, rng, workers)
    if gk.sigma2 > 3 * gk.sigma2_se:
        return CoboundaryDecision("NotCoboundary", gk.sigma2, gk.sigma2_se, [], None)
    residuals = [coboundary_solve(engine, f, N, "cesaro", sample_count, rng, workers=workers) for N in Ns]
    l2 = np.array([s.residual_l2 for s in residuals])
    if np.all(l2 <= 1e-12 * max(1.0, max(s.f_sup for s in residuals))):
        return CoboundaryDecision("Coboundary", gk.sigma2, gk.sigma2_se, residuals, None)
    try:
        rate = rate_fit(list(Ns), l2, "log-log").rate
    except Exception:
        rate = None
    decision = "Coboundary" if rate is not None and rate >= min_rate else "Inconclusive"
    return CoboundaryDecision(decision, gk.sigma2, gk.sigma2_se, residuals, rate)
