"""The compact quotient X = G/Lambda with Lambda = exp(Z e1) ... exp(Z ed).

Points are arrays of second-kind (Malcev) coordinates in [0, 1)^d, the canonical
representatives in the fundamental domain F = exp([0,1) e1) ... exp([0,1) ed).
Lifts to G are handled in first-kind coordinates (log of the group element)
because the group law is evaluated there.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

from .errors import NonFiniteCoordinate
from .lie_core import NilpotentAlgebra, Q, exact_array, floor_array, is_exact


@dataclass(frozen=True, eq=False)
class Nilmanifold:
    algebra: NilpotentAlgebra
    metric_scale: float = 1.0

    @property
    def dim(self) -> int:
        return self.algebra.dim

    @property
    def abelian_dim(self) -> int:
        return self.algebra.abelian_dim

    # -- reduction to the fundamental domain -------------------------------
    def _sweep(self, x: np.ndarray, centered: bool = False):
        """Right-multiply exp(x) by exp(w1 e1) ... exp(wd ed) to land in F.

        Returns (second-kind coordinates of the result, integer word w).  At step
        i the remaining factor lives in exp(span(e_i..e_d)); correcting its e_i
        coordinate leaves the earlier coordinates alone because the tail spans
        an ideal.  ``centered`` uses rounding instead of floor, i.e. the domain
        exp([-1/2,1/2) e1) ... used for nearest-lattice searches.
        """
        alg = self.algebra
        x = np.asarray(x)
        exact = is_exact(x)
        if not exact and not np.all(np.isfinite(x)):
            raise NonFiniteCoordinate("non-finite coordinate in reduce")
        coords = np.empty_like(x)
        word = np.empty_like(x)
        r = x
        half = Q(1, 2) if exact else 0.5
        for i in range(self.dim):
            ti = r[..., i]
            n = floor_array(ti + half) if centered else floor_array(ti)
            if not exact and not centered:
                # floor(t) can leave t - n == 1.0 after rounding for t just below an integer
                n = np.where(ti - n >= 1.0, n + 1.0, n)
            word[..., i] = -n
            r = alg.bch(r, alg.scaled_basis(i, -n))
            p = r[..., i]
            if not exact and not centered:
                p = np.clip(p, 0.0, np.nextafter(1.0, 0.0))
            coords[..., i] = p
            if i < self.dim - 1:
                r = alg.bch(alg.scaled_basis(i, -p), r)
        return coords, word

    def reduce(self, g: np.ndarray):
        """Canonical representative of g*Lambda for g in second-kind coordinates.

        Returns ``(point, word)`` with ``point = g * exp(w1 e1) ... exp(wd ed)``.
        """
        return self._sweep(self.algebra.first_from_second(np.asarray(g)))

    def reduce_first(self, x: np.ndarray):
        """Same as :meth:`reduce` for g = exp(x) given in first-kind coordinates."""
        return self._sweep(np.asarray(x))

    def lift(self, p: np.ndarray) -> np.ndarray:
        """First-kind coordinates of the representative of p in F."""
        return self.algebra.first_from_second(np.asarray(p))

    def lattice_element(self, word) -> np.ndarray:
        """First-kind coordinates of exp(w1 e1) ... exp(wd ed)."""
        w = np.asarray(word)
        return self.algebra.first_from_second(w if is_exact(w) else w.astype(float))

    # -- measure and action ------------------------------------------------
    def haar_sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Haar-distributed points: uniform second-kind coordinates in [0,1)^d."""
        shape = (self.dim,) if size is None else (size, self.dim)
        return rng.random(shape)

    def translate(self, h: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Left action h . x for h in second-kind coordinates."""
        alg = self.algebra
        return self.reduce_first(alg.bch(alg.first_from_second(np.asarray(h)), self.lift(x)))[0]

    def translate_first(self, u: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Left action exp(u) . x for u in first-kind coordinates."""
        return self.reduce_first(self.algebra.bch(np.asarray(u), self.lift(x)))[0]

    # -- local metric --------------------------------------------------------
    @cached_property
    def _window(self) -> np.ndarray:
        """First-kind logs of the lattice words with entries in {-1, 0, 1}."""
        words = np.array(list(product((-1.0, 0.0, 1.0), repeat=self.dim)))
        return self.algebra.first_from_second(words)

    @cached_property
    def _central_window(self) -> np.ndarray:
        """Window words whose abelianization entries vanish.

        After centered reduction |p_i| <= 1/2, and Ad leaves the first l
        coordinates alone, so a word with a nonzero abelian entry has
        displacement >= metric_scale / 2, which already exceeds the
        injectivity guard.  Bumps therefore only need these words.
        """
        l = self.abelian_dim
        words = np.array([w for w in product((-1.0, 0.0, 1.0), repeat=self.dim) if not any(w[:l])])
        return self.algebra.first_from_second(words)

    def adjoint(self, a: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Ad(exp a) v = v + [a, v] + [a, [a, v]]/2 + ..., batched."""
        alg = self.algebra
        out = v
        term = v
        for k in range(1, alg.step + 1):
            term = alg.bracket(a, term) / k
            out = out + term
        return out

    def displacements(self, x: np.ndarray, y: np.ndarray, central_only: bool = False) -> np.ndarray:
        """Norms of log(lift(y) lam lift(x)^-1) over the candidate lattice words lam.

        The candidates are lam0 * w with lam0 the nearest lattice element to
        lift(x)^-1 lift(y) and w ranging over {-1, 0, 1}^d.  Output has shape
        batch + (3**d,) (or 3**(d - l) with ``central_only``), scaled by
        ``metric_scale``.
        """
        alg = self.algebra
        xf, yf = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        X = self.lift(xf)
        Y = self.lift(yf)
        # lift(x)^-1 lift(y) lam0 = p with p in the centered domain
        p, _ = self._sweep(alg.bch(-X, Y), centered=True)
        P = alg.first_from_second(p)
        window = self._central_window if central_only else self._window
        Z = alg.bch(P[..., None, :], window)  # log(p w)
        disp = self.adjoint(X[..., None, :], Z)  # log(lift(x) p w lift(x)^-1)
        return self.metric_scale * np.linalg.norm(disp, axis=-1)

    def local_distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Right-invariant local distance between points of X (batched).

        Both orders are searched: far apart, the candidate windows around the
        nearest words for (x, y) and (y, x) differ, and the smaller value is
        still the norm of a genuine displacement.
        """
        return np.minimum(self.displacements(x, y).min(axis=-1), self.displacements(y, x).min(axis=-1))

    @cached_property
    def injectivity_guard(self) -> float:
        """Half the smallest displacement of a nontrivial lattice word in the window."""
        norms = np.linalg.norm(self._window, axis=-1)
        return 0.5 * self.metric_scale * float(norms[norms > 0].min())


def lattice_defect(manifold: Nilmanifold):
    """Spot check that integer Malcev points form a subgroup.

    Multiplies every word in {-1, 0, 1}^d by each generator exp(+-e_j) on
    both sides and returns the first product with a non-integer coordinate
    as ``(word, j, sign)``, or None.
    """
    alg = manifold.algebra
    d = alg.dim
    words = exact_array(np.array(list(product((-1, 0, 1), repeat=d))))
    lam = manifold.lattice_element(words)
    for j in range(d):
        for sign in (1, -1):
            gen = alg.scaled_basis(j, exact_array(np.full(len(words), sign)))
            for prod in (alg.bch(lam, gen), alg.bch(gen, lam)):
                t = alg.second_from_first(prod)
                bad = [i for i in range(len(words)) if any(v.denominator != 1 for v in t[i])]
                if bad:
                    return tuple(int(v) for v in words[bad[0]]), j, sign
    return None


def as_point(values, exact: bool = False) -> np.ndarray:
    return exact_array(values) if exact else np.asarray(values, dtype=float)


def torus(dim: int, metric_scale: float = 1.0) -> Nilmanifold:
    from .lie_core import abelian
    return Nilmanifold(abelian(dim), metric_scale)
