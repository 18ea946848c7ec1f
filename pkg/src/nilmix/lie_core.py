"""Exact and floating arithmetic for finite-dimensional nilpotent Lie algebras.

Vectors are plain numpy arrays whose last axis has length ``dim``.  Arrays of
``dtype=object`` holding rationals are treated exactly (inputs may use
:class:`fractions.Fraction`; results use the faster ``Q`` type); float
arrays take the fast path used inside Monte-Carlo loops.  Every operation
broadcasts over leading (batch) axes.

The group law of the simply connected group is pulled back to the algebra by
the Baker-Campbell-Hausdorff series, which terminates at the nilpotency step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import product
from math import factorial
from typing import Sequence

import numpy as np
import sympy
from sympy.external.gmpy import MPQ as Q

from .errors import (
    AntisymmetryViolation,
    BasisNotMalcevOrdered,
    DimensionMismatch,
    JacobiViolation,
    NotNilpotent,
)


def to_fraction(value) -> Q:
    """Exact rational from ints, floats, strings, Fractions, sympy rationals or ``[num, den]`` pairs."""
    if isinstance(value, Q):
        return value
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return Q(int(value[0]), int(value[1]))
    if isinstance(value, sympy.Rational):
        return Q(int(value.p), int(value.q))
    if isinstance(value, (int, np.integer)):
        return Q(int(value))
    f = Fraction(value)
    return Q(f.numerator, f.denominator)


def exact_array(values) -> np.ndarray:
    """Object array of exact rationals with the same shape as ``values``."""
    arr = np.asarray(values, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx in np.ndindex(arr.shape):
        out[idx] = to_fraction(arr[idx])
    return out


def is_exact(a: np.ndarray) -> bool:
    return np.asarray(a).dtype == object


def floor_array(a: np.ndarray) -> np.ndarray:
    """Floor that keeps rationals exact; returns integer-valued array of the same kind."""
    if is_exact(a):
        out = np.empty(a.shape, dtype=object)
        for idx in np.ndindex(a.shape):
            out[idx] = Q(int(a[idx].__floor__()))
        return out
    return np.floor(a)


def _blocks(word: tuple[int, ...]):
    """All ways of cutting ``word`` into consecutive nonempty blocks X^r Y^s."""
    if not word:
        yield []
        return
    r_max = 0
    while r_max < len(word) and word[r_max] == 0:
        r_max += 1
    for r in range(1, r_max):
        for rest in _blocks(word[r:]):
            yield [(r, 0)] + rest
    s_max = 0
    while r_max + s_max < len(word) and word[r_max + s_max] == 1:
        s_max += 1
    for s in range(0, s_max + 1):
        if r_max + s == 0:
            continue
        for rest in _blocks(word[r_max + s:]):
            yield [(r_max, s)] + rest


def dynkin_coefficients(order: int) -> dict[tuple[int, ...], Fraction]:
    """Coefficients of right-nested brackets in Dynkin's form of the BCH series.

    Letters are 0 for X and 1 for Y.  Words whose two last letters coincide are
    dropped because their nested bracket vanishes identically.
    """
    coeffs: dict[tuple[int, ...], Fraction] = {}
    for m in range(1, order + 1):
        for word in product((0, 1), repeat=m):
            if m >= 2 and word[-1] == word[-2]:
                continue
            total = Fraction(0)
            for blocks in _blocks(word):
                n = len(blocks)
                denom = m
                for r, s in blocks:
                    denom *= factorial(r) * factorial(s)
                total += Fraction((-1) ** (n - 1), n * denom)
            if m >= 2 and word[-2:] == (1, 0):
                # [.., [Y, X]] = -[.., [X, Y]]: fold onto the canonical tail
                word = word[:-2] + (0, 1)
                total = -total
            if total:
                coeffs[word] = coeffs.get(word, Fraction(0)) + total
    return {w: c for w, c in coeffs.items() if c}


def _span_basis(vectors: list[sympy.Matrix], dim: int) -> list[sympy.Matrix]:
    """Row-reduced basis of the span of the given column vectors."""
    if not vectors:
        return []
    m = sympy.Matrix.hstack(*vectors).T
    rref, pivots = m.rref()
    return [rref.row(i).T for i in range(len(pivots))]


@dataclass(frozen=True, eq=False)
class NilpotentAlgebra:
    """Nilpotent Lie algebra with rational structure constants in a Malcev basis.

    ``structure_constants[i][j][k]`` is the coefficient of ``e_k`` in ``[e_i, e_j]``
    (0-based indices).  Use :func:`validate_algebra` to build instances.
    """

    structure_constants: np.ndarray  # object array (d, d, d) of exact rationals
    step: int
    lcs: tuple  # tuple of bases (each a tuple of rational tuples)
    name: str = ""
    _pairs: tuple = field(repr=False, default=())

    @property
    def dim(self) -> int:
        return self.structure_constants.shape[0]

    @property
    def abelian_dim(self) -> int:
        """Dimension l of the abelianization L/[L, L]."""
        if len(self.lcs) < 2:
            return self.dim
        return self.dim - len(self.lcs[1])

    @cached_property
    def _bch_terms(self):
        coeffs = dynkin_coefficients(self.step)
        return [(w, Q(c.numerator, c.denominator), float(c)) for w, c in coeffs.items()]

    @cached_property
    def structure_floats(self) -> np.ndarray:
        return self.structure_constants.astype(float)

    # -- vectors ---------------------------------------------------------
    def _check(self, *xs):
        for x in xs:
            if np.shape(x)[-1:] != (self.dim,):
                raise DimensionMismatch(f"expected last axis {self.dim}, got shape {np.shape(x)}")

    def zero(self, exact: bool = False, batch: tuple = ()) -> np.ndarray:
        if exact:
            out = np.empty(batch + (self.dim,), dtype=object)
            out[...] = Q(0)
            return out
        return np.zeros(batch + (self.dim,))

    def basis(self, i: int, exact: bool = False) -> np.ndarray:
        """The basis vector e_{i+1} (0-based index)."""
        v = self.zero(exact)
        v[i] = Q(1) if exact else 1.0
        return v

    def vector(self, coeffs: Sequence, exact: bool = True) -> np.ndarray:
        v = exact_array(coeffs) if exact else np.asarray(coeffs, dtype=float)
        self._check(v)
        return v

    def scaled_basis(self, i: int, t: np.ndarray) -> np.ndarray:
        """Batch of vectors t * e_i for an array of scalars t."""
        t = np.asarray(t)
        out = self.zero(is_exact(t), t.shape)
        out[..., i] = t
        return out

    # -- Lie operations --------------------------------------------------
    def bracket(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self._check(x, y)
        exact = is_exact(x) or is_exact(y)
        batch = np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1])
        out = self.zero(exact, batch)
        for i, j, terms in self._pairs:
            cross = x[..., i] * y[..., j] - x[..., j] * y[..., i]
            for k, c in terms:
                out[..., k] = out[..., k] + (c if exact else float(c)) * cross
        return out

    def ad_matrix(self, x: np.ndarray) -> np.ndarray:
        """Matrix of ad_x acting on column coordinate vectors (single x)."""
        exact = is_exact(x)
        cols = [self.bracket(x, self.basis(j, exact)) for j in range(self.dim)]
        return np.stack(cols, axis=-1)

    def bch(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """log(exp x exp y), exact on rational input."""
        self._check(x, y)
        exact = is_exact(x) or is_exact(y)
        letters = (x, y)
        memo: dict[tuple[int, ...], np.ndarray] = {}

        def nested(word):
            if word in memo:
                return memo[word]
            if len(word) == 1:
                val = letters[word[0]]
            else:
                val = self.bracket(letters[word[0]], nested(word[1:]))
            memo[word] = val
            return val

        batch = np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1])
        out = self.zero(exact, batch)
        for word, c, cf in self._bch_terms:
            out = out + (c if exact else cf) * nested(word)
        return out

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return -x

    # -- coordinates of the second kind -----------------------------------
    def first_from_second(self, t: np.ndarray) -> np.ndarray:
        """log(exp(t1 e1) ... exp(td ed))."""
        self._check(t)
        t = np.asarray(t)
        x = self.scaled_basis(self.dim - 1, t[..., -1])
        for i in range(self.dim - 2, -1, -1):
            x = self.bch(self.scaled_basis(i, t[..., i]), x)
        return x

    def second_from_first(self, x: np.ndarray) -> np.ndarray:
        """Malcev coordinates of exp(x), by peeling off exp(t_i e_i) from the left."""
        self._check(x)
        x = np.asarray(x)
        t = np.empty_like(x)
        r = x
        for i in range(self.dim):
            t[..., i] = r[..., i]
            if i < self.dim - 1:
                r = self.bch(self.scaled_basis(i, -r[..., i]), r)
        return t

    def group_mul_second(self, s: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Product of two elements given in second-kind coordinates."""
        return self.second_from_first(self.bch(self.first_from_second(s), self.first_from_second(t)))

    def adjoint_group_matrix(self, x: np.ndarray) -> np.ndarray:
        """Matrix of Ad(exp x) = exp(ad x), a finite sum by nilpotency."""
        ad = self.ad_matrix(x)
        exact = is_exact(x)
        term = np.eye(self.dim, dtype=object) * Q(1) if exact else np.eye(self.dim)
        total = term.copy()
        for k in range(1, self.step + 1):
            term = term.dot(ad) if exact else term @ ad
            total = total + term * (Q(1, factorial(k)) if exact else 1.0 / factorial(k))
        return total


def _as_tensor(structure_constants) -> np.ndarray:
    arr = np.asarray(structure_constants, dtype=object)
    if arr.ndim != 3 or not (arr.shape[0] == arr.shape[1] == arr.shape[2]):
        raise DimensionMismatch(f"structure constants must have shape d x d x d, got {arr.shape}")
    return exact_array(arr)


def lower_central_series(c: np.ndarray) -> list[list[sympy.Matrix]]:
    """Exact lower central series g = g^1 > g^2 > ...; stops at 0 or at a repeat.

    Raises NotNilpotent when the series stabilizes at a nonzero ideal.
    """
    d = c.shape[0]
    basis = [sympy.Matrix([1 if k == i else 0 for k in range(d)]) for i in range(d)]
    smat = [[sympy.Matrix([sympy.Rational(c[i, j, k].numerator, c[i, j, k].denominator) for k in range(d)])
             for j in range(d)] for i in range(d)]

    def br(u, v):
        out = sympy.zeros(d, 1)
        for i in range(d):
            if u[i] == 0:
                continue
            for j in range(d):
                if v[j] != 0:
                    out += u[i] * v[j] * smat[i][j]
        return out

    series = [basis]
    current = basis
    while current:
        nxt = _span_basis([br(e, v) for e in basis for v in current], d)
        nxt = [v for v in nxt if any(x != 0 for x in v)]
        if len(nxt) == len(current):
            raise NotNilpotent(f"lower central series stabilizes at dimension {len(current)}")
        series.append(nxt)
        current = nxt
    return series


def validate_algebra(dim: int, structure_constants, name: str = "") -> NilpotentAlgebra:
    """Check antisymmetry, nilpotency, the Jacobi identity and Malcev ordering exactly."""
    c = _as_tensor(structure_constants)
    if c.shape[0] != dim:
        raise DimensionMismatch(f"dim={dim} but tensor has size {c.shape[0]}")
    for i in range(dim):
        for j in range(dim):
            for k in range(dim):
                if c[i, j, k] != -c[j, i, k]:
                    raise AntisymmetryViolation(
                        f"c[{i + 1}][{j + 1}][{k + 1}] = {c[i, j, k]} but c[{j + 1}][{i + 1}][{k + 1}] = {c[j, i, k]}")

    series = lower_central_series(c)

    def br(u, v):
        out = [Q(0)] * dim
        for i in range(dim):
            if not u[i]:
                continue
            for j in range(dim):
                if v[j]:
                    for k in range(dim):
                        out[k] += u[i] * v[j] * c[i, j, k]
        return out

    e = [[Q(int(k == i)) for k in range(dim)] for i in range(dim)]
    for i in range(dim):
        for j in range(i + 1, dim):
            for k in range(j + 1, dim):
                terms = [br(e[i], br(e[j], e[k])), br(e[j], br(e[k], e[i])), br(e[k], br(e[i], e[j]))]
                defect = [a + b + cc for a, b, cc in zip(*terms)]
                if any(defect):
                    raise JacobiViolation((i + 1, j + 1, k + 1), tuple(defect))

    # Malcev compatibility: the m-th term is spanned by the last dim(g^m) basis vectors
    for m, term in enumerate(series):
        r = len(term)
        for v in term:
            if any(v[k] != 0 for k in range(dim - r)):
                raise BasisNotMalcevOrdered(
                    f"term {m + 1} of the lower central series is not spanned by e{dim - r + 1}..e{dim}")

    pairs = []
    for i in range(dim):
        for j in range(i + 1, dim):
            terms = tuple((k, c[i, j, k]) for k in range(dim) if c[i, j, k])
            if terms:
                pairs.append((i, j, terms))
    lcs = tuple(tuple(tuple(to_fraction(x) for x in v) for v in term) for term in series)
    return NilpotentAlgebra(structure_constants=c, step=max(len(series) - 1, 1),
                            lcs=lcs, name=name, _pairs=tuple(pairs))


def algebra_from_brackets(dim: int, brackets, name: str = "") -> NilpotentAlgebra:
    """Build from sparse 1-based ``(i, j, k, num, den)`` entries; mirrored entries are filled in.

    An entry whose mirror is also listed must agree with it up to sign, otherwise
    :class:`AntisymmetryViolation` is raised by validation.
    """
    c = np.empty((dim, dim, dim), dtype=object)
    c[...] = Q(0)
    given = set()
    for entry in brackets:
        i, j, k, num, den = entry if len(entry) == 5 else (*entry, 1)
        i, j, k = int(i) - 1, int(j) - 1, int(k) - 1
        if not (0 <= i < dim and 0 <= j < dim and 0 <= k < dim):
            raise DimensionMismatch(f"bracket index out of range in {entry}")
        c[i, j, k] = Q(int(num), int(den))
        given.add((i, j, k))
    for i, j, k in list(given):
        if (j, i, k) not in given:
            c[j, i, k] = -c[i, j, k]
    return validate_algebra(dim, c, name=name)


def abelian(dim: int) -> NilpotentAlgebra:
    return algebra_from_brackets(dim, [], name=f"abelian{dim}")


def heisenberg(scale: int = 1) -> NilpotentAlgebra:
    """Heisenberg algebra with [e1, e2] = scale * e3."""
    return algebra_from_brackets(3, [(1, 2, 3, scale, 1)], name="heisenberg" if scale == 1 else f"heisenberg{scale}")


def filiform4(a: int = 1, b: int = 1) -> NilpotentAlgebra:
    """Step-3 filiform algebra: [e1, e2] = a e3, [e1, e3] = b e4.

    With a = b = 1 the integer Malcev points are not closed under products
    (exp(e1) exp(e2) picks up a half in e4); b = 2 gives a lattice.
    """
    name = "filiform4" if (a, b) == (1, 1) else f"filiform4_{a}_{b}"
    return algebra_from_brackets(4, [(1, 2, 3, a, 1), (1, 3, 4, b, 1)], name=name)
