"""Automorphisms of nilmanifolds and their spectral data.

Exact checks (bracket and lattice preservation, ergodicity, primary
decomposition) run in rational arithmetic through sympy; Jordan chains inside
each primary component are then built numerically with a conditioning guard.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy

from .errors import (
    BracketNotPreserved,
    DimensionMismatch,
    IllConditioned,
    LatticeNotPreserved,
    NotUnimodular,
    SubspaceRational,
    ZeroDirection,
)
from .lie_core import Q, exact_array, is_exact, to_fraction
from .nilmanifold import Nilmanifold

_X = sympy.Symbol("x")


def _to_sympy(m: np.ndarray) -> sympy.Matrix:
    return sympy.Matrix(m.shape[0], m.shape[1],
                        lambda i, j: sympy.Rational(m[i, j].numerator, m[i, j].denominator))


def _from_sympy(m: sympy.Matrix) -> np.ndarray:
    return exact_array([[to_fraction(m[i, j]) for j in range(m.cols)] for i in range(m.rows)])


def _mat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a.dot(b)


@dataclass(frozen=True, eq=False)
class Automorphism:
    """Lattice-preserving automorphism given by its derivative Da in the Malcev basis.

    ``matrix[:, j]`` holds the coordinates of Da(e_j).  Build with
    :func:`validate_automorphism`.
    """

    manifold: Nilmanifold
    matrix: np.ndarray  # exact (d, d)
    inverse_matrix: np.ndarray  # exact (d, d)
    char_poly: tuple  # exact coefficients, leading first
    abelianization_matrix: np.ndarray  # integer (l, l)
    name: str = ""

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def matrix_float(self) -> np.ndarray:
        return self.matrix.astype(float)

    def power(self, n: int) -> np.ndarray:
        """Exact Da^n by repeated squaring (negative n uses the inverse)."""
        return _power(self, int(n))

    def abelian_char_poly(self) -> sympy.Poly:
        return sympy.Matrix(self.abelianization_matrix.astype(int)).charpoly(_X)


@lru_cache(maxsize=4096)
def _power(aut: Automorphism, n: int) -> np.ndarray:
    if n == 0:
        out = np.empty((aut.dim, aut.dim), dtype=object)
        for i in range(aut.dim):
            for j in range(aut.dim):
                out[i, j] = Q(int(i == j))
        return out
    if n < 0:
        base = aut.inverse_matrix
        n = -n
        half = _power(aut, -(n // 2))
        sq = _mat_mul(half, half)
        return _mat_mul(sq, base) if n % 2 else sq
    half = _power(aut, n // 2)
    sq = _mat_mul(half, half)
    return _mat_mul(sq, aut.matrix) if n % 2 else sq


def validate_automorphism(manifold: Nilmanifold, matrix, name: str = "") -> Automorphism:
    """Check bracket preservation, unimodularity and lattice preservation exactly."""
    alg = manifold.algebra
    d = alg.dim
    m = exact_array(matrix)
    if m.shape != (d, d):
        raise DimensionMismatch(f"automorphism must be {d}x{d}, got {m.shape}")
    cols = [m[:, j] for j in range(d)]
    for i in range(d):
        for j in range(i + 1, d):
            lhs = alg.bracket(cols[i], cols[j])
            rhs = m.dot(alg.bracket(alg.basis(i, True), alg.basis(j, True)))
            if any(a != b for a, b in zip(lhs, rhs)):
                raise BracketNotPreserved((i, j))
    sm = _to_sympy(m)
    det = sm.det()
    if abs(det) != 1:
        raise NotUnimodular(f"|det Da| = {abs(det)} != 1")
    inv = _from_sympy(sm.inv())
    for mat, is_inv in ((m, False), (inv, True)):
        for j in range(d):
            t = alg.second_from_first(mat[:, j])
            if any(x.denominator != 1 for x in t):
                raise LatticeNotPreserved(j, inverse=is_inv)
    l = alg.abelian_dim
    ab = m[:l, :l]
    cp = sm.charpoly(_X)
    return Automorphism(manifold=manifold, matrix=m, inverse_matrix=inv,
                        char_poly=tuple(to_fraction(c) for c in cp.all_coeffs()),
                        abelianization_matrix=np.array([[int(x) for x in row] for row in ab], dtype=np.int64),
                        name=name)


# -- ergodicity -----------------------------------------------------------------

@dataclass
class ErgodicityCertificate:
    ergodic: bool
    char_poly: list  # integer coefficients of the abelianized characteristic polynomial
    orders_checked: list
    cyclotomic_factor: int | None = None  # order n of a dividing cyclotomic polynomial

    def to_dict(self) -> dict:
        return {"ergodic": self.ergodic, "char_poly": self.char_poly,
                "orders_checked": self.orders_checked, "cyclotomic_factor": self.cyclotomic_factor}


def _cyclotomic_orders(degree: int) -> list[int]:
    # phi(n) >= sqrt(n / 2), so phi(n) <= degree forces n <= 2 degree^2
    bound = max(2 * degree * degree, 2)
    return [n for n in range(1, bound + 1) if sympy.totient(n) <= degree]


def is_ergodic(aut: Automorphism) -> ErgodicityCertificate:
    """Parry's criterion: no eigenvalue of the abelianized map is a root of unity.

    Decided exactly by trial division with every cyclotomic polynomial of degree
    at most l.
    """
    p = aut.abelian_char_poly()
    orders = _cyclotomic_orders(p.degree())
    for n in orders:
        phi = sympy.Poly(sympy.cyclotomic_poly(n, _X), _X)
        if p.rem(phi).is_zero:
            return ErgodicityCertificate(False, [int(c) for c in p.all_coeffs()], orders[:orders.index(n) + 1], n)
    return ErgodicityCertificate(True, [int(c) for c in p.all_coeffs()], orders)


def root_of_unity_probe(coeffs, max_order: int | None = None, tol: float = 1e-8) -> bool:
    """Numerical check: does the polynomial vanish at some root of unity of order <= max_order?"""
    coeffs = [float(c) for c in coeffs]
    deg = len(coeffs) - 1
    if max_order is None:
        max_order = max(2 * deg * deg, 2)
    scale = sum(abs(c) for c in coeffs)
    for n in range(1, max_order + 1):
        for k in range(n):
            if math.gcd(k, n) != 1:
                continue
            z = cmath.exp(2j * math.pi * k / n)
            if abs(np.polyval(coeffs, z)) < tol * scale:
                return True
    return False


# -- primary decomposition and Jordan split ---------------------------------------

@dataclass
class PrimaryComponent:
    factor: sympy.Poly  # irreducible factor over Q
    multiplicity: int
    basis: np.ndarray  # exact (d, dim) columns spanning ker p(Da)^k
    block_sizes: list  # Jordan block sizes for every root of the factor


def primary_decomposition(aut: Automorphism) -> list[PrimaryComponent]:
    A = _to_sympy(aut.matrix)
    d = aut.dim
    cp = A.charpoly(_X)
    _, factors = sympy.factor_list(cp.as_expr(), _X)
    comps = []
    for f, k in factors:
        p = sympy.Poly(f, _X)
        pa = _poly_at(p, A)
        ker = (pa ** k).nullspace()
        basis = sympy.Matrix.hstack(*ker)
        # Jordan block sizes from exact kernel dimensions of p(A)^j
        m = p.degree()
        dims = [0] + [d - (pa ** j).rank() for j in range(1, k + 1)]
        at_least = [(dims[j] - dims[j - 1]) // m for j in range(1, k + 1)]
        sizes = []
        for j in range(k, 0, -1):
            bigger = at_least[j] if j < k else 0
            sizes += [j] * (at_least[j - 1] - bigger)
        comps.append(PrimaryComponent(p, k, _from_sympy(basis), sorted(sizes, reverse=True)))
    return comps


def _poly_at(p: sympy.Poly, A: sympy.Matrix) -> sympy.Matrix:
    out = sympy.zeros(*A.shape)
    for c in p.all_coeffs():
        out = out * A + c * sympy.eye(A.shape[0])
    return out


@dataclass
class JordanBlock:
    eigenvalue: complex
    size: int
    kind: str  # "real" or "complex"
    vectors: np.ndarray  # (d, size) or (d, 2*size), ordered w1, w1', w2, w2', ...
    index: int = 0

    @property
    def modulus(self) -> float:
        return abs(self.eigenvalue)

    @property
    def angle(self) -> float:
        return abs(cmath.phase(self.eigenvalue))

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def block_matrix(self) -> np.ndarray:
        lam = self.eigenvalue
        if self.kind == "real":
            J = np.diag(np.full(self.size, lam.real)) + np.diag(np.ones(self.size - 1), -1)
            return J
        a, b = lam.real, lam.imag
        J = np.zeros((2 * self.size, 2 * self.size))
        for i in range(self.size):
            # columns are images of w_i and w_i' in the basis (w_1, w_1', ...)
            J[2 * i:2 * i + 2, 2 * i:2 * i + 2] = [[a, -b], [b, a]]
            if i + 1 < self.size:
                J[2 * i + 2, 2 * i] = 1.0
                J[2 * i + 3, 2 * i + 1] = 1.0
        return J

    def to_dict(self) -> dict:
        return {"eigenvalue": [self.eigenvalue.real, self.eigenvalue.imag], "modulus": self.modulus,
                "size": self.size, "kind": self.kind}


@dataclass
class JordanSplit:
    blocks: list  # ordered by modulus, then rotation angle, then input order
    residual: float

    def _basis(self, pred) -> np.ndarray:
        vecs = [b.vectors for b in self.blocks if pred(b.modulus)]
        d = self.blocks[0].vectors.shape[0] if self.blocks else 0
        return np.hstack(vecs) if vecs else np.zeros((d, 0))

    @property
    def unstable_basis(self) -> np.ndarray:
        return self._basis(lambda r: r > 1 + 1e-9)

    @property
    def stable_basis(self) -> np.ndarray:
        return self._basis(lambda r: r < 1 - 1e-9)

    @property
    def central_basis(self) -> np.ndarray:
        return self._basis(lambda r: abs(r - 1) <= 1e-9)

    @property
    def unstable_blocks(self) -> list:
        return [b for b in self.blocks if b.modulus > 1 + 1e-9]

    def assembled(self):
        B = np.hstack([b.vectors for b in self.blocks])
        J = np.zeros((B.shape[1], B.shape[1]))
        pos = 0
        for b in self.blocks:
            J[pos:pos + b.dim, pos:pos + b.dim] = b.block_matrix()
            pos += b.dim
        return B, J

    def to_dict(self) -> dict:
        return {"blocks": [b.to_dict() for b in self.blocks], "residual": self.residual,
                "dims": {"unstable": self.unstable_basis.shape[1], "stable": self.stable_basis.shape[1],
                         "central": self.central_basis.shape[1]}}


def _null_basis(M: np.ndarray, rank: int, tol: float = 1e-8) -> np.ndarray:
    """Orthonormal basis of the kernel of M with the rank known exactly."""
    u, s, vh = np.linalg.svd(M)
    n = M.shape[1]
    if rank > 0 and s[rank - 1] < tol * max(s[0], 1.0):
        raise IllConditioned("Jordan structure unstable", s[0] / max(s[rank - 1], 1e-300))
    if rank < len(s) and s[rank] > tol * max(s[0], 1.0):
        raise IllConditioned("kernel dimension disagrees with exact rank", s[0] / s[rank])
    return vh[rank:].conj().T if rank < n else np.zeros((n, 0), dtype=M.dtype)


def _chains(N: np.ndarray, sizes: list) -> list:
    """Jordan chains (top vector first) for the nilpotent part N on a generalized eigenspace."""
    n = N.shape[0]
    powers = [np.eye(n, dtype=N.dtype)]
    for _ in range(max(sizes)):
        powers.append(powers[-1] @ N)
    chains: list[list[np.ndarray]] = []
    for s in sorted(set(sizes), reverse=True):
        count = sizes.count(s)
        kdim = sum(min(b, s) for b in sizes)
        kdim_prev = sum(min(b, s - 1) for b in sizes)
        # kernels inside the generalized eigenspace: rank of N^j there is n_gen - kdim
        K = _null_basis(powers[s], n - kdim)
        taken = [_null_basis(powers[s - 1], n - kdim_prev)] if s > 1 else []
        for ch in chains:
            taken.append(ch[len(ch) - s][:, None])
        T = np.hstack(taken) if taken else np.zeros((n, 0), dtype=N.dtype)
        if T.shape[1]:
            q, _ = np.linalg.qr(T)
            R = K - q @ (q.conj().T @ K)
        else:
            R = K
        u, sv, _ = np.linalg.svd(R)
        if sv[count - 1] < 1e-8:
            raise IllConditioned("cannot complete Jordan chains", 1.0 / max(sv[count - 1], 1e-300))
        for c in range(count):
            v = u[:, c]
            chain = [v]
            for _ in range(s - 1):
                chain.append(N @ chain[-1])
            chains.append(chain)
    return chains


def jordan_split(aut: Automorphism) -> JordanSplit:
    """Real Jordan form organised by the modulus of the eigenvalues."""
    A = aut.matrix_float
    blocks = []
    order = 0
    for comp in primary_decomposition(aut):
        Q = comp.basis.astype(float)
        Qs = np.linalg.pinv(Q)
        Ai = Qs @ A @ Q
        roots = np.roots([float(c) for c in comp.factor.all_coeffs()])
        # polish roots against the restricted matrix spectrum
        seen = []
        for lam in sorted(roots, key=lambda z: (abs(z), abs(cmath.phase(z)), -z.imag)):
            if lam.imag < -1e-12:
                continue
            if any(abs(lam - s) < 1e-9 for s in seen):
                continue
            seen.append(lam)
            real = abs(lam.imag) <= 1e-12
            lam_c = complex(lam.real, 0.0) if real else complex(lam)
            n = Ai.shape[0]
            N = Ai - (lam_c.real * np.eye(n) if real else lam_c * np.eye(n, dtype=complex))
            if not real:
                N = N.astype(complex)
            chains = _chains(N, comp.block_sizes)
            for chain in chains:
                top = chain[0]
                scale = np.linalg.norm(Q @ top) or 1.0
                chain = [v / scale for v in chain]
                if real:
                    vecs = np.stack([np.real(Q @ v) for v in chain], axis=1)
                    blocks.append(JordanBlock(lam_c, len(chain), "real", vecs, order))
                else:
                    cols = []
                    for v in chain:
                        full = Q @ v
                        cols += [full.real, -full.imag]
                    blocks.append(JordanBlock(lam_c, len(chain), "complex", np.stack(cols, axis=1), order))
                order += 1
    blocks.sort(key=lambda b: (round(b.modulus, 12), round(b.angle, 12), b.index))
    B = np.hstack([b.vectors for b in blocks])
    J = np.zeros((B.shape[1], B.shape[1]))
    pos = 0
    for b in blocks:
        J[pos:pos + b.dim, pos:pos + b.dim] = b.block_matrix()
        pos += b.dim
    residual = float(np.abs(A @ B - B @ J).max())
    if np.linalg.matrix_rank(B) < aut.dim:
        raise IllConditioned("Jordan basis does not span the algebra", np.linalg.cond(B))
    return JordanSplit(blocks, residual)


# -- rational hull ------------------------------------------------------------------

def _rational_span(vectors: list[sympy.Matrix]) -> list[sympy.Matrix]:
    if not vectors:
        return []
    m = sympy.Matrix.hstack(*vectors).T
    rref, piv = m.rref()
    return [rref.row(i).T for i in range(len(piv))]


def rational_hull(aut: Automorphism, W) -> np.ndarray:
    """Exact basis (rows) of the smallest rational Da-invariant ideal containing W.

    ``W`` is a (k, d) array of vectors.  Float input is attributed to the rational
    primary components it meets; exact input is closed under Da directly.  The
    result is then saturated under brackets with the whole algebra.
    """
    alg = aut.manifold.algebra
    d = aut.dim
    W = np.atleast_2d(np.asarray(W))
    A = _to_sympy(aut.matrix)
    if is_exact(W):
        start = [sympy.Matrix([sympy.Rational(x.numerator, x.denominator) for x in w]) for w in W]
    else:
        comps = primary_decomposition(aut)
        Bfull = np.hstack([c.basis.astype(float) for c in comps])
        coef = np.linalg.solve(Bfull, W.T.astype(float))
        start = []
        pos = 0
        for c in comps:
            k = c.basis.shape[1]
            if np.abs(coef[pos:pos + k]).max() > 1e-9 * max(1.0, np.abs(coef).max()):
                start += [sympy.Matrix([sympy.Rational(x.numerator, x.denominator) for x in c.basis[:, j]])
                          for j in range(k)]
            pos += k
    basis_e = [sympy.Matrix([int(i == j) for i in range(d)]) for j in range(d)]
    M = _rational_span(start)
    while True:
        new = list(M)
        for v in M:
            new.append(A * v)
            new.append(A.inv() * v)
            vv = exact_array([to_fraction(x) for x in v])
            for e in basis_e:
                ee = exact_array([to_fraction(x) for x in e])
                br = alg.bracket(ee, vv)
                new.append(sympy.Matrix([sympy.Rational(x.numerator, x.denominator) for x in br]))
        M2 = _rational_span(new)
        if len(M2) == len(M):
            break
        M = M2
    if not M:
        return np.empty((0, d), dtype=object)
    return np.stack([exact_array([to_fraction(x) for x in v]) for v in M])


# -- Diophantine constants -----------------------------------------------------------

@dataclass
class DiophantineReport:
    direction: np.ndarray
    exponent: float
    c1_hat: float
    argmin_z: tuple
    search_bound: int
    failure: bool = False  # an integer vector in the box is orthogonal to w
    normalized: bool = True

    def to_dict(self) -> dict:
        return {"direction": [float(x) for x in self.direction], "c2": self.exponent, "c1_hat": self.c1_hat,
                "argmin_z": [int(z) for z in self.argmin_z], "Zmax": self.search_bound,
                "diophantine_failure": self.failure, "normalized": self.normalized}


def _canonical_sign(z: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(z)
    return -z if nz.size and z[nz[0]] < 0 else z


def diophantine_constant(w, c2: float, zmax: int, normalize: bool = True,
                         chunk: int = 4_000_000, zero_tol: float = 1e-12) -> DiophantineReport:
    """Brute-force min of |<z, w>| * |z|^c2 over 0 < |z|_inf <= zmax.

    With ``normalize`` the direction is scaled to unit Euclidean length first,
    which makes the constant a property of the line spanned by w.
    """
    w = np.asarray(w, dtype=float).ravel()
    if not np.any(w) or not np.all(np.isfinite(w)):
        raise ZeroDirection("direction must be a nonzero finite vector")
    if c2 <= 0 or zmax < 1:
        raise ValueError("need c2 > 0 and zmax >= 1")
    wn = w / np.linalg.norm(w) if normalize else w
    l = wn.size
    best = (math.inf, None)
    zero_hit = None
    rng1 = np.arange(-zmax, zmax + 1, dtype=np.int64)
    if l == 1:
        z = np.arange(1, zmax + 1)
        vals = np.abs(z * wn[0]) * z.astype(float) ** c2
        i = int(np.argmin(vals))
        return DiophantineReport(w, c2, float(vals[i]), (int(z[i]),), zmax, False, normalize)
    # enumerate the half box: last coordinate block by block, z1 vectorised
    outer = [np.arange(-zmax, zmax + 1)] * (l - 2)
    rows_per_chunk = max(1, chunk // rng1.size)
    for rest in (np.array(list(r)) for r in (np.ndindex(*(len(o) for o in outer)) if outer else [()])):
        z_mid = (rest - zmax) if outer else np.zeros(0, dtype=np.int64)
        mid_dot = float(z_mid @ wn[1:l - 1]) if outer else 0.0
        mid_sq = float(z_mid @ z_mid) if outer else 0.0
        for start in range(-zmax, zmax + 1, rows_per_chunk):
            zl = np.arange(start, min(start + rows_per_chunk, zmax + 1), dtype=np.int64)
            dot = rng1[None, :] * wn[0] + mid_dot + zl[:, None] * wn[-1]
            sq = (rng1[None, :] ** 2 + zl[:, None] ** 2).astype(float) + mid_sq
            vals = np.abs(dot) * sq ** (c2 / 2)
            vals[sq == 0] = np.inf
            # exact orthogonality shows up as a value at rounding level
            zero = np.abs(dot) <= zero_tol * np.sqrt(sq)
            zero[sq == 0] = False
            if zero.any():
                idx = np.argwhere(zero)
                norms = sq[zero]
                j = int(np.argmin(norms))
                r, c = idx[j]
                z = np.concatenate([[rng1[c]], z_mid, [zl[r]]]).astype(np.int64)
                if zero_hit is None or norms[j] < zero_hit[0]:
                    zero_hit = (norms[j], z)
            j = int(np.argmin(vals))
            r, c = np.unravel_index(j, vals.shape)
            if vals[r, c] < best[0]:
                z = np.concatenate([[rng1[c]], z_mid, [zl[r]]]).astype(np.int64)
                best = (float(vals[r, c]), z)
    if zero_hit is not None:
        return DiophantineReport(w, c2, 0.0, tuple(_canonical_sign(zero_hit[1])), zmax, True, normalize)
    return DiophantineReport(w, c2, best[0], tuple(_canonical_sign(best[1])), zmax, False, normalize)


def integer_relation(V, bound: int = 20, tol: float = 1e-9):
    """Smallest integer z (|z|_inf <= bound) with <z, v> ~ 0 for every row v of V, or None."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    l = V.shape[1]
    # keep the candidate grid below ~10^6 vectors
    bound = max(1, min(bound, int((10 ** 6) ** (1 / l) // 2)))
    Vn = V / np.linalg.norm(V, axis=1, keepdims=True)
    grid = np.array(list(np.ndindex(*([2 * bound + 1] * l)))) - bound
    grid = grid[np.any(grid != 0, axis=1)]
    res = np.abs(grid @ Vn.T).max(axis=1)
    ok = res <= tol * np.linalg.norm(grid, axis=1)
    if not ok.any():
        return None
    cand = grid[ok]
    z = cand[np.argmin(np.abs(cand).sum(axis=1))]
    return tuple(int(x) for x in _canonical_sign(z))


def generic_direction(V, trial_count: int, c2: float, zmax: int,
                      rng: np.random.Generator | None = None) -> DiophantineReport:
    """Best Diophantine direction among the basis of V and random unit vectors in V.

    Raises :class:`SubspaceRational` when V lies in a proper rational subspace.
    """
    V = np.atleast_2d(np.asarray(V))
    l = V.shape[1]
    if is_exact(V):
        sm = sympy.Matrix(V.shape[0], l, lambda i, j: sympy.Rational(V[i, j].numerator, V[i, j].denominator))
        if sm.rank() < l:
            rel = sm.nullspace()[0]
            den = sympy.ilcm(*[x.q for x in rel])
            raise SubspaceRational(tuple(int(x * den) for x in rel))
        V = V.astype(float)
    else:
        V = V.astype(float)
        if np.linalg.matrix_rank(V, tol=1e-10) < l:
            rel = integer_relation(V)
            if rel is not None:
                raise SubspaceRational(rel)
    rng = rng if rng is not None else np.random.default_rng(0)
    candidates = [v for v in V]
    for _ in range(trial_count):
        coef = rng.standard_normal(V.shape[0])
        candidates.append(coef @ V)
    best = None
    for w in candidates:
        if np.linalg.norm(w) == 0:
            continue
        rep = diophantine_constant(w / np.linalg.norm(w), c2, zmax)
        if best is None or rep.c1_hat > best.c1_hat:
            best = rep
    return best
