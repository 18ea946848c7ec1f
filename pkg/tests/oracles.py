"""Independent reference computations used by several test modules."""

from math import factorial

import numpy as np


def E(n, i, j):
    m = np.zeros((n, n))
    m[i - 1, j - 1] = 1.0
    return m


# faithful matrix representations: rho(e_k) for each basis vector
HEISENBERG2_REP = [E(3, 1, 2), E(3, 2, 3), 0.5 * E(3, 1, 3)]  # [e1, e2] = 2 e3
FILIFORM4_REP = [E(4, 2, 1) + E(4, 4, 3), E(4, 3, 2), E(4, 4, 2) - E(4, 3, 1), -2 * E(4, 4, 1)]


def rep(basis_images, x):
    return np.tensordot(np.asarray(x, dtype=float), np.array(basis_images), axes=(0, 0))


def nil_exp(N):
    out = np.eye(N.shape[0])
    term = np.eye(N.shape[0])
    for k in range(1, N.shape[0] + 1):
        term = term @ N
        out = out + term / factorial(k)
    return out


def nil_log(U):
    M = U - np.eye(U.shape[0])
    out = np.zeros_like(M)
    term = np.eye(U.shape[0])
    for k in range(1, U.shape[0] + 1):
        term = term @ M
        out = out + (-1) ** (k + 1) * term / k
    return out


def unrep(basis_images, M):
    """Coordinates of M in the span of the basis images (least squares, exact for images)."""
    A = np.array([b.ravel() for b in basis_images]).T
    coef, *_ = np.linalg.lstsq(A, M.ravel(), rcond=None)
    return coef


def matrix_bch(basis_images, x, y):
    return unrep(basis_images, nil_log(nil_exp(rep(basis_images, x)) @ nil_exp(rep(basis_images, y))))


def golden_box_oracle(T, w1):
    """(1/T) int_0^T cos(2 pi w1 t) dt."""
    a = 2 * np.pi * T * w1
    return np.sin(a) / a
