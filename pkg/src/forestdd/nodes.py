"""1D Gauss-Lobatto node sets, Lagrange bases, and Gauss quadrature.

All node sets and quadrature rules live on the reference interval [0, 1].
"""

from __future__ import annotations

import math

import numpy as np

_SQRT5 = math.sqrt(5.0)
_SQRT37 = math.sqrt(3.0 / 7.0)

# Gauss-Lobatto points on [-1, 1], mapped to [0, 1]
_LOBATTO = {
    1: np.array([0.0, 1.0]),
    2: np.array([0.0, 0.5, 1.0]),
    3: np.array([0.0, 0.5 * (1 - 1 / _SQRT5), 0.5 * (1 + 1 / _SQRT5), 1.0]),
    4: np.array([0.0, 0.5 * (1 - _SQRT37), 0.5, 0.5 * (1 + _SQRT37), 1.0]),
}

SUPPORTED_ORDERS = tuple(sorted(_LOBATTO))


def lobatto_points(p: int) -> np.ndarray:
    """The p+1 Gauss-Lobatto nodes on [0, 1]."""
    try:
        return _LOBATTO[p].copy()
    except KeyError:
        raise ValueError(f"unsupported polynomial order {p}") from None


def lagrange_eval(nodes: np.ndarray, x) -> np.ndarray:
    """Values of all Lagrange basis functions of `nodes` at points x.

    Returns shape (len(x), len(nodes)); rows sum to 1.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    n = len(nodes)
    out = np.ones((len(x), n))
    for i in range(n):
        for j in range(n):
            if j != i:
                out[:, i] *= (x - nodes[j]) / (nodes[i] - nodes[j])
    return out


def lagrange_deriv(nodes: np.ndarray, x) -> np.ndarray:
    """First derivatives of all Lagrange basis functions at points x."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    n = len(nodes)
    out = np.zeros((len(x), n))
    for i in range(n):
        for k in range(n):
            if k == i:
                continue
            term = np.full(len(x), 1.0 / (nodes[i] - nodes[k]))
            for j in range(n):
                if j != i and j != k:
                    term *= (x - nodes[j]) / (nodes[i] - nodes[j])
            out[:, i] += term
    return out


def gauss_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [0, 1]; exact for degree 2n-1."""
    pts, wts = np.polynomial.legendre.leggauss(n)
    return 0.5 * (pts + 1.0), 0.5 * wts
