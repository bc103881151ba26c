"""Legendre-Gauss-Lobatto collocation and diagonal-norm SBP operators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_DEGREE = 15

_NEWTON_TOL = 1e-15
_NEWTON_MAXIT = 100


class InvalidDegreeError(ValueError):
    """Polynomial degree outside the supported range."""


def _legendre_pair(n: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate (P_{n-1}, P_n) at x via the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = np.array(x, dtype=float, copy=True)
    for k in range(2, n + 1):
        p_prev, p = p, ((2.0 * k - 1.0) * x * p - (k - 1.0) * p_prev) / k
    return p_prev, p


def lgl_nodes_weights(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the (degree+1)-point Legendre-Gauss-Lobatto rule.

    Interior nodes are the roots of P'_degree, found by Newton iteration
    seeded with Chebyshev-Gauss-Lobatto points; the endpoints are fixed at
    -1 and +1. Weights follow the closed form 2 / (N (N+1) P_N(x)^2).
    """
    if not isinstance(degree, (int, np.integer)):
        raise InvalidDegreeError(f"degree must be an integer, got {degree!r}")
    if degree < 1 or degree > MAX_DEGREE:
        raise InvalidDegreeError(
            f"degree must be between 1 and {MAX_DEGREE}, got {degree}"
        )
    n = int(degree)
    nodes = -np.cos(np.pi * np.arange(n + 1) / n)
    if n > 1:
        x = nodes[1:-1].copy()
        for _ in range(_NEWTON_MAXIT):
            p_prev, p = _legendre_pair(n, x)
            # root update for (1 - x^2) P'_n, using (1-x^2) P'_n = n (P_{n-1} - x P_n)
            dx = (p_prev - x * p) / ((n + 1.0) * p)
            x += dx
            if np.max(np.abs(dx)) <= _NEWTON_TOL:
                break
        nodes[1:-1] = x
    nodes[0] = -1.0
    nodes[-1] = 1.0
    _, p_n = _legendre_pair(n, nodes)
    weights = 2.0 / (n * (n + 1.0) * p_n**2)
    return nodes, weights


def _derivative_matrix(nodes: np.ndarray) -> np.ndarray:
    """Barycentric collocation derivative matrix on the given nodes."""
    n = nodes.size
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    bary = 1.0 / np.prod(diff, axis=1)
    d = (bary[None, :] / bary[:, None]) / diff
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -np.sum(d, axis=1))
    return d


@dataclass(frozen=True)
class SbpOperators:
    """Collocation operators for one reference direction.

    Satisfies Q + Q^T = B with Q = diag(weights) @ D and
    B = diag(-1, 0, ..., 0, 1); S = 2Q - B is skew-symmetric.
    """

    degree: int
    nodes: np.ndarray
    weights: np.ndarray
    D: np.ndarray
    Q: np.ndarray
    S: np.ndarray
    B: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.degree + 1


def build_operators(degree: int) -> SbpOperators:
    """Build the LGL SBP operator family for the given polynomial degree."""
    nodes, weights = lgl_nodes_weights(degree)
    d = _derivative_matrix(nodes)
    q = weights[:, None] * d
    b = np.zeros((degree + 1, degree + 1))
    b[0, 0] = -1.0
    b[-1, -1] = 1.0
    s = 2.0 * q - b
    for arr in (nodes, weights, d, q, s, b):
        arr.setflags(write=False)
    return SbpOperators(degree=int(degree), nodes=nodes, weights=weights, D=d, Q=q, S=s, B=b)
