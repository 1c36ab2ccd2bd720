"""Scaled probabilists' Hermite polynomials, orthonormal under centered Gaussians."""

from __future__ import annotations

import math

import numpy as np


def gauss_hermite(n_nodes: int, sigma: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes and weights integrating against the N(0, sigma^2) density.

    Exact for polynomials of degree <= 2*n_nodes - 1; the weights sum to one.
    """
    nodes, weights = np.polynomial.hermite_e.hermegauss(n_nodes)
    return nodes * sigma, weights / math.sqrt(2.0 * math.pi)


def hermite_table(max_degree: int, u, sigma: float = 1.0, n_derivatives: int = 2) -> np.ndarray:
    """Values and derivatives of the orthonormal Hermite family at given points.

    h_m(u) = He_m(u/sigma) / sqrt(m!) is orthonormal in L2(N(0, sigma^2)).
    Returns an array of shape (n_derivatives + 1, max_degree + 1, len(u)) whose
    [q, m] slice holds the q-th derivative of h_m.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    xi = u / sigma
    vals = np.empty((max_degree + 1, u.size))
    vals[0] = 1.0
    if max_degree >= 1:
        vals[1] = xi
    for m in range(2, max_degree + 1):
        vals[m] = (xi * vals[m - 1] - math.sqrt(m - 1) * vals[m - 2]) / math.sqrt(m)

    out = np.empty((n_derivatives + 1, max_degree + 1, u.size))
    out[0] = vals
    # d/du h_m = sqrt(m) h_{m-1} / sigma, applied repeatedly
    for q in range(1, n_derivatives + 1):
        out[q, :q] = 0.0
        for m in range(q, max_degree + 1):
            factor = math.sqrt(math.prod(range(m - q + 1, m + 1))) / sigma**q
            out[q, m] = factor * vals[m - q]
    return out


def hermite_multi_indices(dimension: int, max_total_degree: int) -> tuple[tuple[int, ...], ...]:
    """All multi-indices of the given dimension with total degree <= max_total_degree.

    Ordered by (total degree, lexicographic), so the zero index comes first.
    """
    out: list[tuple[int, ...]] = []

    def extend(prefix: tuple[int, ...], remaining: int, budget: int):
        if remaining == 0:
            out.append(prefix)
            return
        for m in range(budget + 1):
            extend(prefix + (m,), remaining - 1, budget - m)

    extend((), dimension, max_total_degree)
    return tuple(sorted(out, key=lambda a: (sum(a), a)))
