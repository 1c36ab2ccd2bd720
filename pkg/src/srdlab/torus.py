"""Laplace-Beltrami eigenbasis of the flat circle and trigonometric quadrature.

The circle is R/(2*pi*L*Z) with the length (volume) measure, so the total
volume is 2*pi*L.  Eigenfunctions come in cosine/sine pairs per integer
frequency, normalized to unit L2 norm against the volume measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

COSINE = "cosine"
SINE = "sine"


def circumference(L: float) -> float:
    """Total length 2*pi*L of the circle with size parameter L."""
    return 2.0 * math.pi * L


def wrap(x, L: float):
    """Reduce a point (or array of points) to the fundamental domain [0, 2*pi*L)."""
    return np.mod(x, circumference(L))


def eigenvalue(k: int, L: float) -> float:
    """Laplace-Beltrami eigenvalue -k^2/L^2 of the frequency-k pair.

    Parameters
    ----------
    k : int
        Frequency, must be a positive integer.
    L : float
        Circle size parameter (circumference 2*pi*L), must be positive.
    """
    if int(k) != k or k < 1:
        raise ValueError(f"frequency must be a positive integer, got {k!r}")
    if L <= 0:
        raise ValueError(f"size parameter must be positive, got {L!r}")
    return -float(k) ** 2 / float(L) ** 2


@dataclass(frozen=True)
class BasisFunction:
    """One member of the orthonormal eigenbasis: (pi*L)^(-1/2) cos(kx/L) or sin(kx/L)."""

    kind: str
    frequency: int
    circumference_param: float

    def __post_init__(self):
        if self.kind not in (COSINE, SINE):
            raise ValueError(f"kind must be {COSINE!r} or {SINE!r}, got {self.kind!r}")
        eigenvalue(self.frequency, self.circumference_param)  # validates k, L

    @property
    def eigenvalue(self) -> float:
        return eigenvalue(self.frequency, self.circumference_param)

    @property
    def normalization(self) -> float:
        return (math.pi * self.circumference_param) ** -0.5

    def value(self, x):
        k, L = self.frequency, self.circumference_param
        phase = np.multiply(wrap(x, L), k / L)
        trig = np.cos(phase) if self.kind == COSINE else np.sin(phase)
        return self.normalization * trig

    def derivative(self, x):
        k, L = self.frequency, self.circumference_param
        phase = np.multiply(wrap(x, L), k / L)
        if self.kind == COSINE:
            trig = -np.sin(phase)
        else:
            trig = np.cos(phase)
        return self.normalization * (k / L) * trig

    def second_derivative(self, x):
        return self.eigenvalue * self.value(x)

    def __call__(self, x):
        return self.value(x)


def eval_basis(f: BasisFunction, x):
    """Value and first derivative of a basis member at x (reduced mod 2*pi*L)."""
    return f.value(x), f.derivative(x)


@dataclass(frozen=True)
class QuadratureRule:
    """Uniform trapezoid rule on the circle, exact for trig polynomials up to max_frequency."""

    nodes: np.ndarray
    weights: np.ndarray
    max_frequency: int

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    def integrate(self, f) -> float:
        """Integrate a callable or an array of node values against the volume measure."""
        values = f(self.nodes) if callable(f) else np.asarray(f)
        return float(np.dot(self.weights, values))


def make_quadrature(max_frequency: int, L: float) -> QuadratureRule:
    """Uniform trapezoid rule exact for trig polynomials up to max_frequency.

    The node count is 2*max_frequency + 1 rounded up to a power of two; on the
    circle the uniform rule integrates exactly every frequency not a multiple
    of the node count, so all products needed downstream are exact.
    """
    if int(max_frequency) != max_frequency or max_frequency < 1:
        raise ValueError(f"max_frequency must be a positive integer, got {max_frequency!r}")
    if L <= 0:
        raise ValueError(f"size parameter must be positive, got {L!r}")
    n = 1 << (2 * int(max_frequency) + 1).bit_length()
    period = circumference(L)
    nodes = period * np.arange(n) / n
    weights = np.full(n, period / n)
    return QuadratureRule(nodes=nodes, weights=weights, max_frequency=int(max_frequency))
