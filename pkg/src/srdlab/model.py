"""Spectral interaction model on the flat circle and its generators.

A model is built from a size parameter L, a list of integer frequencies and one
nonnegative coefficient per frequency.  Internally every frequency expands into
a cosine/sine pair sharing that coefficient and the eigenvalue -k^2/L^2, so a
model with n frequencies carries d = 2n basis members.  Downstream formulas
that sum or minimize over modes exist in two conventions (per frequency vs per
expanded member); reductions for both live here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .torus import COSINE, SINE, BasisFunction, circumference, wrap


class DegenerateModeError(ValueError):
    """Raised when a formula needs a_j*|lambda_j| > 0 but some mode has none."""


@dataclass(frozen=True, eq=False)
class SpectralModel:
    """Interaction kernel V(x,y) = sum_j a_j e_j(x) e_j(y) on the circle of size L."""

    circumference_param: float
    frequencies: tuple[int, ...]
    frequency_coefficients: tuple[float, ...]
    basis: tuple[BasisFunction, ...]
    coefficients: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        self.coefficients.setflags(write=False)
        self.eigenvalues.setflags(write=False)
        freqs = np.array([b.frequency for b in self.basis], dtype=float)
        is_cos = np.array([b.kind == COSINE for b in self.basis])
        freqs.setflags(write=False)
        is_cos.setflags(write=False)
        object.__setattr__(self, "_freqs", freqs)
        object.__setattr__(self, "_cos_mask", is_cos)

    @property
    def d(self) -> int:
        return len(self.basis)

    @property
    def n_frequencies(self) -> int:
        return len(self.frequencies)

    @property
    def total_volume(self) -> float:
        """nu(M) = 2*pi*L."""
        return circumference(self.circumference_param)

    @property
    def stiffness(self) -> np.ndarray:
        """Per-member drift stiffness a_j*|lambda_j|."""
        return self.coefficients * np.abs(self.eigenvalues)

    @property
    def max_frequency(self) -> int:
        return max(self.frequencies)

    def basis_values(self, x) -> np.ndarray:
        """Values e_j(x) of every member; shape (d,) + shape(x)."""
        L = self.circumference_param
        phase = np.multiply.outer(self._freqs / L, wrap(x, L))
        norm = (math.pi * L) ** -0.5
        cos_mask = self._cos_mask.reshape((-1,) + (1,) * (phase.ndim - 1))
        return norm * np.where(cos_mask, np.cos(phase), np.sin(phase))

    def basis_derivatives(self, x) -> np.ndarray:
        """Derivatives e_j'(x) of every member; shape (d,) + shape(x)."""
        L = self.circumference_param
        phase = np.multiply.outer(self._freqs / L, wrap(x, L))
        norm = (math.pi * L) ** -0.5
        cos_mask = self._cos_mask.reshape((-1,) + (1,) * (phase.ndim - 1))
        scale = (self._freqs / L).reshape((-1,) + (1,) * (phase.ndim - 1))
        return norm * scale * np.where(cos_mask, -np.sin(phase), np.cos(phase))

    def kernel(self, x, y):
        """Interaction kernel V(x, y) = sum_j a_j e_j(x) e_j(y)."""
        ex = self.basis_values(x)
        ey = self.basis_values(y)
        return np.einsum("j,j...,j...->...", self.coefficients, ex, ey)

    # reductions in both sum conventions
    def min_stiffness(self) -> float:
        return float(np.min(self.stiffness))

    def sum_stiffness(self, convention: str = "per-basis-member") -> float:
        """Sum of a_j*|lambda_j| over members, or over frequencies (each pair once)."""
        if convention == "per-basis-member":
            return float(np.sum(self.stiffness))
        if convention == "per-frequency":
            return float(np.sum(self.stiffness)) / 2.0
        raise ValueError(f"unknown convention {convention!r}")

    def min_coefficient(self) -> float:
        return float(np.min(self.coefficients))


def torus_model(L: float, frequencies: Sequence[int], coefficients: Sequence[float]) -> SpectralModel:
    """Expand (L, k_1..k_n, a_1..a_n) into the d = 2n member spectral model."""
    if L <= 0:
        raise ValueError(f"size parameter must be positive, got {L!r}")
    frequencies = tuple(int(k) for k in frequencies)
    coefficients = tuple(float(a) for a in coefficients)
    if len(frequencies) == 0:
        raise ValueError("at least one frequency is required")
    if len(frequencies) != len(coefficients):
        raise ValueError(
            f"got {len(frequencies)} frequencies but {len(coefficients)} coefficients"
        )
    if len(set(frequencies)) != len(frequencies):
        raise ValueError(f"frequencies must be distinct, got {frequencies}")
    if any(a < 0 for a in coefficients):
        raise ValueError("coefficients must be nonnegative (repulsive interaction)")
    basis = []
    member_a = []
    for k, a in zip(frequencies, coefficients):
        basis.append(BasisFunction(kind=COSINE, frequency=k, circumference_param=L))
        basis.append(BasisFunction(kind=SINE, frequency=k, circumference_param=L))
        member_a.extend([a, a])
    eigenvalues = np.array([b.eigenvalue for b in basis])
    return SpectralModel(
        circumference_param=float(L),
        frequencies=frequencies,
        frequency_coefficients=coefficients,
        basis=tuple(basis),
        coefficients=np.array(member_a),
        eigenvalues=eigenvalues,
    )


@dataclass(frozen=True)
class SystemState:
    """A point (u, x) of the lifted dynamics; x is kept reduced mod 2*pi*L."""

    u: np.ndarray
    x: float

    def __post_init__(self):
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))
        self.u.setflags(write=False)


def make_state(model: SpectralModel, u, x) -> SystemState:
    u = np.asarray(u, dtype=float)
    if u.shape != (model.d,):
        raise ValueError(f"environment vector must have shape ({model.d},), got {u.shape}")
    return SystemState(u=u, x=float(wrap(x, model.circumference_param)))


def potential_phi(model: SpectralModel, u) -> float:
    """Quadratic environment potential (1/2) sum_j a_j |lambda_j| u_j^2."""
    u = np.asarray(u, dtype=float)
    if u.shape != (model.d,):
        raise ValueError(f"expected environment dimension {model.d}, got shape {u.shape}")
    return 0.5 * float(np.dot(model.stiffness, u**2))


def grad_potential(model: SpectralModel, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (model.d,):
        raise ValueError(f"expected environment dimension {model.d}, got shape {u.shape}")
    return model.stiffness * u


def drift(model: SpectralModel, state: SystemState) -> tuple[np.ndarray, float]:
    """Drift of the lifted system: du_j = e_j(x), dx = -sum_j a_j u_j e_j'(x)."""
    du = model.basis_values(state.x)
    dx = -float(np.dot(model.coefficients * state.u, model.basis_derivatives(state.x)))
    return du, dx


@dataclass(frozen=True)
class LiftedTestFunction:
    """Pointwise data of a test function f(u, x) for generator application."""

    value: Callable
    grad_u: Callable
    dx: Callable
    dxx: Callable


@dataclass(frozen=True)
class CollapsedTestFunction:
    """Pointwise data of a test function g(u) for the collapsed generator."""

    gradient: Callable
    hessian_diagonal: Callable
    value: Callable | None = None


def apply_lifted_generator(
    model: SpectralModel, f: LiftedTestFunction, sigma: float, state: SystemState
) -> float:
    """Apply the lifted generator at a state.

    Returns sum_j (e_j(x) d_{u_j}f - a_j u_j e_j'(x) d_x f) + (sigma^2/2) d_x^2 f.
    """
    e = model.basis_values(state.x)
    de = model.basis_derivatives(state.x)
    grad = np.asarray(f.grad_u(state.u, state.x), dtype=float)
    transport_u = float(np.dot(e, grad))
    transport_x = -float(np.dot(model.coefficients * state.u, de)) * float(f.dx(state.u, state.x))
    diffusion = 0.5 * sigma**2 * float(f.dxx(state.u, state.x))
    return transport_u + transport_x + diffusion


def apply_collapsed_generator(model: SpectralModel, g: CollapsedTestFunction, u) -> float:
    """Apply the collapsed generator -(1/(2 nu)) grad(Phi).grad(g) + (1/(2 nu)) Lap(g)."""
    u = np.asarray(u, dtype=float)
    grad = np.asarray(g.gradient(u), dtype=float)
    lap = float(np.sum(g.hessian_diagonal(u)))
    nu = model.total_volume
    return (-float(np.dot(grad_potential(model, u), grad)) + lap) / (2.0 * nu)


@dataclass(frozen=True)
class InvariantLaw:
    """Product invariant law: centered Gaussian in u times uniform in x."""

    gaussian_variances: np.ndarray
    uniform_mass: float
    circumference_param: float

    def __post_init__(self):
        self.gaussian_variances.setflags(write=False)

    def sample(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        """Draw (u, x) samples; u has shape (size, d), x has shape (size,)."""
        d = self.gaussian_variances.size
        u = rng.standard_normal((size, d)) * np.sqrt(self.gaussian_variances)
        x = rng.uniform(0.0, self.uniform_mass, size=size)
        return u, x


def invariant_law(model: SpectralModel) -> InvariantLaw:
    """Gaussian variances 1/(a_j |lambda_j|) and the uniform factor on the circle."""
    stiffness = model.stiffness
    if np.any(stiffness <= 0.0):
        bad = np.nonzero(stiffness <= 0.0)[0].tolist()
        raise DegenerateModeError(
            f"degenerate mode: a_j*|lambda_j| = 0 for members {bad}, Gaussian factor undefined"
        )
    return InvariantLaw(
        gaussian_variances=1.0 / stiffness,
        uniform_mass=model.total_volume,
        circumference_param=model.circumference_param,
    )
