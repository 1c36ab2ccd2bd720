"""Closed-form relaxation-time bounds for the lifted dynamics on the circle.

Two sum conventions coexist: the general formulas sum a_k|lambda_k| over the
expanded basis members (each cosine/sine pair counted twice), while the worked
single-frequency arithmetic in the source material sums once per frequency.
Every report is tagged with its convention and serialization emits both.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .model import SpectralModel
from .tensors import ChiTensors

PER_FREQUENCY = "per-frequency"
PER_MEMBER = "per-basis-member"
CONVENTIONS = (PER_FREQUENCY, PER_MEMBER)


class DegenerateBoundWarning(UserWarning):
    """A bound formula was evaluated on a model with a vanishing mode."""


def ou_gap(model: SpectralModel) -> float:
    """Spectral gap m = min_j a_j|lambda_j| / (2 nu(M)) of the collapsed process."""
    min_stiffness = model.min_stiffness()
    if min_stiffness <= 0.0:
        warnings.warn("ou_gap is zero: some mode has a_j*|lambda_j| = 0", DegenerateBoundWarning)
        return 0.0
    return min_stiffness / (2.0 * model.total_volume)


def manifold_gap(L: float) -> float:
    """Spectral gap 1/L^2 of the negative Laplacian on the circle of size L."""
    if L <= 0:
        raise ValueError(f"size parameter must be positive, got {L!r}")
    return 1.0 / L**2


def lower_bound_trel(model: SpectralModel) -> float:
    """Lower bound sqrt(nu(M) / (4 min_j a_j|lambda_j|)) on the relaxation time.

    On the circle this equals sqrt(pi L^3 / (2 min_k a_k k^2)).
    """
    min_stiffness = model.min_stiffness()
    if min_stiffness <= 0.0:
        warnings.warn(
            "relaxation-time lower bound is infinite: all modes degenerate",
            DegenerateBoundWarning,
        )
        return math.inf
    return math.sqrt(model.total_volume / (4.0 * min_stiffness))


def c2_squared(model: SpectralModel) -> float:
    """Constant 4 nu(M) / min_k a_k (identical in both conventions)."""
    min_a = model.min_coefficient()
    if min_a <= 0.0:
        warnings.warn("c2_squared is infinite: some coefficient vanishes", DegenerateBoundWarning)
        return math.inf
    return 4.0 * model.total_volume / min_a


def c1_squared(model: SpectralModel, tensors: ChiTensors | tuple[float, float]) -> dict[str, float]:
    """Constant 8 nu(M) (chi + 4 chi~ + 2 chi~ sum(a|lam|)/min(a|lam|)) in both conventions.

    tensors may be a ChiTensors record or an explicit (chi, chi_tilde) pair,
    so printed aggregate values can be substituted for the quadrature ones.
    """
    if isinstance(tensors, ChiTensors):
        chi, chi_tilde = tensors.chi, tensors.chi_tilde
    else:
        chi, chi_tilde = tensors
    min_stiffness = model.min_stiffness()
    if min_stiffness <= 0.0:
        warnings.warn("c1_squared is infinite: some mode degenerate", DegenerateBoundWarning)
        return {convention: math.inf for convention in CONVENTIONS}
    nu = model.total_volume
    out = {}
    for convention in CONVENTIONS:
        ratio = model.sum_stiffness(convention) / min_stiffness
        out[convention] = 8.0 * nu * (chi + 4.0 * chi_tilde + 2.0 * chi_tilde * ratio)
    return out


@dataclass(frozen=True)
class BoundsReport:
    """Every closed-form bound for one model under one sum convention."""

    convention: str
    m: float
    eta: float
    c1_sq: float
    c2_sq: float
    t_rel_lower: float
    chi: float
    chi_tilde: float
    total_volume: float
    min_stiffness: float
    sum_stiffness: float
    min_coefficient: float

    def default_horizon(self) -> float:
        """Averaging horizon T = m^{-1/2}, the natural scale of the rate bound."""
        return self.m**-0.5

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["sigma_star"] = sigma_star(self)
        payload["rate_nu_at_sigma_star"] = rate_nu(self, sigma_star(self))
        payload["minimized_upper_proxy"] = minimized_upper_proxy(self)
        return payload


def compute_bounds(
    model: SpectralModel,
    tensors: ChiTensors | tuple[float, float],
    convention: str = PER_FREQUENCY,
) -> BoundsReport:
    """Assemble the bound constants for one convention."""
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    if isinstance(tensors, ChiTensors):
        chi, chi_tilde = tensors.chi, tensors.chi_tilde
    else:
        chi, chi_tilde = tensors
    return BoundsReport(
        convention=convention,
        m=ou_gap(model),
        eta=manifold_gap(model.circumference_param),
        c1_sq=c1_squared(model, (chi, chi_tilde))[convention],
        c2_sq=c2_squared(model),
        t_rel_lower=lower_bound_trel(model),
        chi=chi,
        chi_tilde=chi_tilde,
        total_volume=model.total_volume,
        min_stiffness=model.min_stiffness(),
        sum_stiffness=model.sum_stiffness(convention),
        min_coefficient=model.min_coefficient(),
    )


def compute_bounds_both(
    model: SpectralModel, tensors: ChiTensors | tuple[float, float]
) -> dict[str, BoundsReport]:
    return {convention: compute_bounds(model, tensors, convention) for convention in CONVENTIONS}


def rate_nu(
    report: BoundsReport, sigma: float, T: float | None = None, c_universal: float = 1.0
) -> float:
    """Convergence rate C sigma^2 / (sigma^4 C2^2 + C1^2 + (1/eta)(1 + 1/(m T^2))).

    T defaults to m^{-1/2} so the horizon term contributes exactly 1.
    """
    if sigma <= 0 or c_universal <= 0:
        raise ValueError("sigma and c_universal must be positive")
    if T is None:
        T = report.default_horizon()
    if T <= 0:
        raise ValueError("horizon T must be positive")
    denom = sigma**4 * report.c2_sq + report.c1_sq + (1.0 / report.eta) * (
        1.0 + 1.0 / (report.m * T**2)
    )
    return c_universal * sigma**2 / denom


def upper_bound_proxy(report: BoundsReport, sigma: float) -> float:
    """Relaxation-time shape sigma^2 C2^2 + sigma^{-2} (C1^2 + 1/eta), sans universal constant."""
    return sigma**2 * report.c2_sq + (report.c1_sq + 1.0 / report.eta) / sigma**2


def sigma_star(report: BoundsReport) -> float:
    """Diffusivity minimizing the upper-bound shape: sigma*^4 = (C1^2 + 1/eta)/C2^2."""
    if report.c2_sq <= 0 or not math.isfinite(report.c2_sq):
        raise ValueError("sigma_star needs a finite positive C2^2")
    return ((report.c1_sq + 1.0 / report.eta) / report.c2_sq) ** 0.25


def minimized_upper_proxy(report: BoundsReport) -> float:
    """Upper-bound shape at its minimizer, 2 sqrt(C2^2 (C1^2 + 1/eta))."""
    return 2.0 * math.sqrt(report.c2_sq * (report.c1_sq + 1.0 / report.eta))


def simplified_sigma_star_squared(a: float, L: float) -> float:
    """Minimizer sqrt(a/L + a L) of the simplified shape sigma^2 L/a + sigma^{-2}(1 + L^2).

    This is the asymptotic proportionality target for sigma_star; the full
    shape's minimizer approaches it once L^2 dominates the constant C1^2.
    """
    return math.sqrt(a / L + a * L)


def comparison_bound(model: SpectralModel, sigma: float, c_universal: float = 1.0) -> float:
    """Earlier occupation-measure upper bound on the relaxation time, as printed.

    Single-frequency models use the explicit (a, lambda) form; multi-frequency
    models use the variant with Lambda_0 = min a_k k^2/L^2 and
    Lambda_1 = sum a_k k^2/L^2.  Exhibits order L^4 as L grows and L^{-2} as L
    shrinks at fixed frequency content, with a minimizing diffusivity.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    L = model.circumference_param
    if model.n_frequencies == 1:
        a = model.frequency_coefficients[0]
        lam = model.frequencies[0] ** 2 / L**2
        root = 1.0 + math.sqrt(1.0 + a * lam) / L
        shape = sigma**2 * lam**2 + lam * root + root**2 / sigma**2
        return c_universal * L**2 * (1.0 + a * lam) ** 2 / (a * lam) ** 2 * shape
    n = model.n_frequencies
    lam_k = np.array(model.frequencies, dtype=float) ** 2 / L**2
    a_k = np.array(model.frequency_coefficients, dtype=float)
    lambda0 = float(np.min(a_k * lam_k))
    lambda1 = float(np.sum(a_k * lam_k))
    root = n + n**3 * math.sqrt(1.0 + lambda1) / L
    shape = sigma**2 * lambda1**2 + lambda1 * root + root**2 / sigma**2
    return c_universal * L**2 * (1.0 + lambda0) ** 2 / lambda0**2 * shape


def comparison_sigma_star(model: SpectralModel) -> float:
    """Diffusivity minimizing the comparison bound: sigma^4 = (coupling root)^2 / rate^2."""
    L = model.circumference_param
    if model.n_frequencies == 1:
        a = model.frequency_coefficients[0]
        lam = model.frequencies[0] ** 2 / L**2
        root = 1.0 + math.sqrt(1.0 + a * lam) / L
        return math.sqrt(root / lam)
    n = model.n_frequencies
    lam_k = np.array(model.frequencies, dtype=float) ** 2 / L**2
    a_k = np.array(model.frequency_coefficients, dtype=float)
    lambda1 = float(np.sum(a_k * lam_k))
    root = n + n**3 * math.sqrt(1.0 + lambda1) / L
    return math.sqrt(root / lambda1)


def bounds_payload(model: SpectralModel, tensors: ChiTensors | tuple[float, float]) -> dict:
    """JSON-ready dictionary with every bound field under both conventions."""
    reports = compute_bounds_both(model, tensors)
    return {
        "model": {
            "L": model.circumference_param,
            "frequencies": list(model.frequencies),
            "coefficients": list(model.frequency_coefficients),
            "total_volume": model.total_volume,
        },
        "conventions": {name: report.to_dict() for name, report in reports.items()},
        "primary_convention": PER_FREQUENCY,
    }
