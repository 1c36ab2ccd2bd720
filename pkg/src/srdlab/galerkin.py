"""Galerkin discretization of the lifted generator in a Hermite x Fourier basis.

Hermite factors are orthonormalized against the actual Gaussian marginals
(variance 1/(a_j|lambda_j|) per coordinate) and Fourier factors against the
normalized volume measure, so the basis is orthonormal in L2 of the invariant
law and adjoints are plain transposes.  The transport part is assembled from
ladder coupling rules: differentiating or multiplying by u_j shifts a Hermite
degree by one while multiplying by a basis function or its derivative shifts
the Fourier mode by the member frequency.  A direct quadrature assembly of the
same matrix acts as the independent oracle.

Fourier modes are encoded by signed integers: 0 is the constant, +m is
sqrt(2) cos(m x / L), and -m is sqrt(2) sin(m x / L).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from math import comb

import numpy as np
import scipy.linalg

from . import bounds as bounds_mod
from .hermite import gauss_hermite, hermite_multi_indices, hermite_table
from .model import SpectralModel, invariant_law
from .torus import COSINE

TARGET_DECAY = math.exp(-1.0)


class BracketExhaustedError(RuntimeError):
    """The relaxation-time search exhausted its doubling bracket."""


class TruncationWarning(UserWarning):
    """Relaxation time did not converge under the truncation refinement policy."""


# -- mode arithmetic ----------------------------------------------------------


def _cosref(m: int) -> tuple[int, float]:
    """sqrt(2) cos(m theta) in the signed-mode encoding."""
    if m == 0:
        return (0, math.sqrt(2.0))
    return (abs(m), 1.0)


def _sinref(m: int) -> tuple[int, float]:
    """sqrt(2) sin(m theta) in the signed-mode encoding."""
    if m == 0:
        return (0, 0.0)
    return (-abs(m), 1.0 if m > 0 else -1.0)


def mode_product(a: int, b: int) -> list[tuple[int, float]]:
    """Expansion of psi_a * psi_b in the orthonormal mode basis."""
    if a == 0:
        return [(b, 1.0)]
    if b == 0:
        return [(a, 1.0)]
    inv = 1.0 / math.sqrt(2.0)
    if a > 0 and b > 0:
        terms = [(_cosref(a + b), inv), (_cosref(a - b), inv)]
    elif a < 0 and b < 0:
        p, q = -a, -b
        terms = [(_cosref(p - q), inv), (_cosref(p + q), -inv)]
    else:
        c = a if a > 0 else b
        s = -b if b < 0 else -a
        terms = [(_sinref(s + c), inv), (_sinref(s - c), inv)]
    out: dict[int, float] = {}
    for (mode, ref_coeff), scale in terms:
        coeff = ref_coeff * scale
        if coeff != 0.0:
            out[mode] = out.get(mode, 0.0) + coeff
    return [(mode, coeff) for mode, coeff in out.items() if coeff != 0.0]


def mode_derivative(m: int, L: float) -> tuple[int, float]:
    """d/dx of psi_m; returns (mode, coefficient)."""
    if m == 0:
        return (0, 0.0)
    if m > 0:
        return (-m, -m / L)
    f = -m
    return (f, f / L)


def mode_values(m: int, x: np.ndarray, L: float) -> np.ndarray:
    if m == 0:
        return np.ones_like(x)
    if m > 0:
        return math.sqrt(2.0) * np.cos(m * x / L)
    return math.sqrt(2.0) * np.sin(-m * x / L)


# -- truncation and operator --------------------------------------------------


@dataclass(frozen=True)
class Truncation:
    """Isotropic total Hermite degree D and symmetric Fourier window J."""

    max_hermite_degree: int
    max_fourier_frequency: int

    def __post_init__(self):
        if self.max_hermite_degree < 1:
            raise ValueError("max_hermite_degree must be at least 1")
        if self.max_fourier_frequency < 1:
            raise ValueError("max_fourier_frequency must be at least 1")

    def basis_size(self, d: int) -> int:
        return comb(self.max_hermite_degree + d, d) * (2 * self.max_fourier_frequency + 1)

    def refined(self, step_degree: int = 2, step_frequency: int = 2) -> "Truncation":
        return Truncation(
            self.max_hermite_degree + step_degree,
            self.max_fourier_frequency + step_frequency,
        )


def _fourier_modes(J: int) -> tuple[int, ...]:
    modes = [0]
    for m in range(1, J + 1):
        modes.extend([m, -m])
    return tuple(modes)


@dataclass(frozen=True, eq=False)
class GalerkinOperator:
    """Matrix of the lifted generator on the truncated orthonormal basis."""

    model: SpectralModel
    truncation: Truncation
    sigma: float
    a0: np.ndarray
    delta_diag: np.ndarray
    alphas: tuple[tuple[int, ...], ...]
    modes: tuple[int, ...]

    def __post_init__(self):
        self.a0.setflags(write=False)
        self.delta_diag.setflags(write=False)

    @property
    def size(self) -> int:
        return self.a0.shape[0]

    @property
    def a_sigma(self) -> np.ndarray:
        return self.a0 + self.sigma**2 * np.diag(self.delta_diag)

    def index(self, alpha: tuple[int, ...], mode: int) -> int:
        return self._index_map[(alpha, mode)]

    @property
    def _index_map(self) -> dict:
        cached = getattr(self, "_index_cache", None)
        if cached is None:
            n_modes = len(self.modes)
            mode_pos = {m: i for i, m in enumerate(self.modes)}
            cached = {
                (alpha, m): a_idx * n_modes + mode_pos[m]
                for a_idx, alpha in enumerate(self.alphas)
                for m in self.modes
            }
            object.__setattr__(self, "_index_cache", cached)
        return cached

    def labels(self) -> list[tuple[tuple[int, ...], int]]:
        return [(alpha, m) for alpha in self.alphas for m in self.modes]

    def pure_u_columns(self, max_degree: int) -> tuple[list[int], list[tuple[int, ...]]]:
        """Basis indices of x-independent Hermite functions up to a degree."""
        cols, alphas = [], []
        for alpha in self.alphas:
            if sum(alpha) <= max_degree:
                cols.append(self.index(alpha, 0))
                alphas.append(alpha)
        return cols, alphas


def build_operator(model: SpectralModel, truncation: Truncation, sigma: float) -> GalerkinOperator:
    """Assemble the transport matrix by ladder coupling rules plus the diffusion diagonal."""
    if truncation.max_fourier_frequency < model.max_frequency:
        raise ValueError(
            f"Fourier window J={truncation.max_fourier_frequency} below the model's "
            f"maximum frequency {model.max_frequency}: the transport matrix would be wrong"
        )
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    L = model.circumference_param
    d = model.d
    D = truncation.max_hermite_degree
    J = truncation.max_fourier_frequency
    alphas = hermite_multi_indices(d, D)
    modes = _fourier_modes(J)
    n_modes = len(modes)
    mode_pos = {m: i for i, m in enumerate(modes)}
    alpha_pos = {alpha: i for i, alpha in enumerate(alphas)}
    size = len(alphas) * n_modes

    stiffness = model.stiffness
    sqrt_stiffness = np.sqrt(stiffness)
    inv_sqrt_nu = model.total_volume**-0.5
    member_modes = [
        b.frequency if b.kind == COSINE else -b.frequency for b in model.basis
    ]
    # shared per-member constants keep the two coupling directions exactly
    # antisymmetric at the float level
    raise_factor = inv_sqrt_nu * sqrt_stiffness
    lower_factor = model.coefficients / sqrt_stiffness * inv_sqrt_nu

    a0 = np.zeros((size, size))
    delta_diag = np.empty(size)
    for a_idx, alpha in enumerate(alphas):
        base_row = a_idx * n_modes
        for m_idx, mode in enumerate(modes):
            delta_diag[base_row + m_idx] = -0.5 * (abs(mode) / L) ** 2

    for a_idx, alpha in enumerate(alphas):
        degree = sum(alpha)
        for m_idx, mode in enumerate(modes):
            col = a_idx * n_modes + m_idx
            dj_mode, dj_coeff = mode_derivative(mode, L)
            for p in range(d):
                mp = member_modes[p]
                # e_p d/du_p: lowers the Hermite degree, shifts the mode by k_p
                if alpha[p] >= 1:
                    na = list(alpha)
                    na[p] -= 1
                    na_idx = alpha_pos[tuple(na)]
                    factor = raise_factor[p] * math.sqrt(alpha[p])
                    for m2, c2 in mode_product(mp, mode):
                        if abs(m2) <= J:
                            a0[na_idx * n_modes + mode_pos[m2], col] += factor * c2
                # -a_p u_p e_p' d/dx: raises/lowers the degree, couples mode derivatives
                if dj_coeff != 0.0:
                    dp_mode, dp_coeff = mode_derivative(mp, L)
                    base = -lower_factor[p] * dp_coeff * dj_coeff
                    targets = [(alpha[p] + 1, math.sqrt(alpha[p] + 1))]
                    if alpha[p] >= 1:
                        targets.append((alpha[p] - 1, math.sqrt(alpha[p])))
                    for new_deg_p, hermite_coeff in targets:
                        if degree - alpha[p] + new_deg_p > D:
                            continue
                        na = list(alpha)
                        na[p] = new_deg_p
                        na_idx = alpha_pos[tuple(na)]
                        for m2, c2 in mode_product(dp_mode, dj_mode):
                            if abs(m2) <= J:
                                a0[na_idx * n_modes + mode_pos[m2], col] += base * hermite_coeff * c2
    return GalerkinOperator(
        model=model,
        truncation=truncation,
        sigma=float(sigma),
        a0=a0,
        delta_diag=delta_diag,
        alphas=alphas,
        modes=modes,
    )


# -- quadrature oracle --------------------------------------------------------


def _tensor_hermite_grid(model: SpectralModel, max_degree: int, n_nodes: int | None = None):
    """Tensor Gauss-Hermite grid adapted to the invariant Gaussian marginals."""
    law = invariant_law(model)
    sigmas = np.sqrt(law.gaussian_variances)
    n = n_nodes if n_nodes is not None else max_degree + 3
    nodes_1d, weights_1d = zip(*(gauss_hermite(n, s) for s in sigmas))
    mesh = np.meshgrid(*nodes_1d, indexing="ij")
    u_grid = np.stack([g.ravel() for g in mesh], axis=-1)
    w = np.ones(u_grid.shape[0])
    for wm in np.meshgrid(*weights_1d, indexing="ij"):
        w *= wm.ravel()
    tables = [
        hermite_table(max_degree, u_grid[:, j], sigmas[j], n_derivatives=2)
        for j in range(model.d)
    ]
    return u_grid, w, tables


def operator_by_quadrature(model: SpectralModel, truncation: Truncation, sigma: float) -> np.ndarray:
    """Matrix entries <B_p, L B_q> by tensor quadrature; the assembly oracle."""
    from .torus import make_quadrature

    L = model.circumference_param
    D = truncation.max_hermite_degree
    J = truncation.max_fourier_frequency
    alphas = hermite_multi_indices(model.d, D)
    modes = _fourier_modes(J)
    u_grid, w_u, tables = _tensor_hermite_grid(model, D, n_nodes=D + 2)
    rule = make_quadrature(2 * J + model.max_frequency, L)
    x_nodes = rule.nodes
    w_x = rule.weights / model.total_volume

    e_vals = model.basis_values(x_nodes)
    e_derivs = model.basis_derivatives(x_nodes)
    trig = {m: mode_values(m, x_nodes, L) for m in modes}
    trig_d = {}
    trig_dd = {}
    for m in modes:
        dm, dc = mode_derivative(m, L)
        trig_d[m] = dc * mode_values(dm, x_nodes, L)
        trig_dd[m] = -((abs(m) / L) ** 2) * trig[m]

    n_alphas = len(alphas)
    P_u = u_grid.shape[0]
    herm_vals = np.empty((n_alphas, P_u))
    herm_grads = np.empty((n_alphas, model.d, P_u))
    for i, alpha in enumerate(alphas):
        parts = [tables[j][0, alpha[j]] for j in range(model.d)]
        herm_vals[i] = np.prod(parts, axis=0)
        for p in range(model.d):
            gparts = [tables[j][1 if j == p else 0, alpha[j]] for j in range(model.d)]
            herm_grads[i, p] = np.prod(gparts, axis=0)

    drift_u = -np.einsum("j,qj,jx->qx", model.coefficients, u_grid, e_derivs)

    size = n_alphas * len(modes)
    basis = np.empty((size, P_u * x_nodes.size))
    image = np.empty_like(basis)
    row = 0
    for i in range(n_alphas):
        for m in modes:
            value = np.outer(herm_vals[i], trig[m])
            lf = np.zeros_like(value)
            for p in range(model.d):
                lf += np.outer(herm_grads[i, p], e_vals[p] * trig[m])
            lf += drift_u * np.outer(herm_vals[i], trig_d[m])
            lf += 0.5 * sigma**2 * np.outer(herm_vals[i], trig_dd[m])
            basis[row] = value.ravel()
            image[row] = lf.ravel()
            row += 1
    weights = np.outer(w_u, w_x).ravel()
    return (basis * weights) @ image.T


# -- structural verifications -------------------------------------------------


@dataclass(frozen=True)
class LiftConditionReport:
    """Residuals of the two defining lift identities on pure-u test functions."""

    max_orthogonality_residual: float
    max_dirichlet_residual: float
    n_functions: int
    max_degree: int
    sigma: float


def verify_lift_conditions(
    model: SpectralModel,
    truncation: Truncation,
    sigma: float = 0.0,
    max_degree: int | None = None,
) -> LiftConditionReport:
    """Check both lift identities at matrix level against Gauss-Hermite quadrature.

    For pure-u Hermite functions g, h: (a) the generator image of g is
    orthogonal to every h; (b) half the pairing of the two images equals the
    collapsed Dirichlet form (1/(2 nu)) <grad g, grad h>.
    """
    D = truncation.max_hermite_degree
    cap = max_degree if max_degree is not None else D - 1
    if cap > D - 1:
        raise ValueError("test functions must leave one Hermite degree of headroom")
    op = build_operator(model, truncation, sigma)
    cols, alphas = op.pure_u_columns(cap)
    image = op.a_sigma[:, cols]
    ortho = np.abs(image[np.ix_(cols, range(len(cols)))])
    left = 0.5 * image.T @ image

    u_grid, w_u, tables = _tensor_hermite_grid(model, cap)
    n = len(alphas)
    grads = np.empty((n, model.d, u_grid.shape[0]))
    for i, alpha in enumerate(alphas):
        for p in range(model.d):
            parts = [tables[j][1 if j == p else 0, alpha[j]] for j in range(model.d)]
            grads[i, p] = np.prod(parts, axis=0)
    right = np.einsum("ipq,jpq,q->ij", grads, grads, w_u) / (2.0 * model.total_volume)
    return LiftConditionReport(
        max_orthogonality_residual=float(np.max(ortho)),
        max_dirichlet_residual=float(np.max(np.abs(left - right))),
        n_functions=n,
        max_degree=cap,
        sigma=sigma,
    )


@dataclass(frozen=True)
class ResidualReport:
    max_residual: float
    n_cases: int


@dataclass(frozen=True)
class InequalityReport:
    min_slack: float
    n_cases: int
    n_violations: int


def _random_polynomials(model, max_degree, n_random, seed, include_canonical=True):
    """Coefficient vectors over the Hermite multi-indices up to max_degree."""
    alphas = hermite_multi_indices(model.d, max_degree)
    rng = np.random.default_rng(seed)
    polys = []
    if include_canonical:
        for i in range(min(len(alphas), 6)):
            c = np.zeros(len(alphas))
            c[i] = 1.0
            polys.append(c)
    for _ in range(n_random):
        c = rng.standard_normal(len(alphas))
        polys.append(c / np.linalg.norm(c))
    return alphas, polys


def _poly_tables(model, alphas, u_grid, tables):
    """Values, gradients and Hessians of every multi-index on the grid."""
    n = len(alphas)
    d = model.d
    P = u_grid.shape[0]
    vals = np.empty((n, P))
    grads = np.empty((n, d, P))
    hess = np.empty((n, d, d, P))
    for i, alpha in enumerate(alphas):
        base = [tables[j][0, alpha[j]] for j in range(d)]
        vals[i] = np.prod(base, axis=0)
        for p in range(d):
            parts = [tables[j][1 if j == p else 0, alpha[j]] for j in range(d)]
            grads[i, p] = np.prod(parts, axis=0)
        for p in range(d):
            for q in range(p, d):
                if p == q:
                    parts = [tables[j][2 if j == p else 0, alpha[j]] for j in range(d)]
                else:
                    parts = [
                        tables[j][1 if j in (p, q) else 0, alpha[j]] for j in range(d)
                    ]
                hess[i, p, q] = np.prod(parts, axis=0)
                hess[i, q, p] = hess[i, p, q]
    return vals, grads, hess


def verify_bochner(
    model: SpectralModel, max_degree: int = 4, n_random: int = 100, seed: int = 0
) -> ResidualReport:
    """Gaussian integration-by-parts identity on random polynomials.

    For each test polynomial g the integral of (grad* grad g)^2 must equal the
    integral of |Hess g|_F^2 plus sum_j a_j|lambda_j| (d_j g)^2, everything by
    Gauss-Hermite quadrature exact at the polynomial degree.
    """
    alphas, polys = _random_polynomials(model, max_degree, n_random, seed)
    u_grid, w, tables = _tensor_hermite_grid(model, max_degree)
    vals, grads, hess = _poly_tables(model, alphas, u_grid, tables)
    stiffness = model.stiffness
    grad_phi = stiffness[None, :] * u_grid  # (P, d)
    max_residual = 0.0
    for c in polys:
        g_grad = np.einsum("i,ipq->pq", c, grads)
        g_hess = np.einsum("i,ipqr->pqr", c, hess)
        laplacian = np.trace(g_hess, axis1=0, axis2=1)
        dirichlet_op = -laplacian + np.einsum("qp,pq->q", grad_phi, g_grad)
        lhs = float(np.dot(w, dirichlet_op**2))
        frob = np.einsum("pqr,pqr->r", g_hess, g_hess)
        weighted_grad = np.einsum("p,pq->q", stiffness, g_grad**2)
        rhs = float(np.dot(w, frob + weighted_grad))
        scale = max(1.0, abs(lhs), abs(rhs))
        max_residual = max(max_residual, abs(lhs - rhs) / scale)
    return ResidualReport(max_residual=max_residual, n_cases=len(polys))


def verify_drift_moment_inequality(
    model: SpectralModel, max_degree: int = 4, n_random: int = 100, seed: int = 0
) -> InequalityReport:
    """Nonnegative slack of the drift-moment inequality on random polynomials.

    Checks int |grad Phi|^2 |grad g|^2 <= 2 (sum_j a_j|lambda_j|) int |grad g|^2
    + 4 int |Hess g|_F^2 with the sum over the expanded members (that sum is
    the actual Laplacian of Phi on the doubled environment space).
    """
    alphas, polys = _random_polynomials(model, max_degree, n_random, seed)
    u_grid, w, tables = _tensor_hermite_grid(model, max_degree)
    vals, grads, hess = _poly_tables(model, alphas, u_grid, tables)
    stiffness = model.stiffness
    grad_phi_sq = np.einsum("p,qp->q", stiffness**2, u_grid**2)
    sum_stiffness = float(np.sum(stiffness))
    min_slack = math.inf
    n_violations = 0
    for c in polys:
        g_grad = np.einsum("i,ipq->pq", c, grads)
        g_hess = np.einsum("i,ipqr->pqr", c, hess)
        grad_sq = np.einsum("pq,pq->q", g_grad, g_grad)
        lhs = float(np.dot(w, grad_phi_sq * grad_sq))
        frob = np.einsum("pqr,pqr->r", g_hess, g_hess)
        rhs = float(np.dot(w, 2.0 * sum_stiffness * grad_sq + 4.0 * frob))
        slack = rhs - lhs
        min_slack = min(min_slack, slack)
        if slack < -1e-10 * max(1.0, abs(rhs)):
            n_violations += 1
    return InequalityReport(min_slack=min_slack, n_cases=len(polys), n_violations=n_violations)


@dataclass(frozen=True)
class LstarReport:
    """Agreement of the matrix double application with its displayed closed form."""

    max_residual: float
    max_norm_ratio: float
    c1_per_member: float
    c1_per_frequency: float
    n_cases: int


def verify_lstar_l(
    model: SpectralModel,
    truncation: Truncation,
    max_degree: int | None = None,
    n_random: int = 20,
    seed: int = 0,
) -> LstarReport:
    """Match A0^T A0 on pure-u polynomials against the displayed closed form.

    The closed form is -e(x)^T Hess(g) e(x) + grad(Phi)^T Lambda^{-1}
    <grad e, grad e^T> grad(g), projected onto the basis by quadrature.  Also
    checks the norm bound against C1 from the bound formulas (the per-member
    convention is the one the inequality is proved with).
    """
    from .tensors import compute_chi
    from .torus import make_quadrature

    D = truncation.max_hermite_degree
    J = truncation.max_fourier_frequency
    cap = max_degree if max_degree is not None else D - 2
    if cap > D - 2:
        raise ValueError("test polynomials need two degrees of Hermite headroom")
    if J < 2 * model.max_frequency:
        raise ValueError("need J >= 2 * max frequency so the double image is represented")
    op = build_operator(model, truncation, 0.0)
    cols, alphas_g = op.pure_u_columns(cap)

    # grids for projecting the closed form
    u_grid, w_u, tables = _tensor_hermite_grid(model, D)
    rule = make_quadrature(2 * J + model.max_frequency, model.circumference_param)
    x_nodes, w_x = rule.nodes, rule.weights / model.total_volume
    e_vals = model.basis_values(x_nodes)
    e_derivs = model.basis_derivatives(x_nodes)
    lam_inv = 1.0 / np.abs(model.eigenvalues)

    alphas_all = op.alphas
    vals_all, grads_all, hess_all = _poly_tables(model, alphas_all, u_grid, tables)
    alpha_index = {alpha: i for i, alpha in enumerate(alphas_all)}
    sel = [alpha_index[a] for a in alphas_g]

    trig = {m: mode_values(m, x_nodes, model.circumference_param) for m in op.modes}
    theta = model.stiffness / (2.0 * model.total_volume)

    tensors = compute_chi(model)
    c1_sq = bounds_mod.c1_squared(model, tensors)
    c1_member = math.sqrt(c1_sq[bounds_mod.PER_MEMBER])
    c1_freq = math.sqrt(c1_sq[bounds_mod.PER_FREQUENCY])

    _, polys = _random_polynomials(model, cap, n_random, seed)
    alphas_cap = hermite_multi_indices(model.d, cap)
    max_residual = 0.0
    max_ratio = 0.0
    grad_phi = model.stiffness[None, :] * u_grid
    for c in polys:
        v = np.zeros(op.size)
        for coeff, alpha in zip(c, alphas_cap):
            v[op.index(alpha, 0)] = coeff
        w_matrix = -op.a0 @ (op.a0 @ v)

        g_grad = np.einsum("i,ipq->pq", c[: len(alphas_cap)], grads_all[sel])
        g_hess = np.einsum("i,ipqr->pqr", c[: len(alphas_cap)], hess_all[sel])
        # -e^T Hess g e: (P_u, P_x)
        hess_term = -np.einsum("pqr,px,qx->rx", g_hess, e_vals, e_vals)
        # grad Phi^T Lambda^{-1} <grad e, grad e^T> grad g
        drift_term = np.einsum(
            "up,p,px,qx,qu->ux",
            grad_phi,
            lam_inv,
            e_derivs,
            e_derivs,
            g_grad,
            optimize=True,
        )
        closed = hess_term + drift_term
        # project onto every basis element
        w_closed = np.zeros(op.size)
        for a_idx, alpha in enumerate(alphas_all):
            hu = vals_all[a_idx] * w_u
            for m in op.modes:
                w_closed[op.index(alpha, m)] = hu @ closed @ (trig[m] * w_x)
        residual = float(np.max(np.abs(w_matrix - w_closed)))
        max_residual = max(max_residual, residual)

        norm_image = float(np.linalg.norm(w_matrix))
        lg_coeffs = np.array(
            [np.dot(np.array(alpha, dtype=float), theta) for alpha in alphas_cap]
        )
        norm_lg = float(np.linalg.norm(lg_coeffs * c[: len(alphas_cap)]))
        if norm_lg > 0:
            max_ratio = max(max_ratio, norm_image / norm_lg)
    return LstarReport(
        max_residual=max_residual,
        max_norm_ratio=max_ratio,
        c1_per_member=c1_member,
        c1_per_frequency=c1_freq,
        n_cases=len(polys),
    )


# -- collapse and spectra -----------------------------------------------------


def collapse_matrix(op: GalerkinOperator, max_degree: int | None = None):
    """Reconstruct the collapsed generator matrix -1/2 (A0 S)^T (A0 S).

    Restricted to x-averaged Hermite functions the lifted transport squares to
    twice the collapsed generator; the result is diagonal with entries
    -sum_j alpha_j theta_j up to truncation error.
    """
    cap = max_degree if max_degree is not None else op.truncation.max_hermite_degree - 1
    cols, alphas = op.pure_u_columns(cap)
    image = op.a0[:, cols]
    return -0.5 * image.T @ image, alphas


def collapse_degree_one_eigenvalues(op: GalerkinOperator) -> np.ndarray:
    """Eigenvalues of the degree-one collapse block, sorted ascending."""
    matrix, alphas = collapse_matrix(op, max_degree=1)
    block = matrix[1:, 1:]  # drop the constant
    return np.sort(np.linalg.eigvalsh(block))


def spectral_abscissa(op: GalerkinOperator) -> float:
    """Largest real part of the mean-zero spectrum; diagnostic only."""
    A = _mean_zero_block(op)
    return float(np.max(scipy.linalg.eigvals(A).real))


def _mean_zero_block(op: GalerkinOperator) -> np.ndarray:
    A = op.a_sigma
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(A[0, :])) > 1e-10 * scale or np.max(np.abs(A[:, 0])) > 1e-10 * scale:
        raise ValueError("constant basis row/column is not numerically zero")
    return A[1:, 1:]


# -- relaxation time ----------------------------------------------------------


class _DenseNorm:
    """Semigroup norm evaluations from one eigendecomposition."""

    def __init__(self, A: np.ndarray):
        self.n = A.shape[0]
        w, V = scipy.linalg.eig(A)
        Vinv = np.linalg.inv(V)
        residual = np.linalg.norm((V * w) @ Vinv - A) / max(np.linalg.norm(A), 1e-300)
        self.usable = residual < 1e-8
        self.w, self.V, self.Vinv = w, V, Vinv
        self.A = A
        self.evaluations = 0

    def __call__(self, t: float) -> float:
        self.evaluations += 1
        if self.usable:
            M = np.real((self.V * np.exp(self.w * t)) @ self.Vinv)
        else:
            M = scipy.linalg.expm(self.A * t)
        return float(scipy.linalg.svdvals(M)[0])


class _KrylovNorm:
    """Semigroup norm by power iteration on the exponential action."""

    def __init__(self, A: np.ndarray, max_iterations: int = 200, tol: float = 1e-9, seed: int = 0):
        from scipy.sparse import csr_matrix

        self.A = csr_matrix(A)
        self.At = csr_matrix(A.T)
        self.n = A.shape[0]
        self.max_iterations = max_iterations
        self.tol = tol
        self.rng = np.random.default_rng(seed)
        self.evaluations = 0

    def __call__(self, t: float) -> float:
        from scipy.sparse.linalg import expm_multiply

        self.evaluations += 1
        v = self.rng.standard_normal(self.n)
        v /= np.linalg.norm(v)
        estimate = 0.0
        for _ in range(self.max_iterations):
            w = expm_multiply(self.A * t, v)
            y = expm_multiply(self.At * t, w)
            norm_y = np.linalg.norm(y)
            new_estimate = math.sqrt(np.dot(v, y)) if np.dot(v, y) > 0 else 0.0
            v = y / norm_y
            if abs(new_estimate - estimate) <= self.tol * max(new_estimate, 1e-300):
                return new_estimate
            estimate = new_estimate
        return estimate


@dataclass(frozen=True)
class TrelResult:
    """Measured relaxation time with its bisection bracket."""

    t_rel: float
    bracket_low: float
    bracket_high: float
    norm_evaluations: int
    method: str


def measure_trel_matrix(
    A: np.ndarray,
    rtol: float = 5e-3,
    initial_guess: float | None = None,
    dense_cutoff: int = 3200,
    max_expansions: int = 60,
) -> TrelResult:
    """First time the semigroup norm of exp(tA) drops to 1/e, by bisection.

    The semigroup is a contraction (antisymmetric transport plus nonpositive
    diffusion), so the norm is nonincreasing and the crossing is unique.
    """
    if A.shape[0] == 0:
        raise ValueError("empty operator")
    normfun = _DenseNorm(A) if A.shape[0] <= dense_cutoff else _KrylovNorm(A)
    method = "dense-eig" if isinstance(normfun, _DenseNorm) and normfun.usable else (
        "dense-expm" if isinstance(normfun, _DenseNorm) else "krylov"
    )
    t = initial_guess if initial_guess and initial_guess > 0 else 1.0

    value = normfun(t)
    if value > TARGET_DECAY:
        low, high = t, None
        for _ in range(max_expansions):
            t *= 2.0
            value = normfun(t)
            if value <= TARGET_DECAY:
                high = t
                break
            low = t
        if high is None:
            raise BracketExhaustedError(
                f"norm still {value:.4f} > 1/e after {max_expansions} doublings (t={t:.3g}); "
                "the truncated semigroup may not mix (sigma too small?)"
            )
    else:
        high, low = t, None
        for _ in range(max_expansions):
            t *= 0.5
            value = normfun(t)
            if value > TARGET_DECAY:
                low = t
                break
            high = t
        if low is None:
            low = t  # relaxation faster than any resolvable time
    while high / low > 1.0 + rtol:
        mid = math.sqrt(low * high)
        if normfun(mid) > TARGET_DECAY:
            low = mid
        else:
            high = mid
    return TrelResult(
        t_rel=math.sqrt(low * high),
        bracket_low=low,
        bracket_high=high,
        norm_evaluations=normfun.evaluations,
        method=method,
    )


def measure_trel(
    op: GalerkinOperator,
    rtol: float = 5e-3,
    initial_guess: float | None = None,
    dense_cutoff: int = 3200,
) -> TrelResult:
    """Relaxation time of the truncated semigroup on the mean-zero subspace."""
    if initial_guess is None:
        guess = bounds_mod.lower_bound_trel(op.model)
        initial_guess = guess if math.isfinite(guess) else 1.0
    return measure_trel_matrix(
        _mean_zero_block(op), rtol=rtol, initial_guess=initial_guess, dense_cutoff=dense_cutoff
    )


@dataclass(frozen=True)
class ConvergedTrel:
    """Relaxation time at a truncation and at its refinement."""

    t_rel: float
    t_rel_coarse: float
    relative_change: float
    converged: bool
    coarse: Truncation
    fine: Truncation
    abscissa: float


def relaxation_time_converged(
    model: SpectralModel,
    sigma: float,
    truncation: Truncation,
    rel_change: float = 0.02,
    rtol: float = 5e-3,
    dense_cutoff: int = 3200,
    max_refinements: int = 1,
) -> ConvergedTrel:
    """Measure t_rel at (D, J) and (D+2, J+2); converged when they agree to 2%.

    With max_refinements > 1 the refinement window slides upward (reusing the
    finer measurement as the new coarse one) until the agreement policy holds
    or the budget runs out; non-convergence is flagged, not raised.
    """
    coarse_trunc = truncation
    coarse = measure_trel(
        build_operator(model, coarse_trunc, sigma), rtol=rtol, dense_cutoff=dense_cutoff
    )
    for refinement in range(max(1, max_refinements)):
        fine_trunc = coarse_trunc.refined()
        op_fine = build_operator(model, fine_trunc, sigma)
        fine = measure_trel(
            op_fine, rtol=rtol, initial_guess=coarse.t_rel, dense_cutoff=dense_cutoff
        )
        change = abs(fine.t_rel - coarse.t_rel) / fine.t_rel
        converged = change < rel_change
        if converged or refinement == max(1, max_refinements) - 1:
            if not converged:
                warnings.warn(
                    f"t_rel changed by {change:.1%} between {coarse_trunc} and {fine_trunc}",
                    TruncationWarning,
                )
            return ConvergedTrel(
                t_rel=fine.t_rel,
                t_rel_coarse=coarse.t_rel,
                relative_change=change,
                converged=converged,
                coarse=coarse_trunc,
                fine=fine_trunc,
                abscissa=spectral_abscissa(op_fine),
            )
        coarse_trunc, coarse = fine_trunc, fine
    raise AssertionError("unreachable")


# -- export -------------------------------------------------------------------


def export_triplets(op: GalerkinOperator, fh) -> None:
    """Write the operator in a sparse triplet text format: row col value."""
    A = op.a_sigma
    fh.write(f"# srdlab galerkin operator size={op.size} sigma={op.sigma!r}\n")
    fh.write(
        f"# truncation D={op.truncation.max_hermite_degree} "
        f"J={op.truncation.max_fourier_frequency}\n"
    )
    rows, cols = np.nonzero(A)
    for r, c in zip(rows, cols):
        fh.write(f"{r} {c} {A[r, c]:.17e}\n")


def load_triplets(fh) -> np.ndarray:
    """Read a triplet export back into a dense matrix."""
    entries = []
    size = None
    for line in fh:
        if line.startswith("#"):
            if "size=" in line:
                size = int(line.split("size=")[1].split()[0])
            continue
        r, c, v = line.split()
        entries.append((int(r), int(c), float(v)))
    if size is None:
        size = 1 + max(max(r, c) for r, c, _ in entries)
    A = np.zeros((size, size))
    for r, c, v in entries:
        A[r, c] = v
    return A
