"""Monte Carlo engine for the lifted dynamics and its collapsed process.

Trajectories draw their noise from independent child streams spawned off the
configured seed (one `numpy` SeedSequence child per trajectory, plus one for
initial conditions), so ensembles are reproducible and the stream of
trajectory i does not depend on how many trajectories run beside it.
Statistics accumulate in mergeable sums; the merge is commutative and
associative by construction.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats as scipy_stats

from .model import SpectralModel, SystemState, invariant_law, make_state
from .torus import circumference

EULER_MARUYAMA = "euler_maruyama"
STRANG_SPLITTING = "strang_splitting"
SCHEMES = (EULER_MARUYAMA, STRANG_SPLITTING)

TRAJECTORY_MAGIC = b"SRDTRJ01"


class StiffnessWarning(UserWarning):
    """The time step resolves the stiffest drift mode poorly."""


class InsufficientEffectiveSamples(RuntimeError):
    """Distribution diagnostics were requested with too few effective samples."""


class WindowExhaustedWarning(UserWarning):
    """The autocorrelation window never closed; the time estimate is a lower bound."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Time step, scheme, seed and diffusivity of the SDE integrator."""

    dt: float
    scheme: str = STRANG_SPLITTING
    seed: int = 0
    sigma: float = 1.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma!r}")


def check_stiffness(model: SpectralModel, config: IntegratorConfig) -> bool:
    """Warn when dt * max_j a_j|lambda_j| >= 0.1; returns whether the step is safe."""
    stiff = config.dt * float(np.max(model.stiffness))
    if stiff >= 0.1:
        warnings.warn(
            f"dt*max(a_j|lambda_j|) = {stiff:.3g} >= 0.1; decrease dt for this model",
            StiffnessWarning,
        )
        return False
    return True


def _drift_x(model: SpectralModel, u: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Particle drift -sum_j a_j u_j e_j'(x) for u of shape (m, d), x of shape (m,)."""
    derivs = model.basis_derivatives(x)
    return -np.einsum("j,mj,jm->m", model.coefficients, u, derivs)


def _step_arrays(model, u, x, dt, sigma, scheme, z):
    """One integrator step on ensemble arrays u (m, d), x (m,) with noise z (m,)."""
    period = circumference(model.circumference_param)
    noise = sigma * math.sqrt(dt) * z
    if scheme == EULER_MARUYAMA:
        e = model.basis_values(x)
        dx = _drift_x(model, u, x)
        u = u + e.T * dt
        x = np.mod(x + dx * dt + noise, period)
    else:
        u = u + model.basis_values(x).T * (0.5 * dt)
        x = np.mod(x + _drift_x(model, u, x) * dt + noise, period)
        u = u + model.basis_values(x).T * (0.5 * dt)
    return u, x


def step(model: SpectralModel, state: SystemState, config: IntegratorConfig, noise: float) -> SystemState:
    """Advance a single state by one step given a standard normal draw."""
    u = state.u[None, :].copy()
    x = np.array([state.x])
    u, x = _step_arrays(model, u, x, config.dt, config.sigma, config.scheme, np.array([noise]))
    return make_state(model, u[0], float(x[0]))


@dataclass(frozen=True)
class Trajectory:
    """A stored (possibly thinned) trajectory of the lifted system."""

    times: np.ndarray
    u: np.ndarray
    x: np.ndarray


def simulate_trajectory(
    model: SpectralModel,
    initial: SystemState,
    config: IntegratorConfig,
    n_steps: int,
    thin: int = 1,
) -> Trajectory:
    """Integrate one trajectory; deterministic in (seed, config, model).

    Stores the initial state and every thin-th step after it.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    check_stiffness(model, config)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed)))
    n_kept = n_steps // thin + 1
    u_out = np.empty((n_kept, model.d))
    x_out = np.empty(n_kept)
    times = np.empty(n_kept)
    u = initial.u[None, :].copy()
    x = np.array([initial.x], dtype=float)
    u_out[0], x_out[0], times[0] = u[0], x[0], 0.0
    kept = 1
    for step_index in range(1, n_steps + 1):
        z = rng.standard_normal(1)
        u, x = _step_arrays(model, u, x, config.dt, config.sigma, config.scheme, z)
        if step_index % thin == 0:
            u_out[kept], x_out[kept] = u[0], x[0]
            times[kept] = step_index * config.dt
            kept += 1
    return Trajectory(times=times[:kept], u=u_out[:kept], x=x_out[:kept])


# -- statistics ---------------------------------------------------------------


def autocovariance_sums(series: np.ndarray, max_lag: int) -> tuple[np.ndarray, np.ndarray]:
    """FFT-based sums of lagged products of a centered series, with pair counts."""
    y = np.asarray(series, dtype=float)
    y = y - y.mean()
    n = y.size
    max_lag = min(max_lag, n - 1)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(y, nfft)
    sums = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1]
    counts = n - np.arange(max_lag + 1)
    return sums, counts.astype(float)


def autocorrelation(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Empirical autocorrelation rho(0..max_lag) with per-lag pair normalization."""
    sums, counts = autocovariance_sums(series, max_lag)
    acov = sums / counts
    if acov[0] <= 0:
        return np.zeros_like(acov)
    return acov / acov[0]


def integrated_autocorrelation_time(rho_or_series: np.ndarray, c: float = 5.0, max_lag: int | None = None) -> float:
    """Integrated autocorrelation time with automatic (Sokal) windowing.

    Accepts either a raw series or a precomputed autocorrelation function
    starting at lag zero; picks the smallest window W with W >= c * tau(W).
    """
    arr = np.asarray(rho_or_series, dtype=float)
    if max_lag is not None or abs(arr[0] - 1.0) > 1e-12:
        arr = autocorrelation(arr, max_lag if max_lag is not None else min(arr.size - 1, 2000))
    taus = 1.0 + 2.0 * np.cumsum(arr[1:])
    for window in range(1, taus.size + 1):
        if window >= c * taus[window - 1]:
            return float(max(taus[window - 1], 1e-12))
    warnings.warn(
        f"autocorrelation window exhausted at lag {taus.size} (tau estimate "
        f"{taus[-1]:.1f}); record longer series or raise max_lag",
        WindowExhaustedWarning,
    )
    return float(max(taus[-1], 1e-12))


def effective_sample_size(series: np.ndarray, c: float = 5.0) -> float:
    """n / tau_int for a single stationary series."""
    series = np.asarray(series, dtype=float)
    return series.size / integrated_autocorrelation_time(series, c=c)


def kuiper_statistic(samples: np.ndarray, cdf) -> float:
    """Kuiper distance V = D+ + D-, rotation invariant on the circle."""
    u = np.sort(np.asarray(cdf(samples), dtype=float))
    n = u.size
    if n == 0:
        raise ValueError("need at least one sample")
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - u)
    d_minus = np.max(u - (i - 1) / n)
    return float(d_plus + d_minus)


def kuiper_uniform_circle(samples: np.ndarray, L: float) -> float:
    """Kuiper distance of circle samples against the uniform law on [0, 2 pi L)."""
    period = circumference(L)
    return kuiper_statistic(np.mod(samples, period), lambda x: x / period)


def ks_gaussian(samples: np.ndarray, variance: float) -> float:
    """One-sample KS distance against a centered Gaussian of given variance."""
    return float(scipy_stats.kstest(samples, "norm", args=(0.0, math.sqrt(variance))).statistic)


# -- ensemble statistics ------------------------------------------------------


@dataclass(frozen=True)
class EnsembleStats:
    """Mergeable accumulators of ensemble statistics.

    All fields are plain sums (or counts), so merging two records adds them;
    derived quantities are exposed as properties.
    """

    n_samples: int
    n_trajectories: int
    sum_u: np.ndarray
    sumsq_u: np.ndarray
    hist_counts: np.ndarray
    bin_edges: np.ndarray
    acov_sums: np.ndarray
    acov_counts: np.ndarray
    observable_names: tuple[str, ...]
    record_dt: float

    def merge(self, other: "EnsembleStats") -> "EnsembleStats":
        if self.observable_names != other.observable_names:
            raise ValueError("cannot merge stats with different observables")
        if not np.array_equal(self.bin_edges, other.bin_edges):
            raise ValueError("cannot merge stats with different histograms")
        if self.record_dt != other.record_dt:
            raise ValueError("cannot merge stats with different recording steps")
        return replace(
            self,
            n_samples=self.n_samples + other.n_samples,
            n_trajectories=self.n_trajectories + other.n_trajectories,
            sum_u=self.sum_u + other.sum_u,
            sumsq_u=self.sumsq_u + other.sumsq_u,
            hist_counts=self.hist_counts + other.hist_counts,
            acov_sums=self.acov_sums + other.acov_sums,
            acov_counts=self.acov_counts + other.acov_counts,
        )

    @property
    def means(self) -> np.ndarray:
        return self.sum_u / self.n_samples

    @property
    def variances(self) -> np.ndarray:
        n = self.n_samples
        return (self.sumsq_u - self.sum_u**2 / n) / (n - 1)

    @property
    def histogram_mass(self) -> np.ndarray:
        total = self.hist_counts.sum()
        return self.hist_counts / total if total > 0 else self.hist_counts

    @property
    def autocorrelations(self) -> np.ndarray:
        acov = self.acov_sums / self.acov_counts
        with np.errstate(invalid="ignore", divide="ignore"):
            return acov / acov[:, :1]

    @property
    def tau_int(self) -> np.ndarray:
        """Integrated autocorrelation time per observable, in recorded samples."""
        rho = self.autocorrelations
        return np.array([integrated_autocorrelation_time(r) for r in rho])

    @property
    def effective_samples(self) -> np.ndarray:
        return self.n_samples / self.tau_int

    @property
    def min_effective_samples(self) -> float:
        return float(np.min(self.effective_samples))


@dataclass(frozen=True)
class KSReport:
    """Distribution distances of the empirical law against the invariant law."""

    ks_u: np.ndarray
    kuiper_x: float
    thin_stride: int
    n_compared: int
    effective_samples: float


@dataclass(frozen=True)
class EnsembleResult:
    """Statistics plus the pooled recorded samples of an ensemble run.

    Samples are time-major: u_samples has shape (kept_times, n_trajectories, d)
    and x_samples (kept_times, n_trajectories), where consecutive time slices
    are pool_stride recording steps apart.
    """

    stats: EnsembleStats
    u_samples: np.ndarray
    x_samples: np.ndarray
    pool_stride: int


def observable_names(model: SpectralModel) -> tuple[str, ...]:
    """U coordinates plus the lowest Fourier pair, the tracked mixing observables."""
    k = min(model.frequencies)
    return tuple(f"u{j + 1}" for j in range(model.d)) + (f"cos{k}x", f"sin{k}x")


def simulate_ensemble(
    model: SpectralModel,
    config: IntegratorConfig,
    n_steps: int,
    n_trajectories: int,
    initial: SystemState | str = "stationary",
    thin: int = 10,
    burn_in: int = 0,
    n_bins: int = 64,
    max_lag: int | None = None,
    max_kept_samples: int | None = None,
    block_size: int = 1024,
) -> EnsembleResult:
    """Run independent trajectories and accumulate mergeable statistics.

    initial="stationary" draws each trajectory's start from the invariant law;
    passing a SystemState starts every trajectory there.  Recording happens
    every `thin` steps after `burn_in` steps.
    """
    if n_steps < 1 or n_trajectories < 1:
        raise ValueError("n_steps and n_trajectories must be positive")
    if burn_in >= n_steps:
        raise ValueError("burn_in must be smaller than n_steps")
    check_stiffness(model, config)

    root = np.random.SeedSequence(config.seed)
    init_seq, *traj_seqs = root.spawn(n_trajectories + 1)
    init_rng = np.random.Generator(np.random.PCG64(init_seq))
    generators = [np.random.Generator(np.random.PCG64(seq)) for seq in traj_seqs]

    if initial == "stationary":
        law = invariant_law(model)
        u, x = law.sample(init_rng, n_trajectories)
    elif isinstance(initial, SystemState):
        u = np.tile(initial.u, (n_trajectories, 1))
        x = np.full(n_trajectories, initial.x)
    else:
        raise ValueError(f"initial must be 'stationary' or a SystemState, got {initial!r}")

    period = circumference(model.circumference_param)
    bin_edges = np.linspace(0.0, period, n_bins + 1)
    n_recorded = (n_steps - burn_in) // thin
    if n_recorded < 2:
        raise ValueError("recording grid too coarse: fewer than two samples per trajectory")
    if max_lag is None:
        max_lag = min(n_recorded - 1, 1000)
    names = observable_names(model)
    n_obs = len(names)
    acov_sums = np.zeros((n_obs, max_lag + 1))
    acov_counts = np.zeros((n_obs, max_lag + 1))

    total_recorded = n_recorded * n_trajectories
    pool_stride = 1
    if max_kept_samples is not None and total_recorded > max_kept_samples:
        pool_stride = math.ceil(total_recorded / max_kept_samples)
        # the pool strides along time, keeping whole time slices of the ensemble

    # all trajectories advance in lockstep; trajectory i's noise comes from its
    # own child stream, so the realized paths are independent of the lockstep
    u_rec = np.empty((n_recorded, n_trajectories, model.d))
    x_rec = np.empty((n_recorded, n_trajectories))
    recorded = 0
    step_index = 0
    remaining = n_steps
    while remaining > 0:
        block = min(block_size, remaining)
        noise = np.stack([g.standard_normal(block) for g in generators])
        for b in range(block):
            u, x = _step_arrays(model, u, x, config.dt, config.sigma, config.scheme, noise[:, b])
            step_index += 1
            if step_index > burn_in and (step_index - burn_in) % thin == 0 and recorded < n_recorded:
                u_rec[recorded] = u
                x_rec[recorded] = x
                recorded += 1
        remaining -= block

    k_min = min(model.frequencies)
    phase = k_min * x_rec / model.circumference_param
    sum_u = u_rec.sum(axis=(0, 1))
    sumsq_u = (u_rec**2).sum(axis=(0, 1))
    hist_counts = np.histogram(x_rec, bins=bin_edges)[0].astype(float)
    for traj in range(n_trajectories):
        series_stack = np.vstack(
            [u_rec[:, traj, :].T, np.cos(phase[:, traj])[None, :], np.sin(phase[:, traj])[None, :]]
        )
        for o in range(n_obs):
            sums, counts = autocovariance_sums(series_stack[o], max_lag)
            acov_sums[o] += sums
            acov_counts[o] += counts
    pooled_u = u_rec[::pool_stride].copy()
    pooled_x = x_rec[::pool_stride].copy()

    stats = EnsembleStats(
        n_samples=total_recorded,
        n_trajectories=n_trajectories,
        sum_u=sum_u,
        sumsq_u=sumsq_u,
        hist_counts=hist_counts,
        bin_edges=bin_edges,
        acov_sums=acov_sums,
        acov_counts=acov_counts,
        observable_names=names,
        record_dt=config.dt * thin,
    )
    return EnsembleResult(
        stats=stats,
        u_samples=np.concatenate(pooled_u, axis=0),
        x_samples=np.concatenate(pooled_x),
        pool_stride=pool_stride,
    )


def ks_circular_and_gaussian(
    result: EnsembleResult,
    law,
    min_effective_samples: float | None = 1e4,
    decorrelation_factor: float = 2.0,
) -> KSReport:
    """KS distance of each U marginal vs its Gaussian and Kuiper distance of X vs uniform.

    Samples are thinned by a multiple of the estimated integrated
    autocorrelation time before comparing (at one tau apart the residual
    correlation still inflates the statistics).  Raises
    InsufficientEffectiveSamples when the ensemble carries fewer effectively
    independent samples than requested.
    """
    stats = result.stats
    ess = stats.min_effective_samples
    if min_effective_samples is not None and ess < min_effective_samples:
        raise InsufficientEffectiveSamples(
            f"effective sample size {ess:.0f} below required {min_effective_samples:.0f}"
        )
    tau = float(np.max(stats.tau_int))
    stride = max(1, math.ceil(decorrelation_factor * tau / result.pool_stride))
    u = result.u_samples[::stride].reshape(-1, result.u_samples.shape[-1])
    x = result.x_samples[::stride].reshape(-1)
    ks_u = np.array([ks_gaussian(u[:, j], var) for j, var in enumerate(law.gaussian_variances)])
    kuiper = kuiper_uniform_circle(x, law.circumference_param)
    return KSReport(
        ks_u=ks_u,
        kuiper_x=kuiper,
        thin_stride=stride,
        n_compared=u.shape[0],
        effective_samples=ess,
    )


# -- exact collapsed sampler --------------------------------------------------


def sample_ou_exact(z0: np.ndarray, t: float, model: SpectralModel, rng: np.random.Generator) -> np.ndarray:
    """Exact transition draw of the collapsed process after time t.

    Coordinate j is Gaussian with mean exp(-theta_j t) z0_j and variance
    (1 - exp(-2 theta_j t)) / (a_j |lambda_j|), theta_j = a_j|lambda_j|/(2 nu);
    degenerate modes diffuse freely with variance t/nu.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    z0 = np.asarray(z0, dtype=float)
    stiffness = model.stiffness
    nu = model.total_volume
    theta = stiffness / (2.0 * nu)
    decay = np.exp(-theta * t)
    with np.errstate(divide="ignore", invalid="ignore"):
        variance = np.where(
            stiffness > 0.0,
            -np.expm1(-2.0 * theta * t) / np.where(stiffness > 0.0, stiffness, 1.0),
            t / nu,
        )
    mean = decay * z0
    return mean + rng.standard_normal(z0.shape) * np.sqrt(variance)


def ou_rates(model: SpectralModel) -> np.ndarray:
    """Per-coordinate reversion rates theta_j = a_j|lambda_j|/(2 nu(M))."""
    return model.stiffness / (2.0 * model.total_volume)


# -- binary trajectory dumps --------------------------------------------------


def dump_trajectory(path_or_file, trajectory: Trajectory, model_hash: str) -> None:
    """Write a trajectory in the documented little-endian binary layout.

    Layout: 8-byte magic, 16-byte ASCII model hash, uint32 d, uint64 n_records,
    then n_records rows of (time, u_1..u_d, x) as little-endian float64.
    """
    n, d = trajectory.u.shape
    if len(model_hash) != 16:
        raise ValueError("model_hash must be 16 hex characters")
    rows = np.column_stack([trajectory.times, trajectory.u, trajectory.x])

    def _write(fh):
        fh.write(TRAJECTORY_MAGIC)
        fh.write(model_hash.encode("ascii"))
        fh.write(struct.pack("<IQ", d, n))
        fh.write(rows.astype("<f8").tobytes())

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "wb") as fh:
            _write(fh)


def load_trajectory(path_or_file) -> tuple[Trajectory, str]:
    """Read a trajectory dump; returns the trajectory and the stored model hash."""

    def _read(fh):
        magic = fh.read(8)
        if magic != TRAJECTORY_MAGIC:
            raise ValueError(f"not a trajectory dump (magic {magic!r})")
        stored_hash = fh.read(16).decode("ascii")
        d, n = struct.unpack("<IQ", fh.read(12))
        rows = np.frombuffer(fh.read(), dtype="<f8").reshape(n, d + 2)
        return rows, d, stored_hash

    if hasattr(path_or_file, "read"):
        rows, d, stored_hash = _read(path_or_file)
    else:
        with open(path_or_file, "rb") as fh:
            rows, d, stored_hash = _read(fh)
    return (
        Trajectory(times=rows[:, 0].copy(), u=rows[:, 1 : d + 1].copy(), x=rows[:, d + 1].copy()),
        stored_hash,
    )
