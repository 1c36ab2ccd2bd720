"""SDE integrator, exact collapsed sampler, and ergodic diagnostics."""

import math

import numpy as np
import pytest

from srdlab.bounds import ou_gap
from srdlab.model import invariant_law, make_state, potential_phi, torus_model
from srdlab.simulate import (
    EULER_MARUYAMA,
    STRANG_SPLITTING,
    InsufficientEffectiveSamples,
    IntegratorConfig,
    StiffnessWarning,
    autocorrelation,
    check_stiffness,
    dump_trajectory,
    effective_sample_size,
    integrated_autocorrelation_time,
    ks_circular_and_gaussian,
    ks_gaussian,
    kuiper_uniform_circle,
    load_trajectory,
    ou_rates,
    sample_ou_exact,
    simulate_ensemble,
    simulate_trajectory,
    step,
)
from srdlab.torus import circumference


@pytest.fixture
def single_pair():
    return torus_model(1.0, [1], [1.0])


class TestConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            IntegratorConfig(dt=0.0)
        with pytest.raises(ValueError):
            IntegratorConfig(dt=1e-3, scheme="heun")
        with pytest.raises(ValueError):
            IntegratorConfig(dt=1e-3, sigma=-1.0)

    def test_stiffness_warning(self, single_pair):
        with pytest.warns(StiffnessWarning):
            assert not check_stiffness(single_pair, IntegratorConfig(dt=0.2))
        assert check_stiffness(single_pair, IntegratorConfig(dt=1e-3))


class TestStep:
    @pytest.mark.parametrize("scheme", [EULER_MARUYAMA, STRANG_SPLITTING])
    def test_zero_environment_keeps_x_fixed(self, single_pair, scheme):
        config = IntegratorConfig(dt=1e-2, scheme=scheme, sigma=0.0)
        state = make_state(single_pair, np.zeros(2), 1.3)
        new = step(single_pair, state, config, noise=0.7)
        assert new.x == pytest.approx(1.3, abs=1e-15)
        if scheme == EULER_MARUYAMA:
            expected_u = single_pair.basis_values(1.3) * config.dt
            np.testing.assert_allclose(new.u, expected_u, rtol=1e-14)

    @pytest.mark.parametrize("scheme", [EULER_MARUYAMA, STRANG_SPLITTING])
    def test_mod_reduction(self, single_pair, scheme):
        config = IntegratorConfig(dt=0.05, scheme=scheme, sigma=2.0)
        state = make_state(single_pair, np.array([3.0, -1.0]), circumference(1.0) - 1e-4)
        for noise in (-3.0, 0.0, 5.0):
            new = step(single_pair, state, config, noise)
            assert 0.0 <= new.x < circumference(1.0)

    def test_richardson_consistency_in_u(self, single_pair):
        # one step of size dt vs two of size dt/2 differ by O(dt^2) at sigma=0
        config_full = IntegratorConfig(dt=0.1, scheme=EULER_MARUYAMA, sigma=0.0)
        state = make_state(single_pair, np.array([0.8, -0.5]), 0.9)

        def defect(dt):
            one = step(single_pair, state, IntegratorConfig(dt=dt, scheme=EULER_MARUYAMA, sigma=0.0), 0.0)
            half_cfg = IntegratorConfig(dt=dt / 2, scheme=EULER_MARUYAMA, sigma=0.0)
            two = step(single_pair, step(single_pair, state, half_cfg, 0.0), half_cfg, 0.0)
            return np.linalg.norm(one.u - two.u) + abs(one.x - two.x)

        ratio = defect(0.1) / defect(0.05)
        assert 3.0 < ratio < 5.0
        del config_full


class TestTrajectory:
    def test_seed_determinism(self, single_pair):
        config = IntegratorConfig(dt=1e-2, seed=123, sigma=1.0)
        initial = make_state(single_pair, np.zeros(2), 0.0)
        t1 = simulate_trajectory(single_pair, initial, config, 500)
        t2 = simulate_trajectory(single_pair, initial, config, 500)
        assert np.array_equal(t1.u, t2.u)
        assert np.array_equal(t1.x, t2.x)
        t3 = simulate_trajectory(
            single_pair, initial, IntegratorConfig(dt=1e-2, seed=124, sigma=1.0), 500
        )
        assert not np.array_equal(t1.x, t3.x)

    def test_thinning_grid(self, single_pair):
        config = IntegratorConfig(dt=1e-2, seed=1)
        initial = make_state(single_pair, np.zeros(2), 0.0)
        traj = simulate_trajectory(single_pair, initial, config, 100, thin=10)
        assert traj.times.shape == (11,)
        np.testing.assert_allclose(traj.times, np.arange(11) * 0.1, rtol=1e-12)

    def test_long_run_stability_noise_free(self, single_pair):
        # the single-pair noise-free flow conserves
        # I = r^2/2 - log r - log|sin(x - arg u)|, which bounds the energy
        # shell; from u = 0 the orbit sits on the I = inf separatrix instead
        config = IntegratorConfig(dt=1e-3, seed=0, sigma=0.0, scheme=STRANG_SPLITTING)
        initial = make_state(single_pair, np.array([1.0, 0.0]), 1.234)
        traj = simulate_trajectory(single_pair, initial, config, 1_000_000, thin=1000)
        phis = np.array([potential_phi(single_pair, u) for u in traj.u])
        assert phis.max() < 5.0
        r = np.sqrt((traj.u**2).sum(axis=1))
        psi = traj.x - np.arctan2(traj.u[:, 1], traj.u[:, 0])
        invariant = r**2 / 2 - np.log(r) - np.log(np.abs(np.sin(psi)))
        assert np.max(np.abs(invariant - invariant[0])) < 0.05

    def test_dump_roundtrip(self, single_pair, tmp_path):
        config = IntegratorConfig(dt=1e-2, seed=5)
        initial = make_state(single_pair, np.zeros(2), 0.5)
        traj = simulate_trajectory(single_pair, initial, config, 50, thin=5)
        path = tmp_path / "traj.bin"
        dump_trajectory(path, traj, "0123456789abcdef")
        loaded, model_hash = load_trajectory(path)
        assert model_hash == "0123456789abcdef"
        np.testing.assert_array_equal(loaded.u, traj.u)
        np.testing.assert_array_equal(loaded.x, traj.x)
        np.testing.assert_array_equal(loaded.times, traj.times)


class TestExactOuSampler:
    def test_zero_time_returns_start(self, single_pair):
        rng = np.random.default_rng(0)
        z0 = np.array([1.5, -2.0])
        np.testing.assert_array_equal(sample_ou_exact(z0, 0.0, single_pair, rng), z0)

    def test_rate_matches_ou_gap(self, single_pair):
        rates = ou_rates(single_pair)
        np.testing.assert_allclose(rates, 1 / (4 * math.pi), rtol=1e-14)
        assert rates[0] == pytest.approx(ou_gap(single_pair), rel=1e-14)

    def test_equilibrium_moments(self):
        model = torus_model(1.0, [1, 2], [1.0, 0.5])
        law = invariant_law(model)
        theta_min = float(np.min(ou_rates(model)))
        rng = np.random.default_rng(7)
        n = 100_000
        t = 50.0 / theta_min
        z0 = np.full((n, model.d), 3.0)
        samples = sample_ou_exact(z0, t, model, rng)
        target_var = law.gaussian_variances
        for j in range(model.d):
            mean_err = abs(samples[:, j].mean())
            assert mean_err < 4.0 * math.sqrt(target_var[j] / n)
            var = samples[:, j].var(ddof=1)
            var_sd = target_var[j] * math.sqrt(2.0 / (n - 1))
            assert abs(var - target_var[j]) < 4.0 * var_sd

    def test_transition_moments_at_finite_time(self, single_pair):
        rng = np.random.default_rng(3)
        t = 2.0
        theta = ou_rates(single_pair)[0]
        n = 200_000
        z0 = np.full((n, 2), 1.0)
        samples = sample_ou_exact(z0, t, single_pair, rng)
        mean_target = math.exp(-theta * t)
        var_target = -math.expm1(-2 * theta * t)
        assert samples[:, 0].mean() == pytest.approx(mean_target, abs=4 * math.sqrt(var_target / n))
        assert samples[:, 0].var(ddof=1) == pytest.approx(
            var_target, abs=4 * var_target * math.sqrt(2.0 / n)
        )


class TestAutocorrelation:
    def test_white_noise_tau_near_one(self):
        rng = np.random.default_rng(11)
        series = rng.standard_normal(200_00)
        tau = integrated_autocorrelation_time(series)
        assert abs(tau - 1.0) < 0.15
        assert effective_sample_size(series) > series.size / 1.3

    def test_ar1_matches_theory(self):
        rng = np.random.default_rng(13)
        phi = 0.9
        n = 400_000
        eps = rng.standard_normal(n)
        series = np.empty(n)
        series[0] = eps[0]
        for i in range(1, n):
            series[i] = phi * series[i - 1] + eps[i]
        tau_true = (1 + phi) / (1 - phi)
        tau = integrated_autocorrelation_time(series)
        assert abs(tau - tau_true) / tau_true < 0.15

    def test_autocorrelation_normalized(self):
        rng = np.random.default_rng(17)
        series = rng.standard_normal(5000)
        rho = autocorrelation(series, 50)
        assert rho[0] == pytest.approx(1.0, rel=1e-12)
        assert np.max(np.abs(rho[1:])) < 0.1


class TestDistributionDistances:
    def test_kuiper_null_below_critical(self):
        rng = np.random.default_rng(19)
        samples = rng.uniform(0.0, circumference(1.0), size=10_000)
        assert kuiper_uniform_circle(samples, 1.0) < 0.02  # 1% critical ~ 2.0/sqrt(n)

    def test_kuiper_rotation_invariance(self):
        rng = np.random.default_rng(23)
        samples = rng.uniform(0.0, circumference(1.0), size=5000)
        v0 = kuiper_uniform_circle(samples, 1.0)
        v1 = kuiper_uniform_circle(samples + 1.7, 1.0)
        assert v1 == pytest.approx(v0, abs=2e-3)

    def test_degenerate_sample_maximal(self):
        samples = np.full(1000, 0.1)
        assert kuiper_uniform_circle(samples, 1.0) > 0.95
        assert ks_gaussian(np.full(1000, -10.0), 1.0) > 0.95

    def test_direct_law_samples_pass(self, single_pair):
        rng = np.random.default_rng(29)
        law = invariant_law(single_pair)
        u, x = law.sample(rng, 10_000)
        assert ks_gaussian(u[:, 0], 1.0) < 0.0163  # 1% critical value at n = 1e4
        assert kuiper_uniform_circle(x, 1.0) < 0.02


class TestEnsemble:
    def test_merge_commutative_and_associative(self, single_pair):
        config = IntegratorConfig(dt=5e-3, seed=31, sigma=1.0)
        r1 = simulate_ensemble(single_pair, config, 4000, 4, thin=10)
        r2 = simulate_ensemble(
            single_pair, IntegratorConfig(dt=5e-3, seed=32, sigma=1.0), 4000, 4, thin=10
        )
        ab = r1.stats.merge(r2.stats)
        ba = r2.stats.merge(r1.stats)
        np.testing.assert_array_equal(ab.sum_u, ba.sum_u)
        np.testing.assert_array_equal(ab.hist_counts, ba.hist_counts)
        np.testing.assert_array_equal(ab.acov_sums, ba.acov_sums)
        assert ab.n_samples == r1.stats.n_samples + r2.stats.n_samples

    def test_histogram_mass_sums_to_one(self, single_pair):
        config = IntegratorConfig(dt=5e-3, seed=37, sigma=1.0)
        result = simulate_ensemble(single_pair, config, 2000, 4, thin=10)
        assert result.stats.histogram_mass.sum() == pytest.approx(1.0, rel=1e-12)
        assert np.all(result.stats.variances >= 0)

    @pytest.mark.parametrize(
        "sigma,n_steps,n_traj,max_lag",
        [
            (0.5, 150_000, 16, 1000),
            (1.0, 150_000, 16, 1000),
            (2.0, 600_000, 48, 2500),  # strong noise slows the environment
        ],
    )
    def test_stationary_start_reproduces_invariant_law(
        self, single_pair, sigma, n_steps, n_traj, max_lag
    ):
        # smaller-scale version of the ergodicity acceptance check; thresholds
        # are the 1% critical values at the thinned sample count
        config = IntegratorConfig(dt=2e-3, seed=41, sigma=sigma)
        result = simulate_ensemble(single_pair, config, n_steps, n_traj, thin=25, max_lag=max_lag)
        law = invariant_law(single_pair)
        report = ks_circular_and_gaussian(result, law, min_effective_samples=200)
        ks_critical = 1.63 / math.sqrt(report.n_compared)
        kuiper_critical = 2.00 / math.sqrt(report.n_compared)
        assert np.max(report.ks_u) < ks_critical
        assert report.kuiper_x < kuiper_critical

    def test_window_exhaustion_warns(self, single_pair):
        from srdlab.simulate import WindowExhaustedWarning, integrated_autocorrelation_time

        rng = np.random.default_rng(61)
        phi = 0.999  # tau ~ 2000, far beyond the probe window
        eps = rng.standard_normal(20_000)
        series = np.empty(eps.size)
        series[0] = eps[0]
        for i in range(1, eps.size):
            series[i] = phi * series[i - 1] + eps[i]
        with pytest.warns(WindowExhaustedWarning):
            integrated_autocorrelation_time(series, max_lag=100)

    def test_insufficient_effective_samples_signalled(self, single_pair):
        config = IntegratorConfig(dt=2e-3, seed=43, sigma=1.0)
        result = simulate_ensemble(single_pair, config, 5000, 2, thin=10)
        law = invariant_law(single_pair)
        with pytest.raises(InsufficientEffectiveSamples):
            ks_circular_and_gaussian(result, law, min_effective_samples=1e4)

    def test_collapse_consistency_moments(self, single_pair):
        # lifted stationary marginals match the exact collapsed sampler's
        config = IntegratorConfig(dt=2e-3, seed=47, sigma=1.0)
        result = simulate_ensemble(single_pair, config, 100_000, 16, thin=25)
        stats = result.stats
        rng = np.random.default_rng(53)
        theta = ou_rates(single_pair)[0]
        direct = sample_ou_exact(np.zeros((50_000, 2)), 40.0 / theta, single_pair, rng)
        ess = stats.min_effective_samples
        for j in range(2):
            lifted_mean = stats.means[j]
            mc_err = 4.0 * math.sqrt(stats.variances[j] / ess)
            assert abs(lifted_mean - direct[:, j].mean()) < mc_err + 4.0 * math.sqrt(1.0 / 50_000)
            assert abs(stats.variances[j] - direct[:, j].var(ddof=1)) < 4.0 * math.sqrt(2.0 / ess)

    def test_dt_robustness(self, single_pair):
        coarse = simulate_ensemble(
            single_pair, IntegratorConfig(dt=4e-3, seed=59, sigma=1.0), 50_000, 8, thin=10
        )
        fine = simulate_ensemble(
            single_pair, IntegratorConfig(dt=2e-3, seed=59, sigma=1.0), 100_000, 8, thin=20
        )
        ess = min(coarse.stats.min_effective_samples, fine.stats.min_effective_samples)
        radius = 4.0 * math.sqrt(2.0) * (coarse.stats.variances.max() / math.sqrt(ess))
        assert np.all(np.abs(coarse.stats.variances - fine.stats.variances) < radius)
