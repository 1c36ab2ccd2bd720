"""Config-driven experiment runner.

Subcommands: tensors, bounds, simulate, galerkin, compare.  Each reads one
JSON config, validates it against the module preconditions, and writes
machine-readable CSV/JSON (plus PNG figures when enabled) into the output
directory.  Every output file embeds the config hash; reruns with an identical
config are bit-identical, timestamps live only in the sidecar run.log.

Precedence for settings: --set overrides > --output-dir flag > the
SRDLAB_OUTPUT_DIR environment variable > the config file.

Exit codes: 0 success, 2 config validation error, 3 numerical non-convergence
(truncation policy failure, bracket exhaustion, or too few effective samples).
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, bounds as bounds_mod, galerkin as galerkin_mod
from .model import SpectralModel, invariant_law, make_state, torus_model
from .simulate import (
    InsufficientEffectiveSamples,
    IntegratorConfig,
    SCHEMES,
    dump_trajectory,
    ks_circular_and_gaussian,
    simulate_ensemble,
    simulate_trajectory,
)
from .tensors import (
    compute_chi,
    nonzero_entry_rows,
    selection_mask,
    single_frequency_aggregate_report,
)

ENV_OUTPUT_DIR = "SRDLAB_OUTPUT_DIR"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3


class ConfigError(ValueError):
    """Invalid experiment configuration; message carries the field path."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field_path = field_path


def _require(condition: bool, field_path: str, message: str) -> None:
    if not condition:
        raise ConfigError(field_path, message)


@dataclass
class ExperimentConfig:
    """Validated experiment settings; see README for the schema."""

    L: float
    frequencies: list[int]
    coefficients: list[float]
    sigma_grid: list[float]
    L_grid: list[float]
    include_sigma_star: bool
    max_hermite_degree: int
    max_fourier_frequency: int
    max_refinements: int
    dt: float
    scheme: str
    seed: int
    sigma: float
    n_steps: int
    n_trajectories: int
    thin: int
    burn_in: int
    min_effective_samples: float
    universal_constant: float
    output_directory: str
    formats: list[str]
    dump_trajectory: bool
    export_operator: bool
    raw: dict = field(repr=False, default_factory=dict)

    def model(self, L: float | None = None) -> SpectralModel:
        return torus_model(L if L is not None else self.L, self.frequencies, self.coefficients)

    def truncation(self) -> galerkin_mod.Truncation:
        return galerkin_mod.Truncation(self.max_hermite_degree, self.max_fourier_frequency)

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(dt=self.dt, scheme=self.scheme, seed=self.seed, sigma=self.sigma)


_DEFAULTS = {
    "sigma_grid": [0.5, 1.0, 2.0],
    "include_sigma_star": True,
    "truncation": {"max_hermite_degree": 6, "max_fourier_frequency": 6, "max_refinements": 2},
    "integrator": {
        "dt": 1e-3,
        "scheme": "strang_splitting",
        "seed": 0,
        "sigma": 1.0,
        "n_steps": 100_000,
        "n_trajectories": 16,
        "thin": 20,
        "burn_in": 0,
        "min_effective_samples": 1e4,
    },
    "universal_constant": 1.0,
    "output": {
        "directory": "srdlab_out",
        "formats": ["csv", "json", "png"],
        "dump_trajectory": False,
        "export_operator": False,
    },
}


def _merged(raw: dict) -> dict:
    merged = json.loads(json.dumps(_DEFAULTS))
    for key, value in raw.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key].update(value)
        else:
            merged[key] = value
    return merged


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a raw config dictionary with field-level error messages."""
    _require(isinstance(raw, dict), "<root>", "config must be a JSON object")
    _require("model" in raw, "model", "missing section")
    merged = _merged(raw)
    model = merged["model"]
    _require(isinstance(model, dict), "model", "must be an object")
    for key in ("L", "frequencies", "coefficients"):
        _require(key in model, f"model.{key}", "missing")
    L = model["L"]
    _require(isinstance(L, (int, float)) and L > 0, "model.L", f"must be a positive number, got {L!r}")
    freqs = model["frequencies"]
    _require(
        isinstance(freqs, list) and len(freqs) > 0,
        "model.frequencies",
        "must be a non-empty list of positive integers",
    )
    _require(
        all(isinstance(k, int) and k >= 1 for k in freqs),
        "model.frequencies",
        f"must be positive integers, got {freqs!r}",
    )
    _require(len(set(freqs)) == len(freqs), "model.frequencies", "must be distinct")
    coeffs = model["coefficients"]
    _require(
        isinstance(coeffs, list) and len(coeffs) > 0,
        "model.coefficients",
        "must be a non-empty list of nonnegative numbers",
    )
    _require(
        len(coeffs) == len(freqs),
        "model.coefficients",
        f"length {len(coeffs)} must match the {len(freqs)} frequencies",
    )
    _require(
        all(isinstance(a, (int, float)) and a >= 0 for a in coeffs),
        "model.coefficients",
        f"must be nonnegative numbers, got {coeffs!r}",
    )

    sigma_grid = merged["sigma_grid"]
    _require(
        isinstance(sigma_grid, list)
        and len(sigma_grid) > 0
        and all(isinstance(s, (int, float)) and s > 0 for s in sigma_grid),
        "sigma_grid",
        "must be a non-empty list of positive numbers",
    )
    L_grid = merged.get("L_grid", [L])
    _require(
        isinstance(L_grid, list) and all(isinstance(v, (int, float)) and v > 0 for v in L_grid),
        "L_grid",
        "must be a list of positive numbers",
    )

    trunc = merged["truncation"]
    for key in ("max_hermite_degree", "max_fourier_frequency"):
        _require(
            isinstance(trunc.get(key), int) and trunc[key] >= 1,
            f"truncation.{key}",
            "must be a positive integer",
        )
    _require(
        trunc["max_fourier_frequency"] >= max(freqs),
        "truncation.max_fourier_frequency",
        f"must be at least the maximum model frequency {max(freqs)}",
    )
    max_refinements = trunc.get("max_refinements", 2)
    _require(
        isinstance(max_refinements, int) and max_refinements >= 1,
        "truncation.max_refinements",
        "must be a positive integer",
    )

    integ = merged["integrator"]
    _require(
        isinstance(integ.get("dt"), (int, float)) and integ["dt"] > 0,
        "integrator.dt",
        "must be a positive number",
    )
    _require(
        integ.get("scheme") in SCHEMES,
        "integrator.scheme",
        f"must be one of {SCHEMES}, got {integ.get('scheme')!r}",
    )
    _require(isinstance(integ.get("seed"), int), "integrator.seed", "must be an integer")
    _require(
        isinstance(integ.get("sigma"), (int, float)) and integ["sigma"] >= 0,
        "integrator.sigma",
        "must be a nonnegative number",
    )
    for key in ("n_steps", "n_trajectories", "thin"):
        _require(
            isinstance(integ.get(key), int) and integ[key] >= 1,
            f"integrator.{key}",
            "must be a positive integer",
        )
    _require(
        isinstance(integ.get("burn_in"), int) and 0 <= integ["burn_in"] < integ["n_steps"],
        "integrator.burn_in",
        "must be a nonnegative integer below n_steps",
    )

    constant = merged["universal_constant"]
    _require(
        isinstance(constant, (int, float)) and constant > 0,
        "universal_constant",
        "must be a positive number",
    )

    output = merged["output"]
    formats = output.get("formats", ["csv", "json"])
    _require(
        isinstance(formats, list) and all(f in ("csv", "json", "png") for f in formats),
        "output.formats",
        f"entries must be csv, json or png, got {formats!r}",
    )
    _require("csv" in formats and "json" in formats, "output.formats", "csv and json are mandatory")

    return ExperimentConfig(
        L=float(L),
        frequencies=[int(k) for k in freqs],
        coefficients=[float(a) for a in coeffs],
        sigma_grid=[float(s) for s in sigma_grid],
        L_grid=[float(v) for v in L_grid],
        include_sigma_star=bool(merged["include_sigma_star"]),
        max_hermite_degree=trunc["max_hermite_degree"],
        max_fourier_frequency=trunc["max_fourier_frequency"],
        max_refinements=max_refinements,
        dt=float(integ["dt"]),
        scheme=integ["scheme"],
        seed=integ["seed"],
        sigma=float(integ["sigma"]),
        n_steps=integ["n_steps"],
        n_trajectories=integ["n_trajectories"],
        thin=integ["thin"],
        burn_in=integ["burn_in"],
        min_effective_samples=float(integ["min_effective_samples"]),
        universal_constant=float(constant),
        output_directory=str(output["directory"]),
        formats=list(formats),
        dump_trajectory=bool(output["dump_trajectory"]),
        export_operator=bool(output["export_operator"]),
        raw=merged,
    )


def config_hash(config: ExperimentConfig) -> str:
    """Hash of the effective config, excluding only the output directory."""
    payload = json.loads(json.dumps(config.raw))
    payload.get("output", {}).pop("directory", None)
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def model_hash(model: SpectralModel) -> str:
    payload = {
        "L": model.circumference_param,
        "frequencies": list(model.frequencies),
        "coefficients": list(model.frequency_coefficients),
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def format_value(value) -> str:
    """CSV cell formatting; floats in scientific notation with 17 significant digits."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.16e}"
    return str(value)


class RunWriter:
    """Atomic writer stamping every file with the config hash and version."""

    def __init__(self, directory: Path, digest: str, formats: list[str]):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.digest = digest
        self.formats = formats
        self.written: list[Path] = []

    def _atomic_write(self, name: str, data: bytes) -> Path:
        path = self.directory / name
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)
        self.written.append(path)
        return path

    def write_csv(self, name: str, header: list[str], rows) -> Path:
        lines = [f"# config_hash={self.digest} srdlab_version={__version__}"]
        lines.append(",".join(header))
        for row in rows:
            lines.append(",".join(format_value(v) for v in row))
        return self._atomic_write(name, ("\n".join(lines) + "\n").encode("utf-8"))

    def write_json(self, name: str, payload: dict) -> Path:
        document = {"config_hash": self.digest, "srdlab_version": __version__, **payload}
        return self._atomic_write(name, (json.dumps(document, indent=2, sort_keys=True) + "\n").encode())

    def write_figure(self, name: str, figure) -> Path | None:
        import matplotlib.pyplot as plt

        from .reporting import save_figure

        if "png" not in self.formats:
            plt.close(figure)
            return None
        path = self.directory / name
        tmp = path.with_suffix(".tmp.png")
        save_figure(figure, tmp)
        os.replace(tmp, path)
        self.written.append(path)
        return path

    def write_bytes(self, name: str, data: bytes) -> Path:
        return self._atomic_write(name, data)

    def log(self, message: str) -> None:
        stamp = datetime.datetime.now().isoformat(timespec="seconds")
        with open(self.directory / "run.log", "a", encoding="utf-8") as fh:
            fh.write(f"{stamp} [{self.digest}] {message}\n")


# -- subcommands ---------------------------------------------------------------


def cmd_tensors(config: ExperimentConfig, writer: RunWriter) -> int:
    model = config.model()
    tensors = compute_chi(model)
    rows = list(nonzero_entry_rows(model, tensors))
    writer.write_csv("chi_entries.csv", ["i", "j", "k", "l", "kind", "value"], rows)

    rule_counts = {
        "chi": int(np.sum(selection_mask(model))),
        "chi_tilde": int(np.sum(selection_mask(model, derivative=True))),
    }
    quad_counts = {
        "chi": int(np.sum(np.abs(tensors.chi_entries) >= 1e-12)),
        "chi_tilde": int(np.sum(np.abs(tensors.chi_tilde_entries) >= 1e-12)),
    }
    summary = {
        "model": {
            "L": model.circumference_param,
            "frequencies": list(model.frequencies),
            "coefficients": list(model.frequency_coefficients),
        },
        "chi": tensors.chi,
        "chi_tilde": tensors.chi_tilde,
        "selection_rule_counts": rule_counts,
        "quadrature_nonzero_counts": quad_counts,
        "selection_rule_agrees": rule_counts == quad_counts,
    }
    if model.n_frequencies == 1:
        summary["single_frequency_adjudication"] = single_frequency_aggregate_report(
            model.circumference_param,
            model.frequency_coefficients[0],
            model.frequencies[0],
        )
    writer.write_json("chi_summary.json", summary)

    from .reporting import figure_tensor_entries

    writer.write_figure(
        "chi_entries.png",
        figure_tensor_entries(rows, tensors.chi, tensors.chi_tilde, writer.digest),
    )
    writer.log(f"tensors: chi={tensors.chi!r} chi_tilde={tensors.chi_tilde!r}")
    return EXIT_OK


def cmd_bounds(config: ExperimentConfig, writer: RunWriter) -> int:
    model = config.model()
    tensors = compute_chi(model)
    payload = bounds_mod.bounds_payload(model, tensors)
    primary = bounds_mod.compute_bounds(model, tensors, bounds_mod.PER_FREQUENCY)

    sweep_rows = []
    nu_values, proxy_values, comparison_values = [], [], []
    for sigma in sorted(set(config.sigma_grid) | {bounds_mod.sigma_star(primary)}):
        nu = bounds_mod.rate_nu(primary, sigma, c_universal=config.universal_constant)
        proxy = bounds_mod.upper_bound_proxy(primary, sigma)
        comparison = bounds_mod.comparison_bound(model, sigma, config.universal_constant)
        sweep_rows.append((sigma, nu, 1.0 / nu, proxy, comparison))
        nu_values.append(nu)
        proxy_values.append(proxy)
        comparison_values.append(comparison)
    writer.write_csv(
        "sigma_sweep.csv",
        ["sigma", "nu", "nu_inverse", "upper_bound_proxy", "comparison_bound"],
        sweep_rows,
    )

    trend_rows = []
    for L in config.L_grid:
        model_L = config.model(L)
        report_L = bounds_mod.compute_bounds(model_L, compute_chi(model_L), bounds_mod.PER_FREQUENCY)
        a_min = min(config.coefficients)
        reference = math.sqrt((L + L**3) / a_min)
        minimized = bounds_mod.minimized_upper_proxy(report_L)
        trend_rows.append(
            (
                L,
                bounds_mod.sigma_star(report_L),
                minimized,
                reference,
                minimized / reference,
                report_L.t_rel_lower,
            )
        )
    writer.write_csv(
        "l_trend.csv",
        ["L", "sigma_star", "minimized_upper_proxy", "sqrt_L_plus_L3_over_a", "ratio", "lower_bound"],
        trend_rows,
    )
    payload["sigma_star_primary"] = bounds_mod.sigma_star(primary)
    payload["universal_constant"] = config.universal_constant
    writer.write_json("bounds.json", payload)

    from .reporting import figure_bounds_sweep

    sigmas = [row[0] for row in sweep_rows]
    writer.write_figure(
        "bounds_sweep.png",
        figure_bounds_sweep(sigmas, nu_values, proxy_values, comparison_values, writer.digest),
    )
    writer.log(f"bounds: t_rel_lower={primary.t_rel_lower!r} sigma_star={bounds_mod.sigma_star(primary)!r}")
    return EXIT_OK


def cmd_simulate(config: ExperimentConfig, writer: RunWriter) -> int:
    model = config.model()
    integrator = config.integrator()
    law = invariant_law(model)
    if integrator.sigma == 0.0:
        warnings.warn(
            "sigma = 0: the invariant law is possibly not unique; "
            "stationarity diagnostics compare against one candidate only",
            UserWarning,
        )
        writer.log("simulate: WARNING sigma=0, invariant law possibly not unique")
        print(
            "warning: sigma = 0 makes the invariant probability measure possibly not unique",
            file=sys.stderr,
        )

    result = simulate_ensemble(
        model,
        integrator,
        n_steps=config.n_steps,
        n_trajectories=config.n_trajectories,
        thin=config.thin,
        burn_in=config.burn_in,
    )
    stats = result.stats

    insufficient = False
    ks_report = None
    try:
        ks_report = ks_circular_and_gaussian(result, law, config.min_effective_samples)
    except InsufficientEffectiveSamples as err:
        insufficient = True
        print(f"warning: {err}", file=sys.stderr)
        writer.log(f"simulate: insufficient effective samples ({err})")
        ks_report = ks_circular_and_gaussian(result, law, min_effective_samples=None)

    rows = []
    for j in range(model.d):
        rows.append(("moment", f"u{j + 1}", "", "mean", stats.means[j]))
        rows.append(("moment", f"u{j + 1}", "", "variance", stats.variances[j]))
        rows.append(("moment", f"u{j + 1}", "", "target_variance", law.gaussian_variances[j]))
    for j in range(model.d):
        rows.append(("ks", f"u{j + 1}", "", "statistic", ks_report.ks_u[j]))
    rows.append(("kuiper", "x", "", "statistic", ks_report.kuiper_x))
    for name, tau, ess in zip(stats.observable_names, stats.tau_int, stats.effective_samples):
        rows.append(("tau_int", name, "", "recorded_samples", tau))
        rows.append(("ess", name, "", "count", ess))
    rho = stats.autocorrelations
    for o, name in enumerate(stats.observable_names):
        for lag in range(rho.shape[1]):
            rows.append(("autocorrelation", name, lag, lag * stats.record_dt, rho[o, lag]))
    mass = stats.histogram_mass
    for b in range(mass.size):
        rows.append(("histogram", "x", b, stats.bin_edges[b], mass[b]))
    writer.write_csv("stats.csv", ["record", "name", "index", "argument", "value"], rows)

    summary = {
        "model_hash": model_hash(model),
        "sigma": integrator.sigma,
        "n_steps": config.n_steps,
        "n_trajectories": config.n_trajectories,
        "recorded_samples": stats.n_samples,
        "min_effective_samples_required": config.min_effective_samples,
        "min_effective_samples_estimated": stats.min_effective_samples,
        "insufficient_effective_samples": insufficient,
        "sigma_zero_nonunique_warning": integrator.sigma == 0.0,
        "ks_u": ks_report.ks_u.tolist(),
        "kuiper_x": ks_report.kuiper_x,
        "ks_thin_stride": ks_report.thin_stride,
        "ks_samples_compared": ks_report.n_compared,
    }
    writer.write_json("simulate_summary.json", summary)

    if config.dump_trajectory:
        initial = make_state(model, np.zeros(model.d), 0.0)
        trajectory = simulate_trajectory(
            model, initial, integrator, min(config.n_steps, 100_000), thin=config.thin
        )
        import io

        buffer = io.BytesIO()
        dump_trajectory(buffer, trajectory, model_hash(model))
        writer.write_bytes("trajectory.bin", buffer.getvalue())

    from .reporting import figure_simulation

    writer.write_figure("simulate_stats.png", figure_simulation(stats, law, writer.digest))
    writer.log(
        f"simulate: ess={stats.min_effective_samples:.0f} "
        f"ks_max={float(np.max(ks_report.ks_u))!r} kuiper={ks_report.kuiper_x!r}"
    )
    return EXIT_NONCONVERGED if insufficient else EXIT_OK


def _verification_payload(config: ExperimentConfig, model: SpectralModel) -> dict:
    """Structural identity residuals for one model."""
    kmax = model.max_frequency
    op = galerkin_mod.build_operator(model, config.truncation(), 1.0)
    antisym = float(np.max(np.abs(op.a0 + op.a0.T)))
    const_residual = float(
        max(np.max(np.abs(op.a_sigma[0, :])), np.max(np.abs(op.a_sigma[:, 0])))
    )
    lift_trunc = galerkin_mod.Truncation(6, kmax)
    lifts = {
        f"sigma={s:g}": galerkin_mod.verify_lift_conditions(model, lift_trunc, sigma=s, max_degree=5)
        for s in (0.0, 1.0)
    }
    bochner = galerkin_mod.verify_bochner(model, max_degree=4, n_random=100, seed=config.seed)
    drift = galerkin_mod.verify_drift_moment_inequality(model, max_degree=4, n_random=100, seed=config.seed)
    lstar = galerkin_mod.verify_lstar_l(
        model, galerkin_mod.Truncation(4, 2 * kmax), n_random=20, seed=config.seed
    )
    tolerance = 1e-10
    payload = {
        "antisymmetry_residual": antisym,
        "constant_row_column_residual": const_residual,
        "lift_conditions": {
            key: {
                "orthogonality_residual": rep.max_orthogonality_residual,
                "dirichlet_residual": rep.max_dirichlet_residual,
                "n_functions": rep.n_functions,
            }
            for key, rep in lifts.items()
        },
        "bochner_max_residual": bochner.max_residual,
        "bochner_cases": bochner.n_cases,
        "drift_inequality_min_slack": drift.min_slack,
        "drift_inequality_violations": drift.n_violations,
        "lstar_l_max_residual": lstar.max_residual,
        "lstar_l_norm_ratio": lstar.max_norm_ratio,
        "lstar_l_c1_per_member": lstar.c1_per_member,
        "tolerance": tolerance,
    }
    payload["all_pass"] = bool(
        antisym < 1e-12
        and const_residual < 1e-12
        and all(
            rep.max_orthogonality_residual < tolerance and rep.max_dirichlet_residual < tolerance
            for rep in lifts.values()
        )
        and bochner.max_residual < tolerance
        and drift.n_violations == 0
        and lstar.max_residual < tolerance
        and lstar.max_norm_ratio <= lstar.c1_per_member
    )
    return payload


def _run_trel_sweep(config: ExperimentConfig, writer: RunWriter):
    """Shared (L, sigma) relaxation-time sweep used by galerkin and compare."""
    rows = []
    for L in config.L_grid:
        model = config.model(L)
        tensors = compute_chi(model)
        report = bounds_mod.compute_bounds(model, tensors, bounds_mod.PER_FREQUENCY)
        sigma_values = [(s, False) for s in config.sigma_grid]
        if config.include_sigma_star:
            sigma_values.append((bounds_mod.sigma_star(report), True))
        for sigma, is_star in sigma_values:
            result = galerkin_mod.relaxation_time_converged(
                model,
                sigma,
                config.truncation(),
                max_refinements=config.max_refinements,
            )
            nu = bounds_mod.rate_nu(report, sigma, c_universal=config.universal_constant)
            rows.append(
                {
                    "L": L,
                    "a": ";".join(f"{a:g}" for a in config.coefficients),
                    "k": ";".join(str(k) for k in config.frequencies),
                    "sigma": sigma,
                    "D": result.fine.max_hermite_degree,
                    "J": result.fine.max_fourier_frequency,
                    "t_rel": result.t_rel,
                    "abscissa": result.abscissa,
                    "lower_bound": report.t_rel_lower,
                    "nu_inverse": 1.0 / nu,
                    "converged": result.converged,
                    "relative_change": result.relative_change,
                    "at_sigma_star": is_star,
                    "upper_shape": bounds_mod.upper_bound_proxy(report, sigma),
                }
            )
            writer.log(
                f"trel: L={L:g} sigma={sigma:.6g} t_rel={result.t_rel:.6g} "
                f"converged={result.converged}"
            )
    return rows


_SWEEP_COLUMNS = [
    "L",
    "a",
    "k",
    "sigma",
    "D",
    "J",
    "t_rel",
    "abscissa",
    "lower_bound",
    "nu_inverse",
    "converged",
    "relative_change",
    "at_sigma_star",
]


def cmd_galerkin(config: ExperimentConfig, writer: RunWriter) -> int:
    verification = {}
    for L in config.L_grid:
        verification[f"L={L:g}"] = _verification_payload(config, config.model(L))
    writer.write_json("verification_report.json", {"models": verification})

    if config.export_operator:
        import io

        op = galerkin_mod.build_operator(
            config.model(), config.truncation(), config.sigma_grid[0]
        )
        buffer = io.StringIO()
        buffer.write(f"# config_hash={writer.digest} srdlab_version={__version__}\n")
        galerkin_mod.export_triplets(op, buffer)
        writer.write_bytes("operator.txt", buffer.getvalue().encode("utf-8"))

    rows = _run_trel_sweep(config, writer)
    writer.write_csv(
        "trel_sweep.csv", _SWEEP_COLUMNS, [[row[c] for c in _SWEEP_COLUMNS] for row in rows]
    )

    from .reporting import figure_trel_sweep

    writer.write_figure("trel_sweep.png", figure_trel_sweep(rows, writer.digest))

    all_converged = all(row["converged"] for row in rows)
    all_verified = all(entry["all_pass"] for entry in verification.values())
    if not all_converged:
        print("warning: some sweep rows did not converge under the truncation policy", file=sys.stderr)
    return EXIT_OK if (all_converged and all_verified) else EXIT_NONCONVERGED


def cmd_compare(config: ExperimentConfig, writer: RunWriter) -> int:
    rows = _run_trel_sweep(config, writer)
    ratios = [row["t_rel"] / row["upper_shape"] for row in rows]
    c_fit = max(ratios)
    compare_rows = []
    for row, ratio in zip(rows, ratios):
        compare_rows.append(
            row
            | {
                "ratio": ratio,
                "c_fit": c_fit,
                "sandwich_ok": bool(row["t_rel"] >= row["lower_bound"]),
                "upper_ok": bool(row["t_rel"] <= c_fit * row["upper_shape"] * (1 + 1e-12)),
            }
        )
    columns = _SWEEP_COLUMNS + ["upper_shape", "ratio", "c_fit", "sandwich_ok", "upper_ok"]
    writer.write_csv("compare.csv", columns, [[r[c] for c in columns] for r in compare_rows])

    star_rows = sorted((r for r in compare_rows if r["at_sigma_star"]), key=lambda r: r["L"])
    slope = None
    if len(star_rows) >= 2:
        logs_L = np.log([r["L"] for r in star_rows])
        logs_t = np.log([r["t_rel"] for r in star_rows])
        slope = float(np.polyfit(logs_L, logs_t, 1)[0])
    summary = {
        "c_fit": c_fit,
        "n_rows": len(compare_rows),
        "all_sandwich_ok": all(r["sandwich_ok"] for r in compare_rows),
        "all_upper_ok": all(r["upper_ok"] for r in compare_rows),
        "all_converged": all(r["converged"] for r in compare_rows),
        "loglog_slope_at_sigma_star": slope,
    }
    writer.write_json("compare.json", summary)

    from .reporting import figure_compare

    writer.write_figure("compare.png", figure_compare(compare_rows, c_fit, writer.digest))
    writer.log(f"compare: c_fit={c_fit!r} slope={slope!r}")
    return EXIT_OK if summary["all_converged"] else EXIT_NONCONVERGED


# -- entry point ---------------------------------------------------------------


def _apply_overrides(raw: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise ConfigError("--set", f"expected key.path=value, got {item!r}")
        key_path, _, value_text = item.partition("=")
        try:
            value = json.loads(value_text)
        except json.JSONDecodeError:
            value = value_text
        node = raw
        keys = key_path.split(".")
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(key_path, "path traverses a non-object")
        node[keys[-1]] = value
    return raw


COMMANDS = {
    "tensors": cmd_tensors,
    "bounds": cmd_bounds,
    "simulate": cmd_simulate,
    "galerkin": cmd_galerkin,
    "compare": cmd_compare,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="srdlab",
        description="Numerical laboratory for self-repelling diffusions on the flat circle",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="path to the JSON experiment config")
    parser.add_argument(
        "--output-dir", default=None, help=f"output directory (overrides ${ENV_OUTPUT_DIR} and config)"
    )
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY.PATH=VALUE",
        help="override a config entry (JSON-parsed value); highest precedence",
    )
    args = parser.parse_args(argv)

    try:
        try:
            raw = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise ConfigError("--config", f"file not found: {args.config}")
        except json.JSONDecodeError as err:
            raise ConfigError("--config", f"invalid JSON: {err}")
        raw = _apply_overrides(raw, args.overrides)
        config = parse_config(raw)
        out_dir = (
            args.output_dir
            if args.output_dir is not None
            else os.environ.get(ENV_OUTPUT_DIR, config.output_directory)
        )
        writer = RunWriter(Path(out_dir), config_hash(config), config.formats)
        writer.log(f"start {args.command} (srdlab {__version__})")
        code = COMMANDS[args.command](config, writer)
        writer.log(f"done {args.command} exit={code}")
        return code
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except galerkin_mod.BracketExhaustedError as err:
        print(f"numerical non-convergence: {err}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
