"""Experiment runner: spectra, samplers, estimators, bounds, and the two
benchmark pipelines (first-order bias grids and the Ising estimator sweeps).

Configs are JSON documents; every parameter is validated against the module
preconditions before any computation starts (exit code 2 on rejection, 1 on
runtime failure). CSV outputs carry a `#`-prefixed metadata header (seed,
config hash, timestamp); re-running a config with the same seed reproduces
the file byte-for-byte except for the timestamp line. Trials may run on a
thread pool; per-trial seeds and a deterministic final sort keep the output
independent of the thread count.
"""

import argparse
import concurrent.futures
import hashlib
import json
import sys
import time

import numpy as np

from .estimators import (
    EstimationError,
    PhaseModel,
    TaggedSample,
    bootstrap,
    mean_estimate,
    mpe_estimate,
    nme_estimate,
    pec_average,
    shifted_rescaled_mean,
)
from ._maximize import FlatObjectiveError
from .kernels import Fejer, Gaussian
from .spectral import (
    NoisySpec,
    PromiseInterval,
    SpectralDistribution,
    filter_samples,
    filtered_pdf,
    sample_noisy,
)
from . import bounds as bounds_mod
from . import qpesim


class ConfigError(ValueError):
    """A config parameter violates a module precondition."""


# ---------------------------------------------------------------------------
# config plumbing

def _config_hash(config: dict) -> str:
    # threads/out/seed are execution mechanics, not part of the experiment
    canon = json.dumps(
        {k: v for k, v in config.items() if k not in ("threads", "out", "seed")},
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def _get(config: dict, key: str, default=None, required: bool = False):
    if required and key not in config:
        raise ConfigError(f"missing config key: {key}")
    return config.get(key, default)


def _ising_spec(config: dict) -> qpesim.IsingSpec:
    sub = _get(config, "ising", {})
    spec = qpesim.IsingSpec(
        n_sites=int(_get(sub, "n_sites", 4)),
        field=float(_get(sub, "field", 0.27)),
        coupling=float(_get(sub, "coupling", -0.46)),
        prep_angle=float(_get(sub, "prep_angle", 0.8)),
    )
    _require(spec.n_sites <= 12, "ising.n_sites must be at most 12")
    return spec


def _interval(config: dict, default=None) -> PromiseInterval:
    sub = _get(config, "interval", None)
    if sub is None:
        if default is not None:
            return default
        raise ConfigError("missing config key: interval")
    width = float(_get(sub, "width", required=True))
    _require(width > 0, "interval.width must be positive")
    try:
        return PromiseInterval(
            phi_guess=float(_get(sub, "phi_guess", required=True)),
            width=width,
            inner_buffer=float(_get(sub, "inner_buffer", width / 6.0)),
            outer_buffer=float(_get(sub, "outer_buffer", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid interval: {exc}") from exc


def _header_lines(config: dict, seed: int) -> list:
    return [
        f"# seed: {seed}",
        f"# config: {_config_hash(config)}",
        f"# timestamp: {time.strftime('%Y-%m-%dT%H:%M:%S', time.gmtime())}",
    ]


def _write_lines(path, lines):
    text = "\n".join(lines) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _derived_seed(*entropy) -> int:
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# subcommands

def run_spectrum(config: dict, seed: int, out):
    spec = _ising_spec(config)
    sd = qpesim.ising_spectrum(spec)
    lines = _header_lines(config, seed) + [
        f"{float(p)!r},{float(w)!r}" for p, w in zip(sd.phases, sd.weights)
    ]
    _write_lines(out, lines)
    return 0


def _sample_records(config: dict, seed: int):
    """Shared by `sample`: returns (records, report)."""
    source = _get(config, "source", "circuit")
    _require(source in ("circuit", "analytic"), "source must be circuit or analytic")
    shots = int(_get(config, "shots", required=True))
    _require(shots >= 1, "shots must be at least 1")
    interval = _interval(config)
    if source == "circuit":
        spec = _ising_spec(config)
        n_ctrl = int(_get(config, "n_ctrl", 4))
        _require(1 <= n_ctrl <= 12, "n_ctrl must lie in 1..12")
        circuit = qpesim.build_qpe_circuit(spec, n_ctrl)
        fidelity = float(_get(config, "fidelity", 1.0))
        _require(0 < fidelity <= 1, "fidelity must lie in (0, 1]")
        noise = qpesim.NoiseConfig(
            qpesim.calibrate_perr(circuit.n_qubits, circuit.n_moments, fidelity),
            noise_during_qft=bool(_get(config, "noise_during_qft", True)),
        )
        kind = _get(config, "kind", "plain")
        if kind == "pec":
            _require(fidelity < 1, "PEC sampling needs fidelity < 1")
            x0, x1, report = qpesim.filtered_pec_sampler(
                circuit, noise, interval, fidelity, shots, seed
            )
            return x0 + x1, report
        _require(kind == "plain", "kind must be plain or pec")
        return qpesim.filtered_sampler(circuit, noise, interval, shots, seed)
    # analytic: Gaussian-kernel mixture sampling of a stated spectrum
    sigma = float(_get(config, "sigma", required=True))
    _require(sigma > 0, "sigma must be positive")
    fidelity = float(_get(config, "fidelity", 1.0))
    _require(0 < fidelity <= 1, "fidelity must lie in (0, 1]")
    entries = _get(config, "spectrum", required=True)
    sd = SpectralDistribution([e[0] for e in entries], [e[1] for e in entries])
    spec = NoisySpec(sd, Gaussian(sigma), fidelity)
    rng = np.random.default_rng(seed)
    raw = sample_noisy(spec, rng, shots)
    kept, report = filter_samples(raw, interval)
    records = [qpesim.ShotRecord(float(x), 0, False, float("nan")) for x in kept]
    return records, report


def run_sample(config: dict, seed: int, out):
    records, report = _sample_records(config, seed)
    lines = _header_lines(config, seed)
    lines.append(f"# accepted: {report.accepted} of {report.total_shots}")
    lines.append("x,branch,had_error,phi_ref")
    for r in records:
        lines.append(f"{_fmt(r.x)},{r.branch},{int(r.had_error)},{_fmt(r.phi_ref)}")
    _write_lines(out, lines)
    return 0


def _read_sample_csv(path):
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("x,"):
                continue
            x, branch, had_error, phi_ref = line.split(",")
            records.append(
                qpesim.ShotRecord(float(x), int(branch), bool(int(had_error)), float(phi_ref))
            )
    return records


def _model_from_config(config: dict, interval: PromiseInterval) -> PhaseModel:
    kind = _get(config, "kernel", "gaussian")
    if kind == "gaussian":
        sigma = float(_get(config, "sigma", required=True))
        _require(sigma > 0, "sigma must be positive")
        kernel = Gaussian(sigma)
    elif kind == "fejer":
        n_ctrl = int(_get(config, "n_ctrl", required=True))
        _require(1 <= n_ctrl <= 12, "n_ctrl must lie in 1..12")
        kernel = Fejer(2 ** n_ctrl)
    else:
        raise ConfigError("kernel must be gaussian or fejer")
    fidelity = float(_get(config, "fidelity", 1.0))
    overlap = float(_get(config, "overlap", 1.0))
    reg_const = float(_get(config, "reg_const", 0.0))
    _require(0 <= fidelity <= 1, "fidelity must lie in [0, 1]")
    _require(0 < overlap <= 1, "overlap must lie in (0, 1]")
    _require(reg_const >= 0, "reg_const must be non-negative")
    return PhaseModel(kernel, interval, fidelity=fidelity, overlap=overlap,
                      reg_const=reg_const)


def run_estimate(config: dict, seed: int, out):
    records = _read_sample_csv(_get(config, "samples", required=True))
    interval = _interval(config)
    estimator = _get(config, "estimator", required=True)
    boot_b = int(_get(config, "bootstrap_B", 0))
    _require(boot_b == 0 or boot_b >= 100,
             "bootstrap_B must be 0 (disabled) or at least 100")
    xs = [r.x for r in records if r.branch == 0]
    x1 = [r.x for r in records if r.branch == 1]
    rng = np.random.default_rng(seed)

    if estimator == "mean":
        closure = lambda s: mean_estimate(s)
        samples = xs
    elif estimator == "srm":
        w = _get(config, "noise_weight", None)
        if w is None:
            model = _model_from_config(config, interval)
            _require(isinstance(model.kernel, Gaussian),
                     "srm without an explicit noise_weight needs a gaussian kernel")
            closure = lambda s: shifted_rescaled_mean(
                s, interval.phi_guess, fidelity=model.fidelity,
                overlap=model.overlap, sigma=model.kernel.sigma,
                width=interval.width,
            )
        else:
            w = float(w)
            _require(0 <= w < 1, "noise_weight must lie in [0, 1)")
            closure = lambda s: shifted_rescaled_mean(s, interval.phi_guess, w=w)
        samples = xs
    elif estimator == "pec":
        tagged = [(r.x, r.branch) for r in records]
        closure = lambda recs: pec_average(
            [x for x, b in recs if b == 0], [x for x, b in recs if b == 1]
        )
        samples = tagged
    elif estimator == "fmpe":
        model = _model_from_config(config, interval)
        closure = lambda s: mpe_estimate(s, model)
        samples = xs
    elif estimator == "fnmpe":
        model = _model_from_config(config, interval)
        alpha_norm = float(_get(config, "alpha_norm", 1.0))
        _require(alpha_norm >= 1, "alpha_norm must be at least 1")
        tagged = [
            TaggedSample(r.x, r.branch, 1 if r.branch == 0 else -1) for r in records
        ]
        closure = lambda s: nme_estimate(s, model, alpha_norm=alpha_norm)
        samples = tagged
    else:
        raise ConfigError(f"unknown estimator: {estimator}")

    report = closure(samples)
    stderr = float("nan")
    if boot_b:
        stderr = bootstrap(closure, samples, boot_b, rng)
    payload = {
        "estimator": estimator,
        "estimate": report.estimate,
        "bootstrap_stderr": stderr,
        "accepted": len(samples),
        "at_boundary": report.at_boundary,
        "seed": seed,
        "config": _config_hash(config),
    }
    _write_lines(out, [json.dumps(payload, indent=2)])
    return 0


def run_bounds(config: dict, seed: int, out):
    sigma = float(_get(config, "sigma", required=True))
    a0 = float(_get(config, "overlap", required=True))
    fidelity = float(_get(config, "fidelity", 1.0))
    d = float(_get(config, "spurious_distance", required=True))
    _require(sigma > 0 and d > 0, "sigma and spurious_distance must be positive")
    _require(0 < a0 <= 1, "overlap must lie in (0, 1]")
    _require(0 < fidelity <= 1, "fidelity must lie in (0, 1]")
    interval = _interval(config)
    phi0 = float(_get(config, "phi0", interval.phi_guess))
    _require(bool(interval.contains(phi0)), "phi0 must lie inside the interval")
    model = PhaseModel(Gaussian(sigma), interval, fidelity=fidelity, overlap=a0)

    info = bounds_mod.fisher_information(model, phi0)
    info_dual = bounds_mod.fisher_information_curvature(model, phi0)
    payload = {
        "fisher_info": info,
        "fisher_info_curvature_form": info_dual,
        "score_zero_mean_residual": bounds_mod.score_zero_mean_check(model, phi0),
        "noiseless": {
            "bias_bound": None,
            "variance_bound": bounds_mod.gaussian_var_bound_noiseless(sigma),
            "valid": sigma <= interval.width / 6.0,
        },
        "gdn": {},
        "sigma_limits": {
            "refined": bounds_mod.gdn_sigma_limit(interval.width, fidelity, a0),
            "maintext": bounds_mod.gdn_sigma_limit_maintext(interval.width, fidelity, a0),
        },
        "seed": seed,
        "config": _config_hash(config),
    }
    rep0 = bounds_mod.gaussian_bias_bound_noiseless(sigma, d, a0, interval.width)
    payload["noiseless"]["bias_bound"] = rep0.bias_bound
    payload["noiseless"]["valid"] = rep0.valid
    rep1 = bounds_mod.gaussian_bounds_gdn(sigma, d, a0, fidelity, interval.width)
    payload["gdn"] = {
        "bias_bound": rep1.bias_bound,
        "variance_bound": rep1.variance_bound,
        "valid": rep1.valid,
        "reason": rep1.reason,
    }
    reg_const = float(_get(config, "reg_const", 0.0))
    alpha_norm = float(_get(config, "alpha_norm", 1.0))
    h_norm = float(_get(config, "h_norm", 0.0))
    model_c = PhaseModel(Gaussian(sigma), interval, fidelity=fidelity, overlap=a0,
                         reg_const=reg_const)
    rep2 = bounds_mod.nme_bounds(model_c, phi0, alpha_norm, h_norm)
    payload["nme"] = {
        "bias_bound": rep2.bias_bound,
        "variance_bound": rep2.variance_bound,
        "fisher_info_reg": rep2.fisher_info,
    }
    gamma = float(_get(config, "gamma", 0.1))
    epsilon = float(_get(config, "epsilon", 1e-2))
    _require(gamma > 0 and epsilon > 0, "gamma and epsilon must be positive")
    t_star = bounds_mod.optimal_depth(gamma)
    grid = np.geomspace(t_star / 50, t_star * 50, 2001)
    costs = [bounds_mod.cost_model_gdn(gamma, epsilon, a0, t) for t in grid]
    payload["cost_model"] = {
        "gamma": gamma,
        "optimal_depth": t_star,
        "grid_argmin": float(grid[int(np.argmin(costs))]),
        "cost_at_optimum": bounds_mod.cost_model_gdn(gamma, epsilon, a0, t_star),
    }
    _write_lines(out, [json.dumps(payload, indent=2)])
    return 0


def run_fig3(config: dict, seed: int, out):
    """First-order bias of moment-projection vs mean on a (phi0, phi1) grid."""
    sigma = float(_get(config, "sigma", 0.3))
    a0 = float(_get(config, "overlap", 0.7))
    _require(sigma > 0, "sigma must be positive")
    _require(0 < a0 < 1, "overlap must lie in (0, 1) for a two-phase grid")
    interval = _interval(config, PromiseInterval(0.0, 2.0, 1.0 / 3.0))
    p0_lo, p0_hi, p0_n = _get(config, "phi0_grid", [-0.5, 0.5, 11])
    p1_lo, p1_hi, p1_n = _get(config, "phi1_grid", [1.45, 3.0, 12])
    half = interval.width / 2 - interval.inner_buffer
    _require(p0_lo >= interval.phi_guess - half and p0_hi <= interval.phi_guess + half,
             "phi0 grid must respect the inner buffer")
    model = PhaseModel(Gaussian(sigma), interval)
    rows = []
    for phi0 in np.linspace(p0_lo, p0_hi, int(p0_n)):
        for phi1 in np.linspace(p1_lo, p1_hi, int(p1_n)):
            if interval.contains(phi1):
                rows.append((phi0, phi1, float("nan"), float("nan"), float("nan")))
                continue
            spec = NoisySpec(
                SpectralDistribution([phi0, phi1], [a0, 1.0 - a0]), Gaussian(sigma), 1.0
            )
            dens = lambda x: filtered_pdf(spec, interval, x)
            b_mproj = abs(bounds_mod.first_order_bias(dens, model, phi0))
            b_mean = bounds_mod.mean_estimator_bias(dens, interval, phi0)
            ratio = b_mproj / b_mean if b_mean > 0 else float("inf")
            rows.append((phi0, phi1, b_mproj, b_mean, ratio))
    lines = _header_lines(config, seed) + ["phi0,phi1,b_mproj,b_mean,ratio"]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    _write_lines(out, lines)
    return 0


# ---------------------------------------------------------------------------
# estimator sweep (the Ising benchmark)

def _fig5_trial(args):
    """One (sweep point, trial): run both samplers, apply all four estimators."""
    (circuit, fidelity, interval, a0, shots, master_seed, point, trial, boot_b) = args
    noise = qpesim.NoiseConfig(
        qpesim.calibrate_perr(circuit.n_qubits, circuit.n_moments, fidelity)
    )
    seed_plain = _derived_seed(master_seed, point, trial, 0)
    seed_pec = _derived_seed(master_seed, point, trial, 1)
    seed_boot = _derived_seed(master_seed, point, trial, 2)
    records, _ = qpesim.filtered_sampler(circuit, noise, interval, shots, seed_plain)
    x0, x1, _ = qpesim.filtered_pec_sampler(
        circuit, noise, interval, fidelity, shots, seed_pec
    )
    xs = np.array([r.x for r in records])
    model_gdn = PhaseModel(Fejer(circuit.K), interval, fidelity=fidelity, overlap=a0)
    model_plain = PhaseModel(Fejer(circuit.K), interval)
    tagged = [TaggedSample(r.x, 0, 1) for r in x0] + [
        TaggedSample(r.x, 1, -1) for r in x1
    ]
    alpha_norm = 2.0 / fidelity - 1.0

    runs = {
        "mean": (lambda s: mean_estimate(s), list(xs)),
        "fmpe_gdn": (lambda s: mpe_estimate(s, model_gdn), list(xs)),
        "pec_average": (
            lambda recs: pec_average(
                [x for x, b in recs if b == 0], [x for x, b in recs if b == 1]
            ),
            [(r.x, 0) for r in x0] + [(r.x, 1) for r in x1],
        ),
        "fnmpe": (lambda s: nme_estimate(s, model_plain, alpha_norm=alpha_norm), tagged),
    }
    out = []
    rng = np.random.default_rng(seed_boot)
    for name, (closure, samples) in runs.items():
        try:
            est = closure(samples).estimate
            stderr = bootstrap(closure, samples, boot_b, rng) if boot_b else float("nan")
        except (EstimationError, FlatObjectiveError):
            est, stderr = float("nan"), float("nan")
        out.append((name, circuit.n_ctrl, shots, trial, est, stderr))
    return out


def _run_fig5(config: dict, seed: int, out, sweep: str):
    spec = _ising_spec(config)
    fidelity = float(_get(config, "fidelity", 1.0 / np.e))
    _require(0 < fidelity < 1, "fidelity must lie strictly inside (0, 1)")
    trials = int(_get(config, "trials", 200))
    _require(trials >= 1, "trials must be at least 1")
    boot_b = int(_get(config, "bootstrap_B", 500))
    _require(boot_b == 0 or boot_b >= 100,
             "bootstrap_B must be 0 (disabled) or at least 100")
    threads = int(_get(config, "threads", 1))
    _require(threads >= 1, "threads must be at least 1")
    sd = qpesim.ising_spectrum(spec)
    default_iv = PromiseInterval(-0.75 * np.pi, np.pi / 2, np.pi / 12, 0.5)
    interval = _interval(config, default_iv)
    a0 = sd.weight_in(interval)
    _require(a0 > 0, "no spectral weight inside the interval")

    if sweep == "shots":
        n_list = [int(_get(config, "n_ctrl", 8))]
        shots_list = [int(s) for s in _get(config, "shots_list", [250, 1000, 4000])]
    else:
        n_list = [int(n) for n in _get(config, "n_list", [4, 5, 6, 7, 8])]
        shots_list = [int(_get(config, "shots", 1000))]
    _require(all(1 <= n <= 12 for n in n_list), "control sizes must lie in 1..12")
    _require(all(s >= 1 for s in shots_list), "shot counts must be positive")

    jobs = []
    point = 0
    for n in n_list:
        circuit = qpesim.build_qpe_circuit(spec, n)
        circuit._plan  # compile before fan-out so worker threads share it
        for shots in shots_list:
            for trial in range(trials):
                jobs.append(
                    (circuit, fidelity, interval, a0, shots, seed, point, trial, boot_b)
                )
            point += 1
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_fig5_trial, jobs))
    else:
        results = [_fig5_trial(job) for job in jobs]
    rows = sorted(
        (row for batch in results for row in batch),
        key=lambda r: (r[0], r[1], r[2], r[3]),
    )
    lines = _header_lines(config, seed) + ["estimator,n,M_shots,trial,estimate,stderr_bootstrap"]
    lines += [
        f"{name},{n},{shots},{trial},{_fmt(est)},{_fmt(stderr)}"
        for name, n, shots, trial, est, stderr in rows
    ]
    _write_lines(out, lines)
    return 0


def run_fig5_shots(config, seed, out):
    return _run_fig5(config, seed, out, "shots")


def run_fig5_qubits(config, seed, out):
    return _run_fig5(config, seed, out, "qubits")


# ---------------------------------------------------------------------------

_COMMANDS = {
    "spectrum": run_spectrum,
    "sample": run_sample,
    "estimate": run_estimate,
    "bounds": run_bounds,
    "fig3": run_fig3,
    "fig5-shots": run_fig5_shots,
    "fig5-qubits": run_fig5_qubits,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fmpe",
        description="Filtered moment-projection phase estimation toolkit",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", help="JSON config file (defaults to {})")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--out", help="output path (defaults to stdout)")
    parser.add_argument("--threads", type=int, help="thread pool size for trials")
    args = parser.parse_args(argv)

    try:
        config = {}
        if args.config:
            with open(args.config) as fh:
                config = json.load(fh)
        if not isinstance(config, dict):
            raise ConfigError("config must be a JSON object")
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be at least 1")
            config["threads"] = args.threads
        seed = args.seed if args.seed is not None else int(config.get("seed", 0))
        out = args.out if args.out is not None else config.get("out")
    except (ConfigError, json.JSONDecodeError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        return _COMMANDS[args.command](config, seed, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
