"""Command-line front end.

Subcommands: simulate, sweep, fit, predict-benchmark, pairwise-a, validate,
mcmc. All outputs are CSV/JSON written under --out-dir; every command with a
seed is end-to-end deterministic. Exit codes: 0 success, 1 usage or config
error, 2 numerical failure. stdout stays quiet; diagnostics go to stderr.
"""

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .exceptions import (
    ConfigError,
    InputValidationError,
    MggpError,
)
from .gp import NoiseSpec, dataset_from_csv, dataset_to_csv
from .groups import GroupSpace
from .harness import (
    BENCHMARK_MODELS,
    default_a_grid,
    likelihood_sweep,
    prediction_benchmark,
)
from .inference import (
    PriorSpec,
    fit_mle,
    pairwise_distance_learning,
    sample_mcmc,
    split_rhat,
)
from .kernels import FAMILIES, kernel_from_dict
from .simulate import ScenarioSpec, generate
from .validation import (
    check_categorical_matrix,
    check_homogeneous_bound,
    check_two_group_spectral,
    default_frequency_grid,
    monte_carlo_pd,
    rbf_spectral_densities,
)

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: line {exc.lineno} col {exc.colno}") from exc


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(v):
    if isinstance(v, float) and math.isnan(v):
        return ""
    return repr(float(v))


def _out_dir(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_kernel(path):
    doc = _load_json(path)
    try:
        return kernel_from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad kernel config {path}: {exc}") from exc


def cmd_simulate(args):
    doc = _load_json(args.config)
    if "seed" not in doc:
        doc["seed"] = 0
        seed_defaulted = True
    else:
        seed_defaulted = False
    if args.seed is not None:
        doc["seed"] = args.seed
        seed_defaulted = False
    scenario = ScenarioSpec.from_dict(doc)
    data = generate(scenario)
    out = _out_dir(args)
    data_path = out / "dataset.csv"
    dataset_to_csv(data, scenario.space(), data_path)
    report = {
        "name": "simulate",
        "config": scenario.to_dict(),
        "seed": scenario.seed,
        "rows": int(data.n),
        "artifacts": {"dataset": data_path.name},
    }
    if seed_defaulted:
        report["warnings"] = ["seed missing from config; defaulted to 0"]
    _write_json(report, out / "simulate_report.json")
    return 0


def _parse_grid(text):
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad a-grid {text!r}: {exc}") from exc


def cmd_sweep(args):
    kernel = _load_kernel(args.kernel)
    if kernel.family != "mg_rbf":
        raise ConfigError("sweep expects an mg_rbf kernel config")
    space = kernel.space
    data = dataset_from_csv(args.data, space)
    grid = _parse_grid(args.a_grid) if args.a_grid else default_a_grid()
    rows = likelihood_sweep(
        data,
        space,
        a_grid=grid,
        sigma2=kernel.sigma2,
        b=kernel.b,
        tau2=args.tau2,
        profile=args.profile,
        fit_options={"seed": args.seed or 0},
    )
    out = _out_dir(args)
    path = out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["a", "loglik_mggp", "loglik_sgp", "loglik_ugp", "loglik_hgp"])
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in ("a", "loglik_mggp", "loglik_sgp", "loglik_ugp", "loglik_hgp")])
    return 0


def cmd_fit(args):
    kernel = _load_kernel(args.kernel)
    data = dataset_from_csv(args.data, kernel.space)
    if args.per_group_noise:
        noise = NoiseSpec.per_group(np.full(kernel.space.k, 0.1))
    else:
        noise = NoiseSpec.shared(0.1)
    free = tuple(args.free.split(",")) if args.free else None
    result = fit_mle(
        kernel,
        data,
        noise,
        free=free,
        restarts=args.restarts,
        max_iter=args.max_iter,
        seed=args.seed or 0,
    )
    out = _out_dir(args)
    doc = result.to_dict()
    doc["kernel"] = result.kernel.to_dict()
    doc["seed"] = args.seed or 0
    _write_json(doc, out / "fit.json")
    return 0


def cmd_predict_benchmark(args):
    doc = _load_json(args.scenario)
    if args.seed is not None:
        doc["seed"] = args.seed
    scenario = ScenarioSpec.from_dict(doc)
    models = tuple(args.models.split(",")) if args.models else BENCHMARK_MODELS
    for m in models:
        if m not in BENCHMARK_MODELS:
            raise ConfigError(f"unknown model {m!r}; choose from {BENCHMARK_MODELS}")
    report = prediction_benchmark(
        scenario,
        models=models,
        split=args.split,
        split_seed=scenario.seed,
        fit_options={"restarts": args.restarts, "max_iter": args.max_iter},
    )
    report["name"] = "predict-benchmark"
    report["seed"] = scenario.seed
    out = _out_dir(args)
    _write_json(report, out / "benchmark_report.json")
    return 0


def cmd_pairwise_a(args):
    space = GroupSpace.from_csv(args.space)
    data = dataset_from_csv(args.data, space)
    family = args.family
    if family not in FAMILIES:
        raise ConfigError(f"unknown kernel family {family!r}")

    def factory(pair_space, p):
        return FAMILIES[family](pair_space, p)

    result = pairwise_distance_learning(
        data,
        space,
        kernel_factory=factory,
        noise_mode="per-group" if args.per_group_noise else "shared",
        restarts=args.restarts,
        max_iter=args.max_iter,
        seed=args.seed or 0,
    )
    out = _out_dir(args)
    path = out / "pairwise_a.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group"] + list(result.labels))
        for i, lab in enumerate(result.labels):
            row = [lab]
            for j in range(len(result.labels)):
                if i == j:
                    row.append("")
                elif math.isnan(result.a_hat[i, j]):
                    row.append("missing")
                else:
                    row.append(_fmt(math.log10(result.a_hat[i, j])))
            writer.writerow(row)
    return 0


def cmd_validate(args):
    doc = _load_json(args.config)
    if args.mode == "categorical":
        if "homogeneous" in doc:
            spec = doc["homogeneous"]
            report = check_homogeneous_bound(int(spec["k"]), float(spec["b"]))
        elif "matrix" in doc:
            report = check_categorical_matrix(np.asarray(doc["matrix"], dtype=float))
        else:
            raise ConfigError("categorical config needs 'matrix' or 'homogeneous'")
    elif args.mode == "spectral":
        try:
            rho_w, rho_c = rbf_spectral_densities(
                doc["sigma2"], doc["a"], doc["b"], doc["p"]
            )
        except KeyError as exc:
            raise ConfigError(f"spectral config missing {exc}") from exc
        grid = default_frequency_grid(
            doc.get("omega_low", 1e-3), doc.get("omega_high", 1e2), doc.get("grid_size", 201)
        )
        report = check_two_group_spectral(rho_w, rho_c, grid)
    elif args.mode == "monte-carlo":
        if "kernel" not in doc:
            raise ConfigError("monte-carlo config needs a 'kernel' document")
        try:
            kernel = kernel_from_dict(doc["kernel"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad kernel document: {exc}") from exc
        report = monte_carlo_pd(
            kernel,
            trials=int(doc.get("trials", 10)),
            n=int(doc.get("n", 50)),
            seed=args.seed if args.seed is not None else int(doc.get("seed", 0)),
        )
    else:
        raise ConfigError(f"unknown validate mode {args.mode!r}")
    out = _out_dir(args)
    _write_json(report.to_dict(), out / "validate_report.json")
    return 0


def cmd_mcmc(args):
    kernel = _load_kernel(args.kernel)
    data = dataset_from_csv(args.data, kernel.space)
    priors = PriorSpec()
    if args.priors:
        doc = _load_json(args.priors)
        kwargs = {}
        for name in ("a", "b", "sigma2", "tau2"):
            if name in doc:
                kwargs[name] = tuple(doc[name])
        if "beta_mean" in doc:
            kwargs["beta_mean"] = np.asarray(doc["beta_mean"], dtype=float)
        if "beta_precision" in doc:
            kwargs["beta_precision"] = np.asarray(doc["beta_precision"], dtype=float)
        priors = PriorSpec(**kwargs)
    chains = sample_mcmc(
        kernel,
        data,
        priors,
        chains=args.chains,
        warmup=args.warmup,
        draws=args.draws,
        seed=args.seed or 0,
    )
    out = _out_dir(args)
    for idx, chain in enumerate(chains):
        path = out / f"mcmc_chain{idx}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(chain.names) + ["log_posterior"])
            for row, lp in zip(chain.samples, chain.log_posterior):
                writer.writerow([_fmt(v) for v in row] + [_fmt(lp)])
    rhat = split_rhat([c.samples for c in chains])
    summary = {
        "name": "mcmc",
        "seed": args.seed or 0,
        "chains": len(chains),
        "warmup": args.warmup,
        "draws": args.draws,
        "acceptance_rates": [float(c.acceptance_rate) for c in chains],
        "split_rhat": {name: float(r) for name, r in zip(chains[0].names, rhat)},
        "posterior_median": {
            name: float(np.median(np.concatenate([c.samples[:, i] for c in chains])))
            for i, name in enumerate(chains[0].names)
        },
        "artifacts": {"chains": [f"mcmc_chain{i}.csv" for i in range(len(chains))]},
    }
    _write_json(summary, out / "mcmc_summary.json")
    return 0


def _build_parser():
    parser = _Parser(prog="mggp", description=__doc__)
    parser.add_argument("--seed", type=int, default=None, help="override config seeds")
    parser.add_argument("--out-dir", default=".", help="directory for output files")
    parser.add_argument("--threads", type=int, default=1, help="reserved; runs are single-process")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a synthetic dataset from a scenario config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="log marginal likelihood across a grid of a values")
    p.add_argument("--data", required=True)
    p.add_argument("--kernel", required=True)
    p.add_argument("--a-grid", default=None, help="comma-separated a values")
    p.add_argument("--tau2", type=float, default=0.1)
    p.add_argument("--profile", action="store_true", help="re-fit sigma2,b,tau2 per grid point")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="maximum likelihood fit of a kernel config")
    p.add_argument("--data", required=True)
    p.add_argument("--kernel", required=True)
    p.add_argument("--free", default=None, help="comma-separated free parameter names")
    p.add_argument("--per-group-noise", action="store_true")
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=150)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict-benchmark", help="split/fit/predict benchmark on a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--split", type=float, default=0.5)
    p.add_argument("--models", default=None, help="comma-separated subset of sgp,ugp,hgp,mggp")
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--max-iter", type=int, default=100)
    p.set_defaults(func=cmd_predict_benchmark)

    p = sub.add_parser("pairwise-a", help="learn pairwise group distances via two-group fits")
    p.add_argument("--data", required=True)
    p.add_argument("--space", required=True, help="group-space CSV with labels and distances")
    p.add_argument("--family", default="mg_rbf")
    p.add_argument("--per-group-noise", action="store_true")
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--max-iter", type=int, default=100)
    p.set_defaults(func=cmd_pairwise_a)

    p = sub.add_parser("validate", help="positive-definiteness checks")
    p.add_argument("--mode", required=True, choices=["categorical", "spectral", "monte-carlo"])
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("mcmc", help="adaptive random-walk Metropolis over the posterior")
    p.add_argument("--data", required=True)
    p.add_argument("--kernel", required=True)
    p.add_argument("--priors", default=None)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--draws", type=int, default=1000)
    p.set_defaults(func=cmd_mcmc)

    return parser


def main(argv=None):
    parser = _build_parser()
    started = time.perf_counter()
    try:
        args = parser.parse_args(argv)
        code = args.func(args)
    except (ConfigError, InputValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except MggpError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    print(f"done in {time.perf_counter() - started:.2f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
