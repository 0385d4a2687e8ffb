"""Command-line driver.

Subcommands: gen-data, fit, predict, tradeoff, verify. Flags mirror
ExperimentConfig fields in kebab-case; a flat key=value file can be passed
via --config, with explicit flags taking precedence. DPNTK_SEED provides a
default seed. Exit codes: 0 success, 1 usage error, 2 data error,
3 infeasible budget (only under --strict).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import warnings

import numpy as np

from .data import CsvParseError, generate_synthetic, load_features_csv, save_features_csv
from .harness import ExperimentConfig, parse_config_file, run_tradeoff, verify_bounds, write_bound_report
from .kernel import discrete_kernel, sample_weights
from .persistence import ModelFormatError, load_model, save_model
from .privacy import BudgetInfeasibleError, DPParams, check_dp_conditions, max_k
from .regression import NTKModel, PrivateNTKModel, fit, fit_private, predict, predict_private
from .rng import RngStream

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INFEASIBLE = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise _UsageError(message)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--n-cls", type=int, dest="n_cls")
    p.add_argument("--m", type=int)
    p.add_argument("--lambda", type=float, dest="lam")
    p.add_argument("--sigma", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--delta", type=float, dest="delta_total")
    p.add_argument("--epsilon-grid", dest="epsilon_grid",
                   help="comma-separated increasing list")
    p.add_argument("--k-policy", dest="k_policy", choices=["max-k", "fixed"])
    p.add_argument("--k", type=int, dest="k_fixed")
    p.add_argument("--k-cap", type=int, dest="k_cap")
    p.add_argument("--train-frac", type=float, dest="train_frac")
    p.add_argument("--separation", type=float)
    p.add_argument("--cluster-std", type=float, dest="cluster_std")
    p.add_argument("--x-budget-frac", type=float, dest="x_budget_frac")
    p.add_argument("--gamma", type=float)
    p.add_argument("--c-rho", type=float, dest="c_rho")
    p.add_argument("--normalize", action="store_true", default=None)
    p.add_argument("--no-normalize", action="store_false", dest="normalize", default=None)
    p.add_argument("--strict", action="store_true", default=None)
    p.add_argument("--input", dest="input_path")
    p.add_argument("--out", dest="output_path")


def _build_config(args: argparse.Namespace) -> ExperimentConfig:
    values: dict = {}
    env_seed = os.environ.get("DPNTK_SEED")
    if env_seed is not None:
        values["seed"] = int(env_seed)
    if getattr(args, "config", None):
        values.update(parse_config_file(args.config))
    for key in (
        "seed", "n", "d", "n_cls", "m", "lam", "sigma", "beta", "delta_total",
        "epsilon_grid", "k_policy", "k_fixed", "k_cap", "train_frac",
        "separation", "cluster_std", "x_budget_frac", "gamma", "c_rho",
        "normalize", "strict", "input_path", "output_path",
    ):
        val = getattr(args, key, None)
        if val is not None:
            values[key] = val
    if isinstance(values.get("epsilon_grid"), str):
        values["epsilon_grid"] = tuple(float(v) for v in values["epsilon_grid"].split(","))
    if "seed" not in values:
        raise _UsageError("a seed is required (--seed, config file, or DPNTK_SEED)")
    return ExperimentConfig(**values)


def _cmd_gen_data(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    if not cfg.output_path:
        raise _UsageError("gen-data requires --out")
    data = generate_synthetic(
        cfg.n, cfg.d, cfg.n_cls, cfg.separation, RngStream(cfg.seed),
        cluster_std=cfg.cluster_std,
    )
    save_features_csv(data, cfg.output_path)
    print(f"wrote {data.n} rows x {data.dim} features to {cfg.output_path}")
    return EXIT_OK


def _cmd_fit(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    if not cfg.input_path or not cfg.output_path:
        raise _UsageError("fit requires --input and --out")
    data = load_features_csv(cfg.input_path, normalize=cfg.normalize)
    root = RngStream(cfg.seed)
    w = sample_weights(cfg.m, data.dim, cfg.sigma, root)
    if not args.private:
        model: NTKModel | PrivateNTKModel = fit(data, w, cfg.lam)
    else:
        eps = args.epsilon
        if eps is None:
            raise _UsageError("fit --private requires --epsilon")
        dp_x = DPParams(eps * cfg.x_budget_frac, cfg.delta_total * cfg.x_budget_frac)
        dp_a = DPParams(
            eps * (1 - cfg.x_budget_frac), cfg.delta_total * (1 - cfg.x_budget_frac)
        )
        kern = discrete_kernel(data, w)
        if cfg.k_policy == "fixed":
            k = cfg.k_fixed
        else:
            k = max_k(
                dp_a.epsilon, dp_a.delta, data.n, cfg.sigma, data.bound_B,
                cfg.beta, kern.eta_min, cap=cfg.k_cap,
            )
        if k < 1:
            # No admissible draw count. Strict mode refuses; otherwise fall
            # back to the branch-selection minimum and let the report show
            # the failed conditions.
            fallback = max(1, math.ceil(8.0 * math.log(1.0 / dp_a.delta)))
            report = check_dp_conditions(
                dp_a, fallback, data.n, cfg.sigma, data.bound_B, cfg.beta,
                kern.eta_min, gamma=cfg.gamma, c_rho=cfg.c_rho,
            )
            if cfg.strict:
                raise BudgetInfeasibleError(report)
            warnings.warn(f"no admissible k; using k={fallback}: {report}")
            k = fallback
        model = fit_private(
            data, w, cfg.lam, k, dp_a, dp_x, cfg.beta, root.substream("fit"),
            enforce=cfg.strict, kernel=kern, gamma=cfg.gamma, c_rho=cfg.c_rho,
        )
        if not model.condition_report.feasible:
            warnings.warn(f"budget conditions not met: {model.condition_report}")
    save_model(model, cfg.output_path)
    print(f"saved model to {cfg.output_path}")
    return EXIT_OK


def _cmd_predict(args: argparse.Namespace) -> int:
    if not args.model or not args.input_path:
        raise _UsageError("predict requires --model and --input")
    model = load_model(args.model)
    data = load_features_csv(args.input_path)
    lines = ["prediction,scores"]
    for i in range(data.n):
        if isinstance(model, PrivateNTKModel):
            scores = predict_private(model, data.features[i])
        else:
            scores = predict(model, data.features[i])
        if scores.shape[0] >= 2:
            label = int(np.argmax(scores))
        else:
            label = 1 if scores[0] >= 0 else -1
        lines.append(f"{label}," + ";".join(f"{s:.6g}" for s in scores))
    text = "\n".join(lines) + "\n"
    if args.output_path:
        with open(args.output_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_tradeoff(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    table = run_tradeoff(cfg)
    if not cfg.output_path:
        sys.stdout.write(table.csv_text())
    else:
        print(f"wrote {len(table.rows)} rows to {cfg.output_path}")
    if cfg.strict and any(not r.feasible for r in table.rows):
        print("strict mode: at least one epsilon was infeasible", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    checks = verify_bounds(cfg)
    if cfg.output_path:
        write_bound_report(checks, cfg.output_path)
    for c in checks:
        print(
            f"{c.name}: theoretical={c.theoretical:.6g} empirical={c.empirical:.6g} "
            f"{'pass' if c.passed else 'FAIL'}"
        )
    failed = [c for c in checks if not c.passed]
    if failed:
        print(f"{len(failed)} bound check(s) failed", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="dpntk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic clustered dataset CSV")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("fit", help="fit a model from a feature CSV")
    _add_config_flags(p)
    p.add_argument("--private", action="store_true")
    p.add_argument("--epsilon", type=float, help="total budget for a private fit")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("predict", help="predict with a saved model")
    p.add_argument("--model", required=False)
    p.add_argument("--input", dest="input_path")
    p.add_argument("--out", dest="output_path")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("tradeoff", help="sweep the epsilon grid and emit a CSV")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_tradeoff)

    p = sub.add_parser("verify", help="run the bound-verification report")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetInfeasibleError as exc:
        print(f"infeasible budget: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (CsvParseError, ModelFormatError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
