"""Command-line entry point: ``cognoise <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 sampler
diagnostics failed (outputs are still written). Errors are reported on
stderr as a single JSON object.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .design import (altruism_grid, number_grid, practice_trials, session_trials)
from .model import (IndividualParams, NumberParams, indifference_ratio, mean_choice_over_grid,
                    prob_A, prob_self, prob_self_linear)
from .simulate import HyperParams, recovery_hyper, simulate_dataset

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIAGNOSTIC = 0, 2, 3, 4
RHAT_LIMIT = 1.05
CURVE_POINTS = 200
CURVE_RANGE = (0.05, 2.0)
DEFAULT_STATEMENTS = ("{nu}_T > {nu}_B", "mu_r < 1", "delta_T > delta_B")


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


class DiagnosticFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


# defaults applied after --config is merged; None means "required or unset"
DEFAULTS = {
    "design": {"group": "B"},
    "curves": {"beta": 0.3, "mu_r": 1.0, "nu_so": [0.25, 0.5, 1.0], "nu_b": [0.25],
               "rule": "altruism"},
    "simulate": {"n_baseline": 40, "n_treatment": 40, "task": "altruism", "max_rounds": None,
                 "hyper": None, "trials": None},
    "fit": {"variant": "altruism-full", "data": None, "chains": 4, "warmup": 500, "draws": 1000,
            "target_accept": 0.8, "max_depth": 10, "allow_diagnostic_failure": False},
    "compare": {"fits": None, "task": None},
    "recover": {"truth": None, "fit": None, "mass": 0.95},
    "report": {"fit": None, "statement": None, "no_default_statements": False},
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", type=Path)
    common.add_argument("--config", type=Path, help="JSON file with option values")
    common.add_argument("--threads", type=int)

    p = _Parser(prog="cognoise", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("design", parents=[common], help="write trials.csv and practice.csv")
    s.add_argument("--group", choices=("B", "T"))

    s = sub.add_parser("curves", parents=[common], help="choice curves over the ratio grid")
    s.add_argument("--beta", type=float)
    s.add_argument("--mu-r", dest="mu_r", type=float)
    s.add_argument("--nu-so", dest="nu_so", type=_floats)
    s.add_argument("--nu-b", dest="nu_b", type=_floats)
    s.add_argument("--rule", choices=("altruism", "linear", "number"))

    s = sub.add_parser("simulate", parents=[common], help="simulate choices.csv and truth.json")
    s.add_argument("--n-baseline", dest="n_baseline", type=int)
    s.add_argument("--n-treatment", dest="n_treatment", type=int)
    s.add_argument("--hyper", type=Path, help="hyperparameter JSON (default: recovery values)")
    s.add_argument("--trials", type=Path, help="trials.csv to use instead of a fresh design")
    s.add_argument("--task", choices=("altruism", "number", "combined"))
    s.add_argument("--max-rounds", dest="max_rounds", type=int,
                   help="keep only the first N rounds of each task")

    s = sub.add_parser("fit", parents=[common], help="fit a model variant by NUTS")
    s.add_argument("--variant")
    s.add_argument("--data", type=Path)
    s.add_argument("--chains", type=int)
    s.add_argument("--warmup", type=int)
    s.add_argument("--draws", type=int)
    s.add_argument("--target-accept", dest="target_accept", type=float)
    s.add_argument("--max-depth", dest="max_depth", type=int)
    s.add_argument("--allow-diagnostic-failure", dest="allow_diagnostic_failure",
                   action="store_const", const=True)

    s = sub.add_parser("compare", parents=[common], help="WAIC comparison of fits")
    s.add_argument("fits", nargs="*", type=Path)
    s.add_argument("--task", choices=("altruism", "number"))

    s = sub.add_parser("recover", parents=[common], help="score a fit against truth.json")
    s.add_argument("--truth", type=Path)
    s.add_argument("--fit", type=Path)
    s.add_argument("--mass", type=float)

    s = sub.add_parser("report", parents=[common], help="markdown report of a fit")
    s.add_argument("--fit", type=Path)
    s.add_argument("--statement", action="append")
    s.add_argument("--no-default-statements", dest="no_default_statements",
                   action="store_const", const=True)
    return p


def resolve(argv=None, environ=None) -> argparse.Namespace:
    """Parse arguments, merge --config values and fill defaults."""
    environ = os.environ if environ is None else environ
    args = build_parser().parse_args(argv)
    cfg = {}
    if args.config is not None:
        if not args.config.is_file():
            raise ConfigError(f"config file not found: {args.config}")
        try:
            cfg = io.read_json(args.config)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})")
        if not isinstance(cfg, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
    known = set(DEFAULTS[args.command]) | {"seed", "out", "threads"}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise ConfigError(f"unknown config keys for {args.command}: {unknown}")
    for key, value in cfg.items():
        if getattr(args, key, None) in (None, []):
            if key in ("out", "hyper", "trials", "data", "truth", "fit") and value is not None:
                value = Path(value)
            if key == "fits" and value is not None:
                value = [Path(v) for v in value]
            setattr(args, key, value)
    for key, value in DEFAULTS[args.command].items():
        if getattr(args, key, None) in (None, []):
            setattr(args, key, value)
    if args.out is None:
        args.out = Path(".")
    if args.threads is None:
        env = environ.get("COGNOISE_THREADS")
        try:
            args.threads = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"COGNOISE_THREADS must be an integer, got {env!r}")
    if args.threads < 1:
        raise ConfigError("threads must be at least 1")
    return args


def _need_seed(args):
    if args.seed is None:
        raise ConfigError(f"{args.command} requires --seed")


def _need_file(path, what):
    if path is None:
        raise ConfigError(f"missing {what}")
    if not Path(path).is_file():
        raise ConfigError(f"{what} not found: {path}")


def _out_dir(args) -> Path:
    out = Path(args.out)
    if out.exists() and not out.is_dir():
        raise ConfigError(f"--out is not a directory: {out}")
    out.mkdir(parents=True, exist_ok=True)
    return out


# subcommands ---------------------------------------------------------------

def cmd_design(args) -> dict:
    seed = 0 if args.seed is None else args.seed
    out = _out_dir(args)
    trials = session_trials(seed, treatment=args.group == "T")
    io.write_trials(out / "trials.csv", trials)
    io.write_trials(out / "practice.csv", practice_trials())
    return {"trials": str(out / "trials.csv"), "n_trials": len(trials)}


def _curve_prob(rule, beta, mu_r, nu_so, nu_b, s, o):
    if rule == "number":
        return prob_A(NumberParams(nu_ab=nu_so, mu_rp=mu_r), s, o)
    p = IndividualParams(beta=beta, nu_so=nu_so, nu_b=nu_b, mu_r=mu_r)
    return (prob_self_linear if rule == "linear" else prob_self)(p, s, o)


def cmd_curves(args) -> dict:
    out = _out_dir(args)
    ratios = np.geomspace(*CURVE_RANGE, CURVE_POINTS)
    other = 1000.0
    grid = number_grid() if args.rule == "number" else altruism_grid()
    nu_b_values = [0.0] if args.rule == "number" else args.nu_b
    rows = []
    setting = 0
    try:
        for nu_so in args.nu_so:
            for nu_b in nu_b_values:
                probs = _curve_prob(args.rule, args.beta, args.mu_r, nu_so, nu_b,
                                    ratios * other, np.full_like(ratios, other))
                if args.rule == "number":
                    avg = mean_choice_over_grid(NumberParams(nu_so, args.mu_r), grid, "number")
                    star = float("nan")
                else:
                    p = IndividualParams(args.beta, nu_so, nu_b, args.mu_r)
                    avg = mean_choice_over_grid(p, grid, args.rule)
                    star = indifference_ratio(p) if args.rule == "altruism" else float("nan")
                for r, pr in zip(ratios, probs):
                    rows.append({"setting": setting, "rule": args.rule, "beta": args.beta,
                                 "mu_r": args.mu_r, "nu_so": nu_so, "nu_b": nu_b,
                                 "ratio": float(r), "probability": float(pr),
                                 "grid_average": avg, "indifference_ratio": star})
                setting += 1
    except ValueError as exc:
        raise ConfigError(str(exc))
    cols = ("setting", "rule", "beta", "mu_r", "nu_so", "nu_b", "ratio", "probability",
            "grid_average", "indifference_ratio")
    io.write_table(out / "curves.csv", cols, rows)
    return {"curves": str(out / "curves.csv"), "settings": setting}


def _select_design(args):
    if args.trials is not None:
        _need_file(args.trials, "trials file")
        try:
            trials = io.read_trials(args.trials)
        except io.DataFormatError as exc:
            raise DataError(str(exc))
    else:
        trials = session_trials(args.seed)
    tasks = ("altruism", "number") if args.task == "combined" else (args.task,)
    trials = [t for t in trials if t.task in tasks]
    if args.max_rounds is not None:
        if args.max_rounds < 1:
            raise ConfigError("max-rounds must be positive")
        trials = [t for t in trials if t.round < args.max_rounds]
    if not trials:
        raise DataError("the selected design is empty")
    return trials


def cmd_simulate(args) -> dict:
    _need_seed(args)
    if args.hyper is not None:
        _need_file(args.hyper, "hyperparameter file")
        try:
            hyper = HyperParams.from_dict(io.read_json(args.hyper))
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"{args.hyper}: {exc}")
    else:
        hyper = recovery_hyper()
    if args.n_baseline < 1 or args.n_treatment < 1:
        raise ConfigError("group sizes must be at least 1")
    out = _out_dir(args)
    design = _select_design(args)
    res = simulate_dataset(hyper, design, args.n_baseline, args.n_treatment, args.seed)
    io.write_choices(out / "choices.csv", res.data)
    res.write_truth(out / "truth.json")
    return {"choices": str(out / "choices.csv"), "records": len(res.data)}


def _load_data(path):
    _need_file(path, "data file")
    try:
        return io.read_choices(path)
    except io.DataFormatError as exc:
        raise DataError(str(exc))


def _restrict(data, spec):
    mask = np.isin(data.task, spec.tasks)
    if not mask.any():
        raise DataError(f"no records for the tasks of {spec.variant}: {spec.tasks}")
    return data.subset(mask)


def cmd_fit(args) -> dict:
    from .inference import ModelSpec, SamplerConfig, TaskMismatchError, sample
    from .inference.diagnostics import ess, rhat
    from .inference.summary import is_hyper_name, summarize

    _need_seed(args)
    try:
        spec = ModelSpec(args.variant)
        config = SamplerConfig(chains=args.chains, warmup=args.warmup, draws=args.draws,
                               seed=args.seed, target_accept=args.target_accept,
                               max_depth=args.max_depth, threads=args.threads)
    except ValueError as exc:
        raise ConfigError(str(exc))
    data = _load_data(args.data)
    out = _out_dir(args)
    data = _restrict(data, spec)
    try:
        draws = sample(spec, data, config)
    except (TaskMismatchError, ValueError) as exc:
        raise DataError(str(exc))
    draws.meta["data"] = str(Path(args.data).resolve())
    draws.meta["data_sha256"] = io.file_sha256(args.data)
    draws.meta["n_records"] = len(data)
    io.write_draws(out / "draws.bin", draws)
    io.write_json(out / "meta.json", draws.meta)
    table = summarize(draws)
    io.write_table(out / "summary.csv", list(table.columns), table.to_dict("records"))
    hyper = [n for n in draws.names if is_hyper_name(n)]
    cols = [draws.index(n) for n in hyper]
    r = rhat(draws.draws[:, :, cols]) if draws.n_chains >= 2 else np.full(len(cols), np.nan)
    e = ess(draws.draws[:, :, cols]) if draws.n_chains >= 2 else np.full(len(cols), np.nan)
    finite_r = r[np.isfinite(r)]
    max_rhat = float(finite_r.max()) if finite_r.size else float("nan")
    failures = list(draws.meta["warnings"])
    if draws.n_chains >= 2 and not np.all(r < RHAT_LIMIT):
        failures.append(f"max hyper R-hat {float(np.max(r)):.3f} is not below {RHAT_LIMIT}")
    diag = {"max_rhat": max_rhat, "min_ess_bulk": float(np.nanmin(e)) if np.isfinite(e).any() else None,
            "divergences": draws.meta["divergences"], "divergence_rate": draws.meta["divergence_rate"],
            "adaptation": draws.meta["adaptation"], "failures": failures,
            "parameters": {n: {"r_hat": float(ri), "ess_bulk": float(ei)}
                           for n, ri, ei in zip(hyper, r, e)}}
    io.write_json(out / "diagnostics.json", _clean(diag))
    result = {"fit": str(out), "max_rhat": max_rhat, "divergence_rate": draws.meta["divergence_rate"]}
    if failures and not args.allow_diagnostic_failure:
        raise DiagnosticFailure("; ".join(failures))
    return result


def _clean(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def load_fit(fit_dir):
    fit_dir = Path(fit_dir)
    for name in ("draws.bin", "meta.json"):
        _need_file(fit_dir / name, f"fit output {name}")
    meta = io.read_json(fit_dir / "meta.json")
    try:
        return io.read_draws(fit_dir / "draws.bin", meta)
    except io.DataFormatError as exc:
        raise DataError(str(exc))


def cmd_compare(args) -> dict:
    from .compare import compare, waic
    from .compare import pointwise_loglik
    from .inference.summary import spec_of

    if not args.fits or len(args.fits) < 2:
        raise ConfigError("compare needs at least two fit directories")
    fits = {}
    for d in args.fits:
        draws = load_fit(d)
        fits[Path(d).name] = draws
    if len(fits) != len(args.fits):
        raise ConfigError("fit directory names must be distinct")
    hashes = {d.meta.get("data_sha256") for d in fits.values()}
    if len(hashes) != 1:
        raise DataError("fits were made on different data files")
    data_path = next(iter(fits.values())).meta["data"]
    data = _load_data(data_path)
    results = {}
    for name, draws in fits.items():
        sub = _restrict(data, spec_of(draws))
        ll = pointwise_loglik(draws, sub)
        if args.task is not None:
            ll = ll[:, sub.task == args.task]
            if ll.shape[1] == 0:
                raise DataError(f"{name} has no {args.task} records")
        try:
            results[name] = waic(ll)
        except ValueError as exc:
            raise DataError(f"{name}: {exc}")
    try:
        table = compare(results)
    except ValueError as exc:
        raise DataError(str(exc))
    out = _out_dir(args)
    io.write_table(out / "comparison.csv", list(table.columns), table.to_dict("records"))
    return {"comparison": str(out / "comparison.csv"), "best": table["model"].iloc[0]}


def cmd_recover(args) -> dict:
    from .recovery import coverage_report

    _need_file(args.truth, "truth file")
    draws = load_fit(args.fit)
    truth = io.read_json(args.truth)
    try:
        rep = coverage_report(draws, truth, args.mass)
    except (KeyError, ValueError) as exc:
        raise DataError(f"cannot score this fit against {args.truth}: {exc}")
    out = _out_dir(args)
    io.write_json(out / "coverage.json", _clean(rep))
    cols = ("kind", "parameter", "truth", "mean", "hdi_lo", "hdi_hi", "covered")
    io.write_table(out / "recovery.csv", cols, rep["rows"])
    return {"hyper_means_covered": rep["hyper_means_covered"],
            "hyper_means_total": rep["hyper_means_total"]}


def _statements(args, spec):
    stmts = list(args.statement or [])
    if not args.no_default_statements:
        nu = {"nu_so": "nu_so", "nu_ab": "nu_ab"}.get(spec.payment_noise)
        for s in DEFAULT_STATEMENTS:
            if "{nu}" in s:
                if nu is None or spec.payment_noise not in spec.group_slots:
                    continue
                s = s.format(nu=nu)
            stmts.append(s)
    return stmts


def _num(x) -> str:
    return "" if x is None or (isinstance(x, float) and not np.isfinite(x)) else f"{x:.3f}"


def render_report(draws, statements) -> str:
    from .inference.summary import extract_correlations, prob_statement, spec_of, summarize

    spec = spec_of(draws)
    table = summarize(draws)
    lines = [f"# Posterior summary: {spec.variant}", "",
             f"{draws.n_chains} chains x {draws.n_draws} draws after {draws.meta.get('warmup', '?')} "
             f"warmup iterations, seed {draws.meta.get('seed', '?')}.", "",
             "| parameter | mean | median | sd | hdi 2.5% | hdi 97.5% | R-hat |",
             "|---|---|---|---|---|---|---|"]
    for r in table.to_dict("records"):
        lines.append(f"| {r['parameter']} | {_num(r['mean'])} | {_num(r['median'])} | {_num(r['sd'])} "
                     f"| {_num(r['hdi_2.5%'])} | {_num(r['hdi_97.5%'])} | {_num(r['r_hat'])} |")
    if statements:
        lines += ["", "## Posterior probabilities", "", "| statement | probability |", "|---|---|"]
        for s in statements:
            try:
                value = _num(prob_statement(draws, s))
            except KeyError as exc:
                value = f"unavailable ({exc.args[0]})"
            lines.append(f"| P({s}) | {value} |")
        corr = extract_correlations(draws)
        K = len(spec.slots)
        # upper triangle in parameter order
        corr = corr[[i < j for i in range(K) for j in range(K)]]
        if len(corr):
            lines += ["", "## Correlations", "", "| pair | mean | hdi lo | hdi hi |", "|---|---|---|---|"]
            for r in corr.to_dict("records"):
                lines.append(f"| rho({r['row']}, {r['col']}) | {_num(r['mean'])} | "
                             f"{_num(r['hdi_lo'])} | {_num(r['hdi_hi'])} |")
    return "\n".join(lines) + "\n"


def cmd_report(args) -> dict:
    from .inference.summary import spec_of

    if args.fit is None:
        raise ConfigError("report needs --fit")
    draws = load_fit(args.fit)
    text = render_report(draws, _statements(args, spec_of(draws)))
    out = _out_dir(args)
    (out / "report.md").write_text(text)
    return {"report": str(out / "report.md")}


COMMANDS = {"design": cmd_design, "curves": cmd_curves, "simulate": cmd_simulate, "fit": cmd_fit,
            "compare": cmd_compare, "recover": cmd_recover, "report": cmd_report}


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = resolve(argv)
        result = COMMANDS[args.command](args)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except DataError as exc:
        return _fail("data", str(exc), EXIT_DATA)
    except DiagnosticFailure as exc:
        return _fail("diagnostics", str(exc), EXIT_DIAGNOSTIC)
    except OSError as exc:
        return _fail("config", f"{exc.filename}: {exc.strerror}", EXIT_CONFIG)
    sys.stdout.write(json.dumps(result, sort_keys=True, default=str) + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
