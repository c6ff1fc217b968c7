"""Command-line front end.

Every subcommand reads its settings from flags and from an optional INI-style
config file (``--config``), checks them all before computing anything, and
writes ``<command>.resolved.ini`` to the output directory. Feeding that file
back through ``--config`` repeats the run.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
from pathlib import Path

from . import mc_harness as mc
from .adaptive_select import TRACE_HEADER, trace_rows
from .dist_models import default_params, make_model, parse_model, read_dataset, sample, write_dataset
from .dist_models import SecondOrderParams
from .errors import EstimationError, TailIndexError, TooSmallN
from .minimax_lb import FAMILY_HEADER, build_family, fano_bound
from .tail_estimators import CSV_HEADER, oracle_estimate

EXIT_USAGE = 2
EXIT_FAILURE = 1


class ConfigError(ValueError):
    pass


def _read_config(path):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    if path is None:
        return cp
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {path}") from None
    try:
        cp.read_string(text, source=str(path))
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: expected a [section] header before {exc.line.strip()!r}") from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"{path}:{lineno}: cannot parse {line.strip()!r}") from None
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        where = f"{path}:{lineno}" if lineno else str(path)
        raise ConfigError(f"{where}: {exc.message}") from None
    return cp


def _get(cp, section, key, default=None):
    if cp.has_section(section) and cp.has_option(section, key):
        return cp.get(section, key).strip()
    return default


def _number(value, name, kind=float):
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}") from None
    if kind is int:
        if not x.is_integer():
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return int(x)
    return x


def _model_from(cp):
    if not cp.has_section("model"):
        raise ConfigError("config needs a [model] section")
    spec = _get(cp, "model", "spec")
    if spec:
        return parse_model(spec)
    items = dict(cp.items("model"))
    family = items.pop("family", None)
    if family is None:
        raise ConfigError("[model] needs either spec= or family=")
    return make_model(family, **items)


def _truth_from(cp, model):
    if cp.has_section("truth"):
        t = cp["truth"]
        try:
            return SecondOrderParams(*(_number(t[k], f"truth.{k}") for k in ("alpha", "beta", "C", "Cprime")))
        except KeyError as exc:
            raise ConfigError(f"[truth] is missing {exc.args[0]}") from None
    return default_params(model)


def _split_methods(text):
    return [m.strip() for chunk in text.splitlines() for m in chunk.split(";") if m.strip()]


def _write_sidecar(out, command, sections):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["run"] = {"command": command}
    for name, values in sections.items():
        cp[name] = {k: str(v) for k, v in values.items()}
    path = out / f"{command}.resolved.ini"
    with path.open("w") as fh:
        cp.write(fh)
    return path


def _write_csv(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _input_path(args, cp, section):
    path = args.input or _get(cp, section, "input")
    if path is None:
        raise ConfigError(f"no input dataset given (positional argument or [{section}] input=)")
    return Path(path)


def _print_report(rep, out=None, name=None):
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerow(rep.csv_row())
    if out is not None:
        _write_csv(out / name, CSV_HEADER, [rep.csv_row()])


def cmd_estimate(args, cp):
    path = _input_path(args, cp, "estimate")
    method_text = args.method or _get(cp, "estimate", "method")
    if method_text is None:
        raise ConfigError("no method given (--method or [estimate] method=)")
    spec = mc.parse_method(method_text)
    truth = None
    if cp.has_section("truth") or cp.has_section("model"):
        truth = _truth_from(cp, _model_from(cp) if cp.has_section("model") else None)
    out = _out_dir(args)
    data = read_dataset(path)
    rep = mc.apply_method(spec, data, truth)
    _print_report(rep, out, "estimate.csv")
    sections = {"estimate": {"input": path.resolve(), "method": spec.label}}
    if truth is not None:
        sections["truth"] = vars(truth)
    _write_sidecar(out, "estimate", sections)


def _adaptive_spec(args, cp):
    opts = dict(cp.items("adaptive")) if cp.has_section("adaptive") else {}
    opts.pop("input", None)
    if args.delta is not None:
        opts["delta"] = str(args.delta)
    if args.A is not None:
        opts["A"] = str(args.A)
    if "eps" not in opts:
        opts.setdefault("delta", "0.05")
        opts.setdefault("A", "auto")
    return mc.MethodSpec("adaptive", tuple(opts.items()))


def cmd_adaptive(args, cp):
    path = _input_path(args, cp, "adaptive")
    spec = _adaptive_spec(args, cp)
    truth = None
    if spec.get("A") == "auto":
        if not (cp.has_section("truth") or cp.has_section("model")):
            raise ConfigError("A=auto needs [truth] or [model] constants; otherwise pass --A")
    if cp.has_section("truth") or cp.has_section("model"):
        truth = _truth_from(cp, _model_from(cp) if cp.has_section("model") else None)
    out = _out_dir(args)
    data = read_dataset(path)
    config = mc.adaptive_config(spec, data.n, truth)
    rep = mc.apply_method(spec, data, truth)
    _print_report(rep, out, "adaptive.csv")
    _write_csv(out / "adaptive_trace.csv", TRACE_HEADER, trace_rows(rep.diagnostics["trace"]))
    resolved = {"input": path.resolve(), "delta": repr(config.delta), "A": repr(config.A)}
    _write_sidecar(out, "adaptive", {"adaptive": resolved})


def cmd_oracle(args, cp):
    path = _input_path(args, cp, "oracle")
    alpha = args.alpha if args.alpha is not None else _get(cp, "oracle", "alpha", _get(cp, "truth", "alpha"))
    beta = args.beta if args.beta is not None else _get(cp, "oracle", "beta", _get(cp, "truth", "beta"))
    if alpha is None or beta is None:
        raise ConfigError("the oracle needs alpha and beta (--alpha/--beta or [oracle])")
    alpha, beta = _number(alpha, "alpha"), _number(beta, "beta")
    if not (alpha > 0 and beta > 0):
        raise ConfigError("alpha and beta must be positive")
    out = _out_dir(args)
    data = read_dataset(path)
    rep = oracle_estimate(data, alpha, beta)
    _print_report(rep, out, "oracle.csv")
    _write_sidecar(out, "oracle", {"oracle": {"input": path.resolve(), "alpha": repr(alpha), "beta": repr(beta)}})


def _experiment_from(args, cp):
    model = _model_from(cp)
    truth = _truth_from(cp, model)
    if not cp.has_section("experiment"):
        raise ConfigError("config needs an [experiment] section")
    seed = args.seed if args.seed is not None else _get(cp, "experiment", "base_seed")
    if seed is None:
        raise ConfigError("[experiment] base_seed is required; there is no default seed")
    n_text = _get(cp, "experiment", "n_grid")
    if n_text is None:
        raise ConfigError("[experiment] n_grid is required")
    n_grid = [_number(s, "n_grid", int) for s in n_text.replace(",", " ").split()]
    trials = _number(_get(cp, "experiment", "trials", "1"), "trials", int)
    methods = _split_methods(_get(cp, "experiment", "methods", "oracle"))
    workers = _number(_get(cp, "experiment", "workers", "1"), "workers", int)
    min_trials = _number(_get(cp, "experiment", "min_trials", "30"), "min_trials", int)
    config = mc.ExperimentConfig(
        model, truth, n_grid, trials, _number(seed, "base_seed", int), [mc.parse_method(m) for m in methods]
    )
    return config, workers, min_trials


def _fits(records, methods, min_trials):
    fits = []
    for label in methods:
        try:
            fits.append(mc.fit_rate(records, label, min_trials=min_trials))
        except TailIndexError as exc:
            print(f"note: no rate fit for {label}: {exc}", file=sys.stderr)
    return fits


def cmd_simulate(args, cp):
    if args.config is None:
        raise ConfigError("simulate needs --config")
    config, workers, min_trials = _experiment_from(args, cp)
    out = _out_dir(args)
    records = mc.run_experiment(config, workers=workers)
    (out / "trials.csv").write_text(mc.records_csv(records))
    summary = mc.summarize(records)
    (out / "summary.csv").write_text(mc.summary_csv(summary))
    labels = [m.label for m in config.methods]
    (out / "rates.csv").write_text(mc.rate_csv(_fits(records, labels, min_trials)))
    sys.stdout.write(mc.summary_csv(summary))
    _write_sidecar(
        out,
        "simulate",
        {
            "model": {"spec": config.model.canonical()},
            "truth": vars(config.params),
            "experiment": {
                "n_grid": ", ".join(map(str, config.n_grid)),
                "trials": config.trials,
                "base_seed": config.base_seed,
                "methods": "; ".join(labels),
                "workers": workers,
                "min_trials": min_trials,
            },
        },
    )


def cmd_rates(args, cp):
    path = _input_path(args, cp, "rates")
    min_trials = _number(_get(cp, "rates", "min_trials", str(args.min_trials)), "min_trials", int)
    out = _out_dir(args)
    records = mc.parse_records_csv(path.read_text())
    labels = list(dict.fromkeys(r.method for r in records))
    if args.method:
        labels = [args.method]
    fits = _fits(records, labels, min_trials)
    (out / "rates.csv").write_text(mc.rate_csv(fits))
    (out / "summary.csv").write_text(mc.summary_csv(mc.summarize(records)))
    sys.stdout.write(mc.rate_csv(fits))
    _write_sidecar(out, "rates", {"rates": {"input": path.resolve(), "min_trials": min_trials}})


def cmd_lowerbound(args, cp):
    vals = {}
    for key in ("alpha", "beta", "n"):
        v = getattr(args, key)
        v = v if v is not None else _get(cp, "lowerbound", key)
        if v is None:
            raise ConfigError(f"lowerbound needs {key} (--{key} or [lowerbound] {key}=)")
        vals[key] = _number(v, key)
    audit = args.audit_kl or _get(cp, "lowerbound", "audit_kl", "false").lower() in ("1", "true", "yes")
    if not vals["beta"] > 1:
        raise ConfigError(f"the construction needs beta > 1, got {vals['beta']}")
    out = _out_dir(args)
    family = build_family(vals["alpha"], vals["beta"], vals["n"])
    report = fano_bound(family, audit=audit)
    _write_csv(out / "family.csv", FAMILY_HEADER, family.rows())
    _write_csv(out / "fano.csv", ["quantity", "value"], report.rows())
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["quantity", "value"])
    w.writerows(report.rows())
    w.writerow(["kl_mode", "quadrature" if audit else "closed_form"])
    w.writerow(["budget_ok", "1" if report.budget_ok else "0"])
    _write_sidecar(
        out,
        "lowerbound",
        {"lowerbound": {"alpha": repr(vals["alpha"]), "beta": repr(vals["beta"]), "n": repr(vals["n"]), "audit_kl": audit}},
    )


def cmd_sample(args, cp):
    model = _model_from(cp)
    n = args.n if args.n is not None else _get(cp, "sample", "n")
    seed = args.seed if args.seed is not None else _get(cp, "sample", "seed", _get(cp, "experiment", "base_seed"))
    if n is None or seed is None:
        raise ConfigError("sample needs n and a seed")
    n, seed = _number(n, "n", int), _number(seed, "seed", int)
    out = _out_dir(args)
    data = sample(model, n, seed)
    target = out / "sample.txt"
    write_dataset(data, target)
    print(target)
    _write_sidecar(out, "sample", {"model": {"spec": model.canonical()}, "sample": {"n": n, "seed": seed}})


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI-style config file")
    common.add_argument("--out", default=".", help="output directory (default: current directory)")
    common.add_argument("--seed", type=int, help="override the base seed")
    common.add_argument("--audit-kl", action="store_true", help="use quadrature KL instead of closed forms")

    p = argparse.ArgumentParser(prog="tailindex", description="Tail-index estimation and simulation tools.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("estimate", parents=[common], help="run one estimator on a dataset file")
    s.add_argument("input", nargs="?")
    s.add_argument("--method", help='e.g. "tail-event k=1", "hill r=0.01", "uv u=20,v=5"')
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("adaptive", parents=[common], help="adaptive threshold choice with its comparison trace")
    s.add_argument("input", nargs="?")
    s.add_argument("--delta", type=float)
    s.add_argument("--A", type=float)
    s.set_defaults(func=cmd_adaptive)

    s = sub.add_parser("oracle", parents=[common], help="tail-event estimate at the oracle index")
    s.add_argument("input", nargs="?")
    s.add_argument("--alpha", type=float)
    s.add_argument("--beta", type=float)
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo sweep from a config file")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("rates", parents=[common], help="fit error rates from a trials CSV")
    s.add_argument("input", nargs="?")
    s.add_argument("--method")
    s.add_argument("--min-trials", type=int, default=30)
    s.set_defaults(func=cmd_rates)

    s = sub.add_parser("lowerbound", parents=[common], help="build the lower-bound family and its Fano bound")
    s.add_argument("--alpha", type=float)
    s.add_argument("--beta", type=float)
    s.add_argument("--n", type=float)
    s.set_defaults(func=cmd_lowerbound)

    s = sub.add_parser("sample", parents=[common], help="draw a seeded dataset from the [model] section")
    s.add_argument("--n", type=int)
    s.set_defaults(func=cmd_sample)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cp = _read_config(args.config)
        args.func(args, cp)
    except EstimationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except TooSmallN as exc:
        print(f"error: TooSmallN: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (OSError, ValueError, TailIndexError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
