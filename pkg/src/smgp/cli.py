"""Command-line interface: fit, forecast, evaluate, compare, simulate.

Exit codes: 0 success, 1 model or numerical failure, 2 usage or I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bayesopt, evaluation, inference, modelio
from .errors import DataError, SmgpError
from .gp import sample_prior
from .kernels import NoiseParam, SMKernelParams
from .nuts import HmcConfig
from .timeseries import TimeSeries, fmt_real, load_csv, split, write_csv

log = logging.getLogger("smgp")

COMPARE_METHODS = ("hmc", "bo", "arima")


def _positive_int(text):
    val = int(text)
    if val < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {val}")
    return val


def _add_fit_flags(p):
    p.add_argument("--q", type=_positive_int, default=10, help="mixture components (default 10)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--restarts", type=_positive_int, default=10, help="MAP restarts")
    p.add_argument("--warmup", type=_positive_int, default=500, help="HMC warmup iterations")
    p.add_argument("--samples", type=_positive_int, default=1000, help="HMC draws per chain")
    p.add_argument("--chains", type=_positive_int, default=2)
    p.add_argument("--budget", type=_positive_int, default=30, help="BO evaluations")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smgp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model and write a model file")
    p.add_argument("--data", required=True)
    p.add_argument("--n-train", type=_positive_int)
    p.add_argument("--method", choices=modelio.METHODS, default="hmc")
    p.add_argument("--out", required=True, help="model file (JSON)")
    p.add_argument("--trace-out", help="BO trace or HMC chain CSV")
    _add_fit_flags(p)

    p = sub.add_parser("forecast", help="forecast beyond the training data")
    p.add_argument("--model", required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--interval", choices=("latent", "observation"), default="observation")
    p.add_argument("--out", help="forecast CSV (default stdout)")

    p = sub.add_parser("evaluate", help="score a model on the held-out part of a series")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--n-train", type=_positive_int, help="default: model training length")
    p.add_argument("--interval", choices=("latent", "observation"), default="observation")
    p.add_argument("--out", help="report CSV (default: table on stdout)")

    p = sub.add_parser("compare", help="GP-SM vs GP-SM Optimized vs ARIMA on one split")
    p.add_argument("--data", required=True)
    p.add_argument("--n-train", type=_positive_int, required=True)
    p.add_argument("--interval", choices=("latent", "observation"), default="observation")
    p.add_argument("--out", required=True, help="output directory")
    _add_fit_flags(p)

    p = sub.add_parser("simulate", help="draw a series from a spectral mixture GP")
    p.add_argument("--kernel", required=True, help="inline JSON or path to a JSON file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--noise-var", type=float, help="overrides noise_variance in the kernel JSON")
    p.add_argument("--out", help="series CSV (default stdout)")
    return parser


def _fit_configs(args):
    hmc = HmcConfig(n_warmup=args.warmup, n_samples=args.samples, n_chains=args.chains,
                    seed=args.seed)
    bo = bayesopt.TuneConfig(budget=args.budget, n_init=min(8, args.budget), seed=args.seed)
    return hmc, bo


def _load_split(path, n_train):
    series = load_csv(path)
    return series, split(series, n_train if n_train is not None else len(series))


def _fit(train, method, args):
    hmc, bo = _fit_configs(args)
    return modelio.fit(train, method, Q=args.q, seed=args.seed, restarts=args.restarts,
                       hmc_config=hmc, tune_config=bo)


def _open_out(path):
    if path is None:
        return sys.stdout, False
    return Path(path).open("w", newline="", encoding="utf-8"), True


def cmd_fit(args) -> int:
    _, parts = _load_split(args.data, args.n_train)
    fm, artifact = _fit(parts.train, args.method, args)
    modelio.save(fm, args.out)
    if args.trace_out and isinstance(artifact, bayesopt.TuneTrace):
        bayesopt.write_trace_csv(artifact, args.trace_out)
    elif args.trace_out and isinstance(artifact, inference.HmcChain):
        inference.export_chain_csv(artifact, args.trace_out)
    print(f"{fm.label} fit on {len(parts.train)} points -> {args.out}")
    if fm.method != "arima":
        # the mixture carries 3Q+1 quantities; 2Q of them are frequencies and length-scales
        print(f"  Q={args.q}: {2 * args.q} frequency/length-scale hyperparameters "
              f"(+{args.q} weights, +1 noise)")
    for key, val in fm.summary.items():
        print(f"  {key}: {val}")
    return 0


def write_forecast(pred, fh, header_comment):
    fh.write(f"# {header_comment}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "mean", "sd", "lo95", "hi95"])
    for row in zip(pred.query_x, pred.mean, pred.sd, pred.lo95, pred.hi95):
        w.writerow([fmt_real(v) for v in row])


def cmd_forecast(args) -> int:
    if args.horizon < 1:
        raise DataError(f"--horizon must be >= 1, got {args.horizon}")
    fm = modelio.load(args.model)
    pred = fm.predict(fm.future_grid(args.horizon), include_noise=args.interval == "observation")
    fh, close = _open_out(args.out)
    try:
        write_forecast(pred, fh, f"interval={pred.interval} method={fm.method}")
    finally:
        if close:
            fh.close()
    return 0


def _score(fm, test, interval):
    pred = fm.predict(test.timestamps, include_noise=interval == "observation")
    return evaluation.evaluate_forecast(fm.label, test.values, pred)


def cmd_evaluate(args) -> int:
    fm = modelio.load(args.model)
    n_train = args.n_train if args.n_train is not None else len(fm.train)
    _, parts = _load_split(args.data, n_train)
    if parts.test is None:
        raise DataError("no held-out points to evaluate: n-train equals the series length")
    if parts.train != fm.train:
        raise DataError("training part of --data does not match the model's training data")
    report = _score(fm, parts.test, args.interval)
    if args.out:
        evaluation.write_report_csv([report], args.out)
    else:
        sys.stdout.write(evaluation.format_table(evaluation.compare_models([report])))
    return 0


def _plot_rows(fm, series, n_train, interval):
    include_noise = interval == "observation"
    t, y = series.timestamps, series.values
    if fm.method == "arima":
        fitted, sd = fm.in_sample()
        mean, lo, hi = (np.full(len(series), np.nan) for _ in range(3))
        k = fitted.size
        mean[:k], lo[:k], hi[:k] = fitted, fitted - 1.96 * sd, fitted + 1.96 * sd
        if n_train < len(series):
            pred = fm.predict(t[n_train:])
            mean[n_train:], lo[n_train:], hi[n_train:] = pred.mean, pred.lo95, pred.hi95
    else:
        pred = fm.predict(t, include_noise=include_noise)
        mean, lo, hi = pred.mean, pred.lo95, pred.hi95
    for i in range(len(series)):
        vals = [t[i], y[i], mean[i], lo[i], hi[i]]
        yield [fmt_real(v) if np.isfinite(v) else "" for v in vals] + [int(i >= n_train)]


def cmd_compare(args) -> int:
    series, parts = _load_split(args.data, args.n_train)
    if parts.test is None:
        raise DataError("compare needs held-out points: --n-train must be below the series length")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for method in COMPARE_METHODS:
        label = modelio.LABELS[method]
        try:
            fm, _ = _fit(parts.train, method, args)
            reports.append(_score(fm, parts.test, args.interval))
        except SmgpError as exc:
            log.error("%s failed: %s", label, exc)
            continue
        slug = label.lower().replace(" ", "-")
        with (out / f"plot_{slug}.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "y_true", "mean", "lo95", "hi95", "is_test"])
            w.writerows(_plot_rows(fm, series, args.n_train, args.interval))
        modelio.save(fm, out / f"model_{slug}.json")
    if not reports:
        log.error("every model failed")
        return 1
    evaluation.write_report_csv(reports, out / "report.csv")
    table = evaluation.format_table(evaluation.compare_models(reports))
    (out / "report.txt").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def _kernel_spec(text):
    path = Path(text)
    try:
        raw = path.read_text(encoding="utf-8") if path.is_file() else text
        spec = json.loads(raw)
        params = SMKernelParams(spec["weights"], spec["frequencies"], spec["scales"])
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"invalid kernel JSON: {exc}") from exc
    return params, spec.get("noise_variance")


def cmd_simulate(args) -> int:
    if args.n < 2:
        raise DataError(f"--n must be >= 2, got {args.n}")
    params, noise_var = _kernel_spec(args.kernel)
    if args.noise_var is not None:
        noise_var = args.noise_var
    if noise_var is None:
        raise DataError("noise variance missing: give noise_variance in the kernel JSON or --noise-var")
    x = np.arange(args.n, dtype=float)
    y = sample_prior(params, NoiseParam(noise_var), x, args.seed)
    series = TimeSeries(x, y, "simulated")
    if args.out:
        write_csv(series, args.out)
    else:
        sys.stdout.write("t,y\n")
        for t, v in zip(x, y):
            sys.stdout.write(f"{fmt_real(t)},{fmt_real(v)}\n")
    return 0


COMMANDS = {"fit": cmd_fit, "forecast": cmd_forecast, "evaluate": cmd_evaluate,
            "compare": cmd_compare, "simulate": cmd_simulate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors and 0 for --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SmgpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
