"""Command-line interface: ``medipool <command> <input.csv> [options]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

from . import __version__
from .analysis import Analysis, AnalysisError, pool_effects, effects_from_rows, \
    run_metamean, run_metamedian, thread_count
from .config import MEDIAN_METHODS, ConfigError, MethodConfig
from .data import DataError, read_dataset, validate_dataset
from .describe import describe_studies, render_text as render_description
from .mean_methods import BOOTSTRAP_METHODS, MEAN_METHODS, SD_METHODS, SE_METHODS
from .pooling import PoolingError, PoolModel
from .report import describe_json, render_csv, render_json, render_text

EXIT_OK, EXIT_IO, EXIT_INVALID = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="medipool",
                                description="Meta-analysis of studies reporting medians.")
    p.add_argument("--version", action="version", version=f"medipool {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, analysis=True):
        sp.add_argument("input", help="study table (CSV)")
        sp.add_argument("--format", choices=("text", "json", "csv"), default="text")
        sp.add_argument("--out", help="write the report here instead of stdout")
        if not analysis:
            return
        sp.add_argument("--model", choices=("common", "random"), default="random")
        sp.add_argument("--tau2", choices=("dl", "reml"), default="reml",
                        help="between-study variance estimator")
        sp.add_argument("--level", type=float, default=0.95, help="confidence level")
        sp.add_argument("--no-pool", action="store_true",
                        help="emit per-study effects without pooling")
        sp.add_argument("--plot", help="also write a forest plot (SVG) to this path")
        sp.add_argument("--xlab", default=None, help="forest plot axis label")
        sp.add_argument("--title", default="", help="forest plot title")

    def mean_opts(sp):
        sp.add_argument("--mean-method", default="qe",
                        help=f"one of {', '.join(MEAN_METHODS)}, or a comma-separated "
                             "list with one entry per study")
        sp.add_argument("--sd-method", choices=SD_METHODS, default=None)
        sp.add_argument("--se-method", choices=SE_METHODS, default=None,
                        help="default: bootstrap for qe/bc/mln, naive otherwise")
        sp.add_argument("--nboot", type=int, default=1000)
        sp.add_argument("--seed", type=int, default=0)

    def median_opts(sp):
        sp.add_argument("--median-method", choices=MEDIAN_METHODS, default="qe")

    d = sub.add_parser("describe", help="counts of reported summary sets and Bowley skewness")
    common(d, analysis=False)
    d.add_argument("--method", choices=("default", "cd"), default="default",
                   help="summary-set taxonomy (cd uses C1-C5)")
    d.add_argument("--group-labels", default="Group 1,Group 2")

    m = sub.add_parser("metamean", help="mean-based meta-analysis")
    common(m)
    mean_opts(m)

    md = sub.add_parser("metamedian", help="median-based meta-analysis")
    common(md)
    median_opts(md)

    f = sub.add_parser("forest", help="forest plot (SVG) of a mean- or median-based analysis")
    f.add_argument("input", help="study table (CSV)")
    f.add_argument("--out", required=True, help="SVG output path")
    f.add_argument("--analysis", choices=("mean", "median"), default="mean")
    f.add_argument("--model", choices=("common", "random"), default="random")
    f.add_argument("--tau2", choices=("dl", "reml"), default="reml")
    f.add_argument("--level", type=float, default=0.95)
    f.add_argument("--xlab", default=None)
    f.add_argument("--title", default="")
    mean_opts(f)
    median_opts(f)

    pl = sub.add_parser("pool", help="pool per-study effects (the CSV written by --format csv)")
    common(pl)
    pl.add_argument("--pool-method", choices=("iv", "mm", "wm", "cd"), default="iv",
                    help="inverse-variance, (weighted) median of effects, or CD jackknife")
    return p


def _model(args) -> PoolModel:
    try:
        return PoolModel(args.model, args.tau2.upper(), args.level)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _mean_config(args, pool=True) -> MethodConfig:
    methods = [m.strip() for m in args.mean_method.split(",")]
    mean_method = methods[0] if len(methods) == 1 else tuple(methods)
    se = args.se_method
    if se is None:
        se = "bootstrap" if all(m in BOOTSTRAP_METHODS for m in methods) else "naive"
    return MethodConfig(mean_method=mean_method, se_method=se, sd_method=args.sd_method,
                        model=_model(args), nboot=args.nboot, seed=args.seed, pool=pool)


def _median_config(args, pool=True) -> MethodConfig:
    return MethodConfig(median_method=args.median_method, model=_model(args), pool=pool)


def _load(path):
    d = read_dataset(path)
    problems = validate_dataset(d)
    if problems:
        lines = [f"study {v.study_id}, group {v.group}: violates {v.message}" for v in problems]
        raise DataError("invalid study data:\n  " + "\n  ".join(lines))
    return d


def _emit(text: str, out) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _render(a: Analysis, fmt: str) -> str:
    if fmt == "json":
        return render_json(a)
    if fmt == "csv":
        return render_csv(a)
    return render_text(a)


def _warn(a: Analysis) -> None:
    for w in a.warnings:
        print(f"warning: {w}", file=sys.stderr)


def _plot(a: Analysis, path, xlab, title, default_xlab) -> None:
    from .plotting import write_svg
    write_svg(a, path, xlab if xlab is not None else default_xlab, title)


def cmd_describe(args) -> int:
    d = _load(args.input)
    labels = tuple(x.strip() for x in args.group_labels.split(","))
    if len(labels) != 2:
        raise ConfigError("--group-labels needs exactly two comma-separated labels")
    report = describe_studies(d, args.method)
    for msg in report.diagnostics:
        print(f"warning: {msg}", file=sys.stderr)
    if args.format == "json":
        text = describe_json(report)
    elif args.format == "csv":
        text = _describe_csv(report, labels)
    else:
        text = render_description(report, labels)
    _emit(text, args.out)
    return EXIT_OK


def _describe_csv(report, labels) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    dicts = [g.as_dict() for g in report.groups]
    w.writerow(["statistic", *labels[:len(dicts)]])
    for key in ("n_studies", "n_median", "n_s1", "n_s2", "n_s3", "n_mean", "n_mean_sd_n"):
        w.writerow([key, *(g[key] for g in dicts)])
    if report.method == "cd":
        for tag in dicts[0]["cd_scenario_counts"]:
            w.writerow([tag, *(g["cd_scenario_counts"][tag] for g in dicts)])
    for key in ("min", "q1", "median", "mean", "q3", "max"):
        w.writerow([f"bowley_{key}", *("NA" if g["bowley"] is None else repr(g["bowley"][key])
                                       for g in dicts)])
    return buf.getvalue()


def _analysis_cmd(args, kind) -> int:
    d = _load(args.input)
    if kind == "mean":
        a = run_metamean(d, _mean_config(args, not args.no_pool), thread_count())
    else:
        a = run_metamedian(d, _median_config(args, not args.no_pool), thread_count())
    _warn(a)
    _emit(_render(a, args.format), args.out)
    if args.plot:
        if a.result is None:
            raise ConfigError("--plot needs a pooled analysis; drop --no-pool")
        _plot(a, args.plot, args.xlab, args.title,
              "Mean" if kind == "mean" and not d.two_group else
              "Difference of Means" if kind == "mean" else
              "Median" if not d.two_group else "Difference of Medians")
    return EXIT_OK


def cmd_metamean(args) -> int:
    return _analysis_cmd(args, "mean")


def cmd_metamedian(args) -> int:
    return _analysis_cmd(args, "median")


def cmd_forest(args) -> int:
    d = _load(args.input)
    if args.analysis == "mean":
        a = run_metamean(d, _mean_config(args), thread_count())
        default = "Difference of Means" if d.two_group else "Mean"
    else:
        a = run_metamedian(d, _median_config(args), thread_count())
        default = "Difference of Medians" if d.two_group else "Median"
    _warn(a)
    _plot(a, args.out, args.xlab, args.title, default)
    return EXIT_OK


def _read_effects(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        rows = json.loads(text)["studies"]
    else:
        rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise DataError("zero data rows")
    return effects_from_rows(rows)


def cmd_pool(args) -> int:
    effects = _read_effects(args.input)
    median = args.pool_method != "iv"
    cfg = MethodConfig(median_method=args.pool_method if median else "qe", model=_model(args),
                       pool=not args.no_pool)
    a = Analysis("median" if median else "mean", effects)
    if cfg.pool:
        try:
            a.result = pool_effects(effects, cfg, a.kind)
        except PoolingError as exc:
            raise AnalysisError(str(exc)) from None
        a.warnings.extend(a.result.warnings)
    _warn(a)
    _emit(_render(a, args.format), args.out)
    if args.plot and a.result is not None:
        _plot(a, args.plot, args.xlab, args.title, "Estimate")
    return EXIT_OK


COMMANDS = {"describe": cmd_describe, "metamean": cmd_metamean, "metamedian": cmd_metamedian,
            "forest": cmd_forest, "pool": cmd_pool}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DataError, ConfigError, AnalysisError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
