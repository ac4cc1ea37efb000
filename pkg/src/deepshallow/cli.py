"""Command line front end: ``deepshallow {gen,fit,crosscheck,report}``.

Options may also come from a TOML file given with ``--config``; its keys are
the long option names with dashes or underscores (``master_seed = 7``).
Command-line flags win over file values.

Exit codes: 0 success, 2 usage or config error, 3 I/O error or unreadable
store, 4 some runs failed, 5 every run failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import experiment, report
from .netcore import DEFAULT_SATURATION, ArchitectureSpec
from .optim import METHODS, OptimizerConfig, run_fit
from .probgen import (arch_to_dict, build_size_class, generate_for_size_class, init_weights,
                      ProblemFormatError, load_problem, parse_problem_name,
                      save_problem)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("deepshallow")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_PARTIAL = 4
EXIT_FAILED = 5

OUT_ENV = "DEEPSHALLOW_OUT"
INPUT_DISTS = {"normal": "standard_normal", "uniform": "uniform_pm1"}

DEFAULTS = {
    "size": "A",
    "methods": ",".join(experiment.METHOD_ORDER),
    "seeds": "15",
    "budget": 2000,
    "wf": DEFAULT_SATURATION,
    "input_dist": "normal",
    "agg": "median",
    "master_seed": 0,
    "workers": None,
    "format": "md",
    "summary_method": "rmsprop",
}


class ConfigError(Exception):
    pass


def default_out() -> str:
    return os.environ.get(OUT_ENV, "results")


def parse_seeds(text, master_seed: int):
    """``"15"`` -> master_seed + 0..14; ``"3,8,11"`` -> exactly those seeds."""
    text = str(text).strip()
    try:
        if "," in text:
            seeds = [int(s) for s in text.split(",") if s.strip()]
        else:
            count = int(text)
            if count < 1:
                raise ConfigError("--seeds count must be >= 1")
            seeds = [master_seed + i for i in range(count)]
    except ValueError:
        raise ConfigError(f"cannot parse --seeds {text!r}") from None
    if len(set(seeds)) != len(seeds):
        raise ConfigError("--seeds must be distinct")
    return seeds


def parse_methods(text):
    methods = [m.strip().lower() for m in str(text).split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise ConfigError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    return methods


def parse_network(text: str, wf: float) -> ArchitectureSpec:
    """``A_3`` (a named test problem) or ``IN:WIDTHxDEPTH:OUT`` such as ``100:16x3:50``."""
    if ":" in text:
        try:
            inp, hidden, out = text.split(":")
            width, depth = hidden.lower().split("x")
            return ArchitectureSpec(int(inp), int(out), int(depth), int(width), wf)
        except ValueError as exc:
            raise ConfigError(f"cannot parse network {text!r}: {exc}") from None
    try:
        size, depth = parse_problem_name(text)
        return size.arch(depth, wf)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"unknown network {text!r}: {exc}") from None


def _load_config_file(path):
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid config file {path}: {exc}") from None
    return {k.replace("-", "_"): v for k, v in data.items()}


def effective(args, name):
    """Flag value if given, else config-file value, else the built-in default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in args.file_config:
        return args.file_config[name]
    return DEFAULTS.get(name)


def _matrix_config(args) -> experiment.MatrixConfig:
    size = str(effective(args, "size")).upper()
    try:
        build_size_class(size)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    master = int(effective(args, "master_seed"))
    dist = effective(args, "input_dist")
    if dist not in INPUT_DISTS:
        raise ConfigError(f"--input-dist must be one of {', '.join(INPUT_DISTS)}")
    agg = effective(args, "agg")
    if agg not in experiment.AGGREGATIONS:
        raise ConfigError(f"--agg must be one of {', '.join(experiment.AGGREGATIONS)}")
    try:
        return experiment.MatrixConfig(
            size_class=size,
            methods=tuple(parse_methods(effective(args, "methods"))),
            seeds=tuple(parse_seeds(effective(args, "seeds"), master)),
            budget=int(effective(args, "budget")),
            saturation_factor=float(effective(args, "wf")),
            input_distribution=INPUT_DISTS[dist],
            aggregation=agg,
            master_seed=master,
            summary_method=effective(args, "summary_method"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _out_dir(args) -> Path:
    return Path(effective(args, "out") or default_out())


def cmd_gen(args) -> int:
    cfg = _matrix_config(args)
    size = build_size_class(cfg.size_class)
    out = _out_dir(args) / "problems"
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for depth, _ in size.variants:
        for seed in cfg.seeds:
            problem = generate_for_size_class(size, depth, seed, cfg.saturation_factor,
                                              cfg.input_distribution)
            name = f"{size.name}_{depth}"
            path = save_problem(problem, out / f"{name}_seed{seed}", arrays=not args.no_arrays)
            manifest.append({"problem": name, "seed": seed, "file": path.name,
                             "sha256": problem.content_hash()})
    (out / "manifest.json").write_text(json.dumps(
        {"config": cfg.to_dict(), "problems": manifest}, indent=2, sort_keys=True) + "\n")
    for m in manifest:
        print(f"{m['problem']:>4} seed {m['seed']:>6}  {m['sha256'][:16]}  {m['file']}")
    print(f"wrote {len(manifest)} problem files to {out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    problem = load_problem(args.problem)
    wf = float(effective(args, "wf")) if args.wf is not None else problem.arch.saturation_factor
    arch = parse_network(args.network, wf) if args.network else problem.arch
    if arch.input_dim != problem.arch.input_dim or arch.output_dim != problem.arch.output_dim:
        raise ConfigError(
            f"network {arch.label()} maps {arch.input_dim} -> {arch.output_dim}, but the "
            f"problem has inputs {problem.dataset.inputs.shape} and targets "
            f"{problem.dataset.targets.shape}")
    method = args.method.lower()
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}")
    budget = int(effective(args, "budget"))
    try:
        config = OptimizerConfig.for_method(method, max_gradient_calls=budget)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    x0_seed = problem.seed if args.x0_seed is None else args.x0_seed
    x0 = init_weights(arch, [x0_seed, experiment.X0_STREAM])
    trace = run_fit(arch, problem.dataset, x0, config)
    record = {"problem": str(args.problem), "problem_seed": problem.seed, "x0_seed": x0_seed,
              "network_arch": arch_to_dict(arch),
              "trace": experiment.trace_to_dict(trace)}
    record["trace"]["objective_history"] = [
        list(p) for p in experiment.downsample_history(trace.objective_history)]
    out = Path(args.out) if args.out else _out_dir(args) / "traces" / (
        f"{Path(args.problem).stem}_{arch.label()}_{method}.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(record, sort_keys=True) + "\n")
    print(f"f_init          {trace.f_init:.6e}")
    print(f"f_opt           {trace.f_opt:.6e}")
    print(f"gradient calls  {trace.gradient_calls_used}")
    print(f"termination     {trace.termination}")
    print(f"trace written to {out}")
    return EXIT_OK


def _write_tables(table, out: Path):
    for kind, rows in (("detail", table.rows), ("summary", table.summary)):
        for fmt in ("csv", "md"):
            (out / f"{kind}.{fmt}").write_text(report.render(rows, kind, fmt))


def cmd_crosscheck(args) -> int:
    cfg = _matrix_config(args)
    workers = effective(args, "workers") or experiment.default_workers()
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    log.info("size %s: %d cells x %d seeds on %d workers", cfg.size_class,
             len(experiment.matrix_specs(cfg)), len(cfg.seeds), workers)
    table = experiment.run_matrix(cfg, workers=int(workers))
    store = experiment.persist(table, out / "results.jsonl")
    _write_tables(table, out)
    fmt = effective(args, "format")
    print(f"Detailed results, size {table.size_class} "
          f"({cfg.aggregation} over {len(cfg.seeds)} seeds)")
    print(report.render(table.rows, "detail", fmt))
    print(f"Deep vs shallow, size {table.size_class}, method {table.summary[0].method}")
    print(report.render(table.summary, "summary", fmt))
    print(f"results store: {store}")
    if table.failed_runs == table.total_runs:
        print("every run failed", file=sys.stderr)
        return EXIT_FAILED
    if table.failed_runs:
        print(f"{table.failed_runs} of {table.total_runs} runs failed; see rows marked *",
              file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        table = experiment.load(args.store)
    except experiment.ResultsFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    fmt = effective(args, "format")
    which = args.table
    parts = []
    if which in ("detail", "both"):
        parts.append(report.render(table.rows, "detail", fmt))
    if which in ("summary", "both"):
        parts.append(report.render(table.summary, "summary", fmt))
    sys.stdout.write("\n".join(parts))
    return EXIT_OK


def _add_matrix_flags(p):
    p.add_argument("--size", help="size class A, B or C (default A)")
    p.add_argument("--methods", help="comma list of sgd,rmsprop,adadelta,cg (default all)")
    p.add_argument("--seeds", help="seed count (default 15) or explicit comma list")
    p.add_argument("--budget", type=int, help="gradient-call budget per run (default 2000)")
    p.add_argument("--wf", type=float, help="saturation factor w_f (default 1.5)")
    p.add_argument("--input-dist", dest="input_dist", help="normal or uniform (default normal)")
    p.add_argument("--agg", help="median or mean over seeds (default median)")
    p.add_argument("--master-seed", dest="master_seed", type=int, help="first seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deepshallow", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="TOML file with option defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write problem files for a size class")
    _add_matrix_flags(p)
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./results)")
    p.add_argument("--no-arrays", action="store_true", help="store only spec and seed")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit", help="fit one network to one problem file")
    p.add_argument("problem", help="problem file written by 'gen'")
    p.add_argument("--network", help="A_3 or IN:WIDTHxDEPTH:OUT (default: the generator)")
    p.add_argument("--method", default="cg", help="sgd, rmsprop, adadelta or cg")
    p.add_argument("--budget", type=int)
    p.add_argument("--wf", type=float, help="saturation factor for the starting point")
    p.add_argument("--x0-seed", dest="x0_seed", type=int, help="default: the problem seed")
    p.add_argument("--out", help="trace file path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("crosscheck", help="run the shallow/deep cross-check matrix")
    _add_matrix_flags(p)
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./results)")
    p.add_argument("--workers", type=int, help="worker processes (default: logical cores)")
    p.add_argument("--format", choices=["csv", "md", "txt"])
    p.add_argument("--summary-method", dest="summary_method",
                   help="method shown in the summary table (default rmsprop)")
    p.set_defaults(func=cmd_crosscheck)

    p = sub.add_parser("report", help="render tables from a results store")
    p.add_argument("store", help="results.jsonl written by 'crosscheck'")
    p.add_argument("--format", choices=["csv", "md", "txt"])
    p.add_argument("--table", choices=["detail", "summary", "both"], default="both")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.file_config = _load_config_file(args.config) if args.config else {}
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProblemFormatError, experiment.ResultsFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO if isinstance(exc, OSError) else EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
