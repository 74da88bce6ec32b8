"""Command-line interface.

Subcommands: ``assess`` (Fiedler report over feature-map files), ``cut``
(spectral cut-out of one feature map), ``simulate`` (one continual-learning
run), ``verify`` (randomized checks of the spectral bounds, the gradient
implementation, and the cut relaxation), and ``dump`` (write a synthetic
stream to disk).

Exit codes: 0 success, 2 bad arguments or configuration, 3 unreadable or
malformed input files, 4 a verification that ran but failed. Output is JSON
(schema_version 1); identical invocations produce identical bytes.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .assess import (
    average_fiedler,
    relaxation_report,
    verify_lemma1,
    verify_theorem1,
)
from .cut import maskcut
from .driver import RunConfig, VARIANTS, run_ablation, run_mocl
from .exceptions import ConfigurationError, CuterError, FileFormatError
from .fileio import dump_stream, read_feature_map
from .graph import KERNEL_KINDS, KernelSpec
from .model import gradient_check
from .stream import StreamConfig


def _sigma(value):
    if value == "median":
        return value
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"sigma must be 'median' or a number, got {value!r}"
        )


def _positive_int(value):
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {value!r}")
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {n}")
    return n


def _expand_inputs(paths):
    """Files stay files; directories expand to their sorted *.fpm contents."""
    out = []
    for p in paths:
        path = Path(p)
        if path.is_dir():
            out.extend(sorted(str(q) for q in path.glob("*.fpm")))
        else:
            out.append(str(path))
    if not out:
        raise ConfigurationError("no inputs: the given directories hold no .fpm files")
    return out


def _add_kernel_args(p):
    p.add_argument("--kernel", choices=KERNEL_KINDS, default="gaussian")
    p.add_argument("--sigma", type=_sigma, default="median")
    p.add_argument("--tau-sim", type=float, default=0.2)
    p.add_argument("--epsilon-floor", type=float, default=1e-5)


def _kernel_from(args):
    try:
        return KernelSpec(
            kind=args.kernel,
            sigma=args.sigma,
            tau_sim=args.tau_sim,
            epsilon_floor=args.epsilon_floor,
        )
    except ValueError as exc:
        raise ConfigurationError(str(exc), path="kernel")


def _emit(obj, out=None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"not valid JSON: {exc}", filename=str(path))


def cmd_assess(args):
    kernel = _kernel_from(args)
    fms = [read_feature_map(p) for p in _expand_inputs(args.files)]
    report = average_fiedler(
        fms, kernel, source_id=args.source_id, which=args.which
    )
    _emit({"schema_version": 1, **report.to_dict()}, args.out)
    return 0


def cmd_cut(args):
    kernel = _kernel_from(args)
    fm = read_feature_map(args.file)
    result = maskcut(fm, kernel, n_iters=args.n_iters)
    _emit(
        {"schema_version": 1, "file": args.file, **result.to_dict()},
        args.out,
    )
    return 0


def cmd_simulate(args):
    if args.config:
        cfg = RunConfig.from_dict(_load_json(args.config))
    else:
        cfg = RunConfig()
    overrides = {}
    if args.variant is not None:
        overrides["variant"] = args.variant
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    if args.ablation:
        if args.ablation == "all":
            variants = list(VARIANTS)
        else:
            variants = args.ablation.split(",")
            for v in variants:
                if v not in VARIANTS:
                    raise ConfigurationError(
                        f"unknown variant {v!r}", path="ablation"
                    )
        seeds = tuple(int(s) for s in args.seeds.split(","))
        table = run_ablation(cfg, variants=variants, seeds=seeds, out_dir=args.out)
        _emit({"schema_version": 1, "results": table})
        return 0
    artifacts = run_mocl(cfg, out_dir=args.out)
    _emit(
        {
            "schema_version": 1,
            "run_id": artifacts.run_id,
            "variant": cfg.variant,
            "seed": cfg.seed,
            "avg": artifacts.avg,
            "last": artifacts.last,
            "out_dir": artifacts.out_dir,
        }
    )
    return 0


def cmd_verify(args):
    if args.check == "lemma1":
        report = verify_lemma1(trials=args.trials, n_max=args.n_max, seed=args.seed)
        ok = report.violations == 0
        payload = report.to_dict()
    elif args.check == "theorem1":
        report = verify_theorem1(trials=args.trials, seed=args.seed)
        ok = report.violations == 0
        payload = report.to_dict()
    elif args.check == "gradcheck":
        payload = gradient_check(n_configs=args.configs, seed=args.seed)
        worst = max(v["max_rel_error"] for v in payload.values())
        ok = worst < args.max_rel_error
        payload = {"kinds": payload, "max_rel_error": worst}
    else:  # ncut-oracle
        payload = relaxation_report(
            trials=args.trials, n_max=args.n_max, seed=args.seed, factor=args.factor
        )
        ok = payload["fraction"] >= args.min_fraction
    _emit({"schema_version": 1, "check": args.check, "passed": ok, **payload}, args.out)
    return 0 if ok else 4


def cmd_dump(args):
    if args.config:
        cfg = StreamConfig.from_dict(_load_json(args.config))
    else:
        cfg = StreamConfig()
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    written = dump_stream(cfg, args.out, limit=args.limit)
    _emit({"schema_version": 1, "written": written, "out_dir": args.out})
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cuter",
        description="Spectral cut-out, graph assessment, and continual-learning runs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("assess", help="Fiedler-value report over feature-map files")
    p.add_argument("files", nargs="+",
                   help=".fpm feature-map files or directories of them")
    _add_kernel_args(p)
    p.add_argument("--which", choices=("unnormalized", "normalized"),
                   default="normalized")
    p.add_argument("--source-id", default="")
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("cut", help="iterative spectral cut-out of one feature map")
    p.add_argument("file", help=".fpm feature-map file")
    _add_kernel_args(p)
    p.add_argument("--n-iters", type=_positive_int, default=3)
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_cut)

    p = sub.add_parser("simulate", help="run one continual-learning experiment")
    p.add_argument("--config", help="run-config JSON file (defaults if omitted)")
    p.add_argument("--variant", choices=VARIANTS, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ablation", default=None,
                   help="comma-separated variants (or 'all'): run each on the "
                        "same seeds and emit a comparison table")
    p.add_argument("--seeds", default="0,1,2",
                   help="comma-separated seeds for --ablation")
    p.add_argument("--out", help="artifact directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="randomized implementation checks")
    p.add_argument(
        "check", choices=("lemma1", "theorem1", "gradcheck", "ncut-oracle")
    )
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--n-max", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--configs", type=int, default=5,
                   help="random configurations for gradcheck")
    p.add_argument("--max-rel-error", type=float, default=1e-4)
    p.add_argument("--factor", type=float, default=1.2)
    p.add_argument("--min-fraction", type=float, default=0.9)
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("dump", help="write a synthetic stream to disk")
    p.add_argument("--config", help="stream-config JSON file (defaults if omitted)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_dump)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except CuterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
