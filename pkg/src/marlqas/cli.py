"""Command-line entry point: train, baseline, summarize, verify, print-config.

Exit codes: 0 success, 1 verification mismatch, 2 configuration error,
3 training divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import experiment
from .config import ConfigError, dump_config, load_config
from .nn import TrainingError

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3

log = logging.getLogger("marlqas")


def _load(args) -> "experiment.ExperimentConfig":
    cfg = load_config(args.config)
    if getattr(args, "agents", None) is not None:
        cfg = dataclasses.replace(cfg, agents=args.agents)
    if getattr(args, "out", None) is not None:
        cfg = dataclasses.replace(cfg, output_dir=str(args.out))
    return cfg.validate()


def cmd_train(args) -> int:
    cfg = _load(args)
    seeds = [args.seed] if args.seed is not None else None
    outcomes = experiment.run_training(cfg, Path(cfg.output_dir), seeds, args.deterministic, args.workers)
    for o in outcomes:
        print(f"seed {o.seed}: {'converged' if o.converged else 'not converged'} -> {o.report_path}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = _load(args)
    if args.kind is not None:
        cfg = dataclasses.replace(cfg, baseline=dataclasses.replace(cfg.baseline, kind=args.kind))
    if args.depth is not None:
        cfg = dataclasses.replace(cfg, baseline=dataclasses.replace(cfg.baseline, depth=args.depth))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seeds=[args.seed])
    path = experiment.run_baseline(cfg.validate(), Path(cfg.output_dir))
    doc = experiment.load_report(path)
    eta_test = "" if doc["eta_test"] is None else f" eta_test={doc['eta_test']:.4f}"
    print(f"{doc['method']}({doc['depth']}) n={doc['n']}: eta_train={doc['eta_train']:.4f}{eta_test} "
          f"N_2q={doc['n_2q']} N_par={doc['n_par']} -> {path}")
    return EXIT_OK


def cmd_summarize(args) -> int:
    out = Path(args.out) if args.out else Path("summary")
    written = experiment.summarize(args.reports, out, figures=not args.no_figures)
    for name, p in written.items():
        print(f"{name}: {p}")
    return EXIT_OK


def cmd_verify(args) -> int:
    status = EXIT_OK
    for path in experiment.find_reports(args.reports):
        report = experiment.load_report(path)
        for c in experiment.verify_report(report):
            print(f"{'ok  ' if c.ok else 'FAIL'} {path}: {c.name}" + (f" ({c.detail})" if c.detail and not c.ok else ""))
            if not c.ok:
                status = EXIT_MISMATCH
    return status


def cmd_print_config(args) -> int:
    cfg = _load(args)
    sys.stdout.write(dump_config(cfg if args.raw else cfg.resolved()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="marlqas", description="Multi-agent quantum architecture search")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True, agents=True):
        sp.add_argument("--config", type=Path, help="YAML experiment config (defaults when omitted)")
        sp.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
        if seed:
            sp.add_argument("--seed", type=int, help="run only this master seed")
        if agents:
            sp.add_argument("--agents", type=int, help="number of agents m (must divide n)")

    sp = sub.add_parser("train", help="train agents and record the designed circuits")
    common(sp)
    sp.add_argument("--deterministic", action="store_true",
                    help="single worker, no wall-clock column; byte-identical logs across reruns")
    sp.add_argument("--workers", type=int, default=1, help="parallel seed processes")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("baseline", help="evaluate the QAOA or HEA baseline")
    common(sp, agents=False)
    sp.add_argument("--kind", choices=("qaoa", "hea"))
    sp.add_argument("--depth", type=int, help="QAOA p or HEA L (default from the per-n table)")
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("summarize", help="comparison and step-count tables plus figures")
    sp.add_argument("reports", nargs="+", help="report.json files or directories to search")
    sp.add_argument("--out", type=Path, help="summary directory (default ./summary)")
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(func=cmd_summarize)

    sp = sub.add_parser("verify", help="recompute report numbers from circuit files and logs")
    sp.add_argument("reports", nargs="+")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("print-config", help="dump the resolved config with every default")
    common(sp, seed=False)
    sp.add_argument("--raw", action="store_true", help="keep per-n defaults as null")
    sp.set_defaults(func=cmd_print_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingError as exc:
        print(f"training diverged: {exc} (see diagnostics.json in the run directory)", file=sys.stderr)
        return EXIT_DIVERGED
    except experiment.ReportError as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
