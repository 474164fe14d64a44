"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 config error, 3 runtime/simulation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .harness import ConfigError
from .netsim import active_kernel_name
from .topology import build_reference_topology, dump_topology


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    p = _Parser(prog="saginsim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    topo = sub.add_parser("topo", help="topology utilities")
    topo_sub = topo.add_subparsers(dest="topo_command", required=True)
    dump = topo_sub.add_parser("dump", help="write the directed edge list")
    dump.add_argument("config")
    dump.add_argument("out", help="output path, or - for stdout")

    pre = sub.add_parser("pretrain", help="fluid-oracle pretraining of the 27 models")
    pre.add_argument("config")
    pre.add_argument("ckpt_dir")

    run = sub.add_parser("run", help="single simulation run")
    run.add_argument("config")
    run.add_argument("--policy", choices=("sp", "dnn"), default=None)
    run.add_argument("--ckpt", default=None, help="checkpoint directory for dnn")

    sweep = sub.add_parser("sweep", help="source-count sweep over both policies")
    sweep.add_argument("config")
    sweep.add_argument("--out", required=True, help="CSV output path")
    sweep.add_argument("--plot", default=None, help="directory for SVG plots")
    sweep.add_argument("--workers", type=int, default=1)
    return p


def _cmd_topo_dump(args) -> int:
    cfg = harness.load_config(args.config)
    text = dump_topology(build_reference_topology(cfg.topology))
    if args.out == "-":
        sys.stdout.write(text)
    else:
        out = harness.resolve_outdir(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
    return 0


def _cmd_pretrain(args) -> int:
    cfg = harness.load_config(args.config)
    report = harness.run_pretrain(cfg, harness.resolve_outdir(args.ckpt_dir))
    summary = {k: report[k] for k in ("samples", "positive_labels", "negative_labels")}
    summary["mean_final_loss"] = (
        sum(report["final_losses"]) / len(report["final_losses"]))
    print(json.dumps(summary))
    return 0


def _cmd_run(args) -> int:
    cfg = harness.load_config(args.config)
    if args.policy:
        cfg.routing.policy = args.policy
    if args.ckpt:
        cfg.routing.checkpoint_dir = str(harness.resolve_outdir(args.ckpt))
    if cfg.routing.policy == "dnn":
        harness.ensure_checkpoints(cfg)
    report = harness.run_single(cfg, cfg.routing.policy,
                                cfg.traffic.n_sources, cfg.simulation.seed)
    print(json.dumps({
        "kernel": active_kernel_name(),
        "policy": cfg.routing.policy,
        "n_sources": cfg.traffic.n_sources,
        "seed": cfg.simulation.seed,
        "duration_s": report.duration_s,
        "throughput_bps": report.throughput_bps,
        "loss_rate": report.loss_rate,
        "mean_delay_s": report.mean_delay_s,
    }))
    return 0


def _cmd_sweep(args) -> int:
    cfg = harness.load_config(args.config)

    def progress(done, total, row):
        print(f"[{done}/{total}] {row.policy} n={row.n_sources} seed={row.seed} "
              f"loss={row.loss_rate:.4f}", file=sys.stderr)

    rows = harness.run_sweep(cfg, workers=max(1, args.workers), progress=progress)
    out = harness.resolve_outdir(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    harness.emit_csv(rows, out)
    print(f"wrote {out}")
    if args.plot:
        plot_dir = harness.resolve_outdir(args.plot)
        plot_dir.mkdir(parents=True, exist_ok=True)
        for metric in ("throughput_bps", "loss_rate"):
            target = Path(plot_dir) / f"{metric}.svg"
            harness.emit_plot(rows, metric, target)
            print(f"wrote {target}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "topo":
            return _cmd_topo_dump(args)
        if args.command == "pretrain":
            return _cmd_pretrain(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # simulation/runtime failures
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
