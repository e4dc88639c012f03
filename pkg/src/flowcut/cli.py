"""Command line entry point: ``flowcut <subcommand> ...``.

Diagnostics go to stderr; the only stdout output is the mIoU printed by
``eval`` and ``pipeline``.
"""
import argparse
import logging
import sys
from pathlib import Path

from . import pipeline as pl
from .config import PipelineConfig, help_text
from .synthgen import SynthSpec, generate
from .video import FormatError, save_sequence

log = logging.getLogger("flowcut")


def _common(p):
    p.add_argument("--config", help="JSON pipeline config (see --help-config)")
    p.add_argument("--seed", type=int, help="top-level seed (u64)")
    p.add_argument("--out", help="output directory (alternative to the positional)")
    p.add_argument("--alpha", type=float, help="graphcut image/flow blend")
    p.add_argument("--tau", type=float, help="graphcut adjacency threshold")
    p.add_argument("--mode", choices=("ncut", "raw_w"), help="graphcut eigen mode")
    p.add_argument("--epochs", type=int, help="refine epochs")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    ap = argparse.ArgumentParser(prog="flowcut", description="Flow-guided graph-cut video object segmentation.")
    ap.add_argument("--help-config", action="store_true", help="print the config schema with defaults and exit")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="render a synthetic sequence from a JSON spec")
    p.add_argument("spec")
    p.add_argument("out_dir", nargs="?")
    _common(p)

    p = sub.add_parser("flow", help="Horn-Schunck flow for every consecutive pair, both directions")
    p.add_argument("seq_dir", nargs="?")
    p.add_argument("out_dir", nargs="?")
    _common(p)

    p = sub.add_parser("graphcut", help="per-frame pseudo masks")
    p.add_argument("seq_dir", nargs="?")
    p.add_argument("flow_dir")
    p.add_argument("out_dir", nargs="?")
    _common(p)

    p = sub.add_parser("refine", help="train the segmentation head and infer masks")
    p.add_argument("seq_dir", nargs="?")
    p.add_argument("pseudo_dir")
    p.add_argument("flow_dir")
    p.add_argument("out_dir", nargs="?")
    _common(p)

    p = sub.add_parser("eval", help="per-frame IoU CSV and mIoU")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    p.add_argument("out_csv", nargs="?")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("pipeline", help="flow -> graphcut -> refine -> eval")
    p.add_argument("seq_dir", nargs="?")
    p.add_argument("out_dir", nargs="?")
    _common(p)
    return ap


def load_config(args):
    d = {}
    if getattr(args, "config", None):
        d = PipelineConfig.load(args.config).to_dict()
    if getattr(args, "seed", None) is not None:
        if args.seed < 0 or args.seed >= 1 << 64:
            raise ValueError("--seed must be a u64")
        d["seed"] = args.seed
    gc = d.setdefault("graphcut", {})
    for flag, key in (("alpha", "alpha"), ("tau", "tau"), ("mode", "eigen_mode")):
        if getattr(args, flag, None) is not None:
            gc[key] = getattr(args, flag)
    if getattr(args, "epochs", None) is not None:
        d.setdefault("train", {})["n_epochs"] = args.epochs
    return PipelineConfig.from_dict(d)


def _seq_out(args, cfg):
    seq = args.seq_dir or cfg.paths.seq_dir
    out = args.out or args.out_dir or cfg.paths.out_dir
    if seq is None:
        raise ValueError("no sequence directory given")
    if out is None:
        raise ValueError("no output directory given (positional or --out)")
    return seq, out


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.help_config:
        sys.stdout.write(help_text())
        return 0
    if args.command is None:
        ap.print_help(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return _dispatch(args)
    except (ValueError, KeyError, OSError, FormatError, pl.StageError, RuntimeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"flowcut {args.command}: error: {msg}", file=sys.stderr)
        return 1


def _dispatch(args):
    cmd = args.command
    if cmd == "eval":
        report = pl.run_eval(args.pred_dir, args.gt_dir, args.out_csv)
        print(f"{report.sequence_miou:.4f}")
        return 0
    cfg = load_config(args)
    if cmd == "synth":
        spec = SynthSpec.from_json(Path(args.spec).read_text())
        if args.seed is not None:
            spec.seed = args.seed
        out = args.out or args.out_dir
        if out is None:
            raise ValueError("no output directory given (positional or --out)")
        save_sequence(generate(spec), out)
        return 0
    seq, out = _seq_out(args, cfg)
    if cmd == "flow":
        pl.run_flow(seq, out, cfg)
    elif cmd == "graphcut":
        pl.run_graphcut(seq, args.flow_dir, out, cfg)
    elif cmd == "refine":
        pl.run_refine(seq, args.pseudo_dir, args.flow_dir, out, cfg)
    elif cmd == "pipeline":
        report = pl.run_pipeline(seq, out, cfg)
        if report is None:
            print("no ground truth found; eval skipped", file=sys.stderr)
        else:
            print(f"{report.sequence_miou:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
