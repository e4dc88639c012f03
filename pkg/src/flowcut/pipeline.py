"""Stage drivers shared by the CLI subcommands.

On-disk layout produced by a full run::

    <out>/flow/00000_fw.flo ...     flow t -> t+1 (t < n-1) and t -> t-1 (t > 0)
    <out>/graphcut/00000.pgm ...    pseudo masks, plus 00000.json diagnostics
    <out>/refine/seghead.segh       trained head
    <out>/refine/masks/00000.pgm    inferred masks
    <out>/eval.csv                  only when ground truth exists
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import features
from ._accel import max_workers
from .config import PipelineConfig
from .evaluation import evaluate_sequence
from .flow import flow_to_rgb, horn_schunck, read_flo, write_flo
from .graphcut import graphcut_frame
from .refine import NeighborFlows, infer, quantize_head, train, write_checkpoint
from .video import load_sequence, read_mask, save_mask, write_ppm

log = logging.getLogger("flowcut")


class StageError(RuntimeError):
    pass


def _map(fn, items):
    workers = min(max_workers(), len(items))
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def fw_name(t):
    return f"{t:05d}_fw.flo"


def bw_name(t):
    return f"{t:05d}_bw.flo"


def run_flow(seq_dir, out_dir, cfg=None):
    cfg = cfg or PipelineConfig()
    seq = load_sequence(seq_dir)
    n = len(seq)
    if n < 2:
        raise StageError(f"flow needs at least 2 frames, found {n}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(t, t + 1, fw_name(t)) for t in range(n - 1)] + [(t, t - 1, bw_name(t)) for t in range(1, n)]

    def work(job):
        src, dst, name = job
        flow = horn_schunck(seq.frames[src], seq.frames[dst], cfg.flow)
        write_flo(flow, out / name)
        if cfg.flow.write_rgb:
            write_ppm(flow_to_rgb(flow), out / (name[:-4] + ".ppm"))
        return name

    names = _map(work, jobs)
    log.info("flow: wrote %d fields to %s", len(names), out)
    return names


def _load_flo(flow_dir, name):
    path = Path(flow_dir) / name
    if not path.exists():
        raise StageError(f"missing flow file {path}")
    return read_flo(path)


def graphcut_flow_name(t, n):
    """Forward flow for every frame but the last, which uses its backward flow."""
    return fw_name(t) if t < n - 1 else bw_name(t)


def run_graphcut(seq_dir, flow_dir, out_dir, cfg=None):
    cfg = cfg or PipelineConfig()
    flow_dir = cfg.flow.graphcut_flow_dir or flow_dir
    seq = load_sequence(seq_dir)
    n = len(seq)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    feat_dir = Path(cfg.paths.features_dir) if cfg.paths.features_dir else None
    # Fail before any work if a flow file is missing.
    names = [graphcut_flow_name(t, n) for t in range(n)]
    for name in names:
        if not (Path(flow_dir) / name).exists():
            raise StageError(f"missing flow file {Path(flow_dir) / name}")

    def work(t):
        flow = _load_flo(flow_dir, names[t])
        feat_img = feat_flow = None
        if feat_dir is not None:
            p = feat_dir / f"{t:05d}_img.fgrd"
            if p.exists():
                feat_img = features.read_fgrd(p).astype(np.float64)
            p = feat_dir / f"{t:05d}_flow.fgrd"
            if p.exists():
                feat_flow = features.read_fgrd(p).astype(np.float64)
        mask, res = graphcut_frame(seq.frames[t], flow, cfg.graphcut, feat_img, feat_flow)
        save_mask(mask, out / f"{t:05d}.pgm")
        record = {"frame": t, "flow_file": names[t], **res.summary()}
        (out / f"{t:05d}.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
        return record

    records = _map(work, list(range(n)))
    log.info("graphcut: %d pseudo masks in %s", len(records), out)
    return records


def load_masks(mask_dir, n):
    masks = []
    for t in range(n):
        path = Path(mask_dir) / f"{t:05d}.pgm"
        if not path.exists():
            raise StageError(f"missing mask {path}")
        masks.append(read_mask(path))
    return masks


def load_neighbor_flows(flow_dir, n):
    fw = {t: _load_flo(flow_dir, fw_name(t)) for t in range(n - 1)}
    bw = {t: _load_flo(flow_dir, bw_name(t)) for t in range(1, n)}
    return NeighborFlows(fw, bw)


def run_refine(seq_dir, pseudo_dir, flow_dir, out_dir, cfg=None):
    cfg = cfg or PipelineConfig()
    flow_dir = cfg.flow.warp_flow_dir or flow_dir
    seq = load_sequence(seq_dir)
    n = len(seq)
    pseudo = load_masks(pseudo_dir, n)
    flows = load_neighbor_flows(flow_dir, n)
    out = Path(out_dir)
    (out / "masks").mkdir(parents=True, exist_ok=True)

    losses = []
    head = train(seq.frames, pseudo, flows, cfg.train,
                 callback=lambda step, t, nb, loss: losses.append(loss))
    head = quantize_head(head)
    write_checkpoint(head, out / "seghead.segh")
    preds = [infer(head, f, cfg.eval.threshold) for f in seq.frames]
    for t, m in enumerate(preds):
        save_mask(m, out / "masks" / f"{t:05d}.pgm")
    with open(out / "losses.csv", "w") as fh:
        fh.write("epoch,mean_loss\n")
        for e in range(cfg.train.n_epochs):
            fh.write(f"{e},{float(np.mean(losses[e * n:(e + 1) * n])):.8f}\n")
    log.info("refine: trained %d epochs, outputs in %s", cfg.train.n_epochs, out)
    return head, preds


def run_eval(pred_dir, gt_dir, out_csv=None):
    preds = sorted(p.name for p in Path(pred_dir).glob("*.pgm"))
    gts = sorted(p.name for p in Path(gt_dir).glob("*.pgm"))
    if len(preds) != len(gts):
        raise StageError(f"{len(preds)} predictions but {len(gts)} ground-truth masks")
    if preds != gts:
        raise StageError("prediction and ground-truth file names differ")
    report = evaluate_sequence([read_mask(Path(pred_dir) / p) for p in preds],
                               [read_mask(Path(gt_dir) / g) for g in gts],
                               name=Path(gt_dir).parent.name)
    if out_csv is not None:
        Path(out_csv).parent.mkdir(parents=True, exist_ok=True)
        Path(out_csv).write_text(report.to_csv())
    return report


def run_pipeline(seq_dir, out_dir, cfg=None):
    cfg = cfg or PipelineConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json() + "\n")
    run_flow(seq_dir, out / "flow", cfg)
    run_graphcut(seq_dir, out / "flow", out / "graphcut", cfg)
    run_refine(seq_dir, out / "graphcut", out / "flow", out / "refine", cfg)
    gt_dir = Path(seq_dir) / "gt"
    if not gt_dir.is_dir():
        log.warning("no ground truth in %s; skipping eval", seq_dir)
        return None
    return run_eval(out / "refine" / "masks", gt_dir, out / "eval.csv")
