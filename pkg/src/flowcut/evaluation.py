"""Jaccard index (IoU) per frame and its mean over a sequence."""
from dataclasses import dataclass, field

import numpy as np


@dataclass
class EvalReport:
    per_frame_iou: list
    sequence_miou: float
    name: str = ""

    def to_csv(self):
        lines = ["frame_index,iou"]
        lines += [f"{i},{v:.6f}" for i, v in enumerate(self.per_frame_iou)]
        lines.append(f"miou,{self.sequence_miou:.6f}")
        return "\n".join(lines) + "\n"


def iou(pred, gt):
    """|pred & gt| / |pred | gt|; two empty masks score 1."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    union = np.count_nonzero(pred | gt)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred & gt) / union


def evaluate_sequence(preds, gts, name=""):
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions for {len(gts)} ground-truth masks")
    if not preds:
        raise ValueError("nothing to evaluate")
    scores = [float(iou(p, g)) for p, g in zip(preds, gts)]
    return EvalReport(scores, float(np.mean(scores)), name)
