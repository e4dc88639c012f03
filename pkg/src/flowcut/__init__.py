"""Unsupervised video object segmentation: flow-guided spectral graph-cut
pseudo masks refined by a small temporally consistent segmentation head."""
from .config import PipelineConfig
from .evaluation import evaluate_sequence, iou
from .flow import FlowField, HSConfig, horn_schunck
from .graphcut import GraphCutConfig, graphcut_frame
from .refine import SegHead, TrainConfig, infer, train
from .synthgen import SynthSpec, generate
from .video import VideoSequence, load_sequence, save_sequence

__version__ = "0.1.0"
