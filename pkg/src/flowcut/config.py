"""JSON pipeline configuration. Unknown keys are rejected at every level."""
import json
from dataclasses import asdict, dataclass, field, fields

from .flow import HSConfig
from .graphcut import GraphCutConfig
from .refine import TrainConfig


@dataclass
class FlowStageConfig(HSConfig):
    # Directories of precomputed .flo files (same naming as the flow stage)
    # to use instead of Horn-Schunck output, per consuming stage.
    graphcut_flow_dir: str = None
    warp_flow_dir: str = None
    write_rgb: bool = False


@dataclass
class PathsConfig:
    seq_dir: str = None
    out_dir: str = None
    features_dir: str = None


@dataclass
class EvalConfig:
    threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("eval threshold must lie in (0, 1)")


SECTIONS = {
    "graphcut": GraphCutConfig,
    "flow": FlowStageConfig,
    "train": TrainConfig,
    "paths": PathsConfig,
    "eval": EvalConfig,
}


@dataclass
class PipelineConfig:
    seed: int = 0
    graphcut: GraphCutConfig = field(default_factory=GraphCutConfig)
    flow: FlowStageConfig = field(default_factory=FlowStageConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        # The top-level seed drives every stage; stages derive their own streams from it.
        self.train.seed = self.seed

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        unknown = set(d) - set(SECTIONS) - {"seed"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {"seed": int(d.get("seed", 0))}
        for name, klass in SECTIONS.items():
            section = dict(d.get(name) or {})
            allowed = {f.name for f in fields(klass)}
            if name == "train":
                allowed.discard("seed")
            bad = set(section) - allowed
            if bad:
                raise ValueError(f"unknown keys in '{name}': {sorted(bad)}")
            kwargs[name] = klass(**section)
        return cls(**kwargs)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        d = {"seed": self.seed}
        for name in SECTIONS:
            section = asdict(getattr(self, name))
            if name == "train":
                section.pop("seed")
                section["neighbor_offsets"] = list(section["neighbor_offsets"])
            d[name] = section
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def help_text():
    return (
        "Pipeline configuration (JSON). Every key is optional; defaults shown.\n"
        "Unknown keys are rejected.\n\n" + PipelineConfig().to_json() + "\n"
    )
