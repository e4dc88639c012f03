"""Deterministic synthetic videos: one textured object translating over a textured background."""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .rng import SplitMix64, derive_seed, mix64
from .video import VideoSequence

TEXTURE_KINDS = ("flat", "checker", "noise")
SHAPES = ("rectangle", "ellipse")


@dataclass
class Texture:
    kind: str = "flat"
    color: tuple = (0.5, 0.5, 0.5)
    # checker
    period: int = 8
    colors: tuple = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    # noise: color + amplitude * (U[0,1) - 0.5), per pixel and channel
    seed: int = 0
    amplitude: float = 0.5

    def __post_init__(self):
        if self.kind not in TEXTURE_KINDS:
            raise ValueError(f"unknown texture kind {self.kind!r}")
        if self.kind == "checker" and self.period < 1:
            raise ValueError("checker period must be >= 1")
        self.color = tuple(float(c) for c in self.color)
        self.colors = tuple(tuple(float(c) for c in col) for col in self.colors)

    def render(self, ys, xs):
        """Texture values at integer texture coordinates, shape ``ys.shape + (3,)``."""
        ys = np.asarray(ys, dtype=np.int64)
        xs = np.asarray(xs, dtype=np.int64)
        if self.kind == "flat":
            return np.broadcast_to(np.array(self.color), ys.shape + (3,)).copy()
        if self.kind == "checker":
            parity = ((ys // self.period) + (xs // self.period)) % 2
            cols = np.array(self.colors)
            return cols[parity]
        # Counter-based noise: a hash of (seed, y, x, c) so any window of the
        # infinite texture can be rendered independently.
        base = np.uint64(mix64(int(self.seed) + 0x632BE59BD9B4E019))
        keys = ((ys.astype(np.uint64) & np.uint64(0xFFFFFFFF)) << np.uint64(32)) | (xs.astype(np.uint64) & np.uint64(0xFFFFFFFF))
        out = np.empty(ys.shape + (3,))
        with np.errstate(over="ignore"):
            for c in range(3):
                z = keys * np.uint64(3) + np.uint64(c) + base
                z = z * np.uint64(0x9E3779B97F4A7C15)
                z = z ^ (z >> np.uint64(30))
                z = z * np.uint64(0xBF58476D1CE4E5B9)
                z = z ^ (z >> np.uint64(27))
                z = z * np.uint64(0x94D049BB133111EB)
                z = z ^ (z >> np.uint64(31))
                u = (z >> np.uint64(11)).astype(np.float64) / float(1 << 53)
                out[..., c] = self.color[c] + self.amplitude * (u - 0.5)
        return np.clip(out, 0.0, 1.0)


@dataclass
class SynthSpec:
    height: int = 128
    width: int = 256
    n_frames: int = 10
    object_shape: str = "rectangle"
    object_size: tuple = (40, 64)
    velocity: tuple = (2.0, 1.0)
    fg_texture: Texture = field(default_factory=Texture)
    bg_texture: Texture = field(default_factory=Texture)
    same_texture: bool = False
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.fg_texture, dict):
            self.fg_texture = Texture(**self.fg_texture)
        if isinstance(self.bg_texture, dict):
            self.bg_texture = Texture(**self.bg_texture)
        if isinstance(self.object_size, (int, float)):
            self.object_size = (int(self.object_size), int(self.object_size))
        self.object_size = tuple(int(s) for s in self.object_size)
        self.velocity = tuple(float(v) for v in self.velocity)
        self.validate()

    def validate(self):
        if self.object_shape not in SHAPES:
            raise ValueError(f"unknown object shape {self.object_shape!r}")
        if self.n_frames < 5:
            raise ValueError("n_frames must be >= 5")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        oh, ow = self.object_size
        if oh < 1 or ow < 1:
            raise ValueError("object_size must be positive")
        for t in (0, self.n_frames - 1):
            y0, x0 = self.position(t)
            if y0 < 0 or x0 < 0 or y0 + oh > self.height or x0 + ow > self.width:
                raise ValueError(f"object leaves the frame at t={t}")

    def position(self, t):
        """Top-left corner of the bounding box at frame ``t`` (integer pixels).

        The trajectory is centred in the frame; positions round half up.
        """
        oh, ow = self.object_size
        vx, vy = self.velocity
        mid = (self.n_frames - 1) / 2.0
        y = (self.height - oh) / 2.0 + (t - mid) * vy
        x = (self.width - ow) / 2.0 + (t - mid) * vx
        return int(np.floor(y + 0.5)), int(np.floor(x + 0.5))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown SynthSpec keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("fg_texture", "bg_texture"):
            if key in d and isinstance(d[key], dict):
                tex_unknown = set(d[key]) - set(Texture.__dataclass_fields__)
                if tex_unknown:
                    raise ValueError(f"unknown texture keys: {sorted(tex_unknown)}")
                d[key] = Texture(**d[key])
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def shape_footprint(spec):
    """Boolean footprint of the object inside its bounding box."""
    oh, ow = spec.object_size
    if spec.object_shape == "rectangle":
        return np.ones((oh, ow), dtype=bool)
    yy = (np.arange(oh) + 0.5 - oh / 2.0) / (oh / 2.0)
    xx = (np.arange(ow) + 0.5 - ow / 2.0) / (ow / 2.0)
    return yy[:, None] ** 2 + xx[None, :] ** 2 <= 1.0


def object_mask(spec, t):
    mask = np.zeros((spec.height, spec.width), dtype=bool)
    y0, x0 = spec.position(t)
    oh, ow = spec.object_size
    mask[y0:y0 + oh, x0:x0 + ow] = shape_footprint(spec)
    return mask


def generate(spec):
    """Render ``spec`` to a VideoSequence with exact ground-truth masks.

    The foreground texture is attached to the object (it moves with it); the
    background texture is fixed to the frame. Frames are quantized to 8 bits so
    they survive a PPM round trip unchanged.
    """
    spec.validate()
    fg_tex = spec.bg_texture if spec.same_texture else spec.fg_texture
    H, W = spec.height, spec.width
    ys, xs = np.mgrid[0:H, 0:W]
    background = spec.bg_texture.render(ys, xs)
    noise_rng = SplitMix64(derive_seed(spec.seed, "synthgen.noise"))
    frames, masks = [], []
    for t in range(spec.n_frames):
        mask = object_mask(spec, t)
        y0, x0 = spec.position(t)
        frame = background.copy()
        frame[mask] = fg_tex.render(ys - y0, xs - x0)[mask]
        if spec.noise_sigma > 0:
            frame = frame + spec.noise_sigma * noise_rng.normal_array(H * W * 3).reshape(H, W, 3)
        frame = np.floor(np.clip(frame, 0.0, 1.0) * 255.0 + 0.5) / 255.0
        frames.append(frame)
        masks.append(mask)
    return VideoSequence(frames, masks, name=f"synth_{spec.seed}")


def corrupt_masks(masks, erase_fraction, frame_fraction, seed):
    """Erase a fraction of foreground pixels in a random subset of frames.

    ``round(frame_fraction * n)`` frames are picked; in each, exactly
    ``round(erase_fraction * count)`` foreground pixels become background.
    Rounding is half-up.
    """
    rng = SplitMix64(seed)
    n = len(masks)
    n_frames = int(np.floor(frame_fraction * n + 0.5))
    chosen = set(int(i) for i in rng.sample(n, n_frames)) if n_frames else set()
    out = []
    for t, m in enumerate(masks):
        m = np.asarray(m, dtype=bool).copy()
        if t in chosen:
            fg = np.flatnonzero(m)
            k = int(np.floor(erase_fraction * fg.size + 0.5))
            if k:
                flat = m.reshape(-1)
                flat[fg[rng.sample(fg.size, k)]] = False
        out.append(m)
    return out


def flat_spec(seed=0, **overrides):
    """Distinct-colour object on a distinct-colour background (128x256, 10 frames)."""
    params = dict(
        height=128, width=256, n_frames=10, object_shape="rectangle",
        object_size=(80, 160), velocity=(2.0, 1.0),
        fg_texture=Texture("flat", color=(0.85, 0.2, 0.15)),
        bg_texture=Texture("flat", color=(0.15, 0.3, 0.8)),
        noise_sigma=0.02, seed=seed,
    )
    params.update(overrides)
    return SynthSpec(**params)


def same_texture_spec(seed=0, **overrides):
    """Object carved from the background's own noise texture, moving at (2, 1)."""
    params = dict(
        height=128, width=256, n_frames=10, object_shape="rectangle",
        object_size=(80, 160), velocity=(2.0, 1.0),
        bg_texture=Texture("noise", color=(0.5, 0.5, 0.5), seed=11, amplitude=0.8),
        same_texture=True, noise_sigma=0.02, seed=seed,
    )
    params.update(overrides)
    return SynthSpec(**params)
