"""Frames, masks, sequences and binary PPM/PGM I/O.

Frames are ``(H, W, 3)`` float64 arrays in [0, 1]; binary masks are ``(H, W)``
bool arrays; soft masks are ``(H, W)`` float arrays in [0, 1].
"""
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class PatchGrid:
    p_s: int
    gh: int
    gw: int

    @classmethod
    def for_shape(cls, height, width, p_s):
        gh, gw = height // p_s, width // p_s
        if gh < 1 or gw < 1:
            raise ValueError(f"frame {height}x{width} smaller than patch size {p_s}")
        return cls(p_s, gh, gw)

    @property
    def n(self):
        return self.gh * self.gw

    def rowcol(self, k):
        return k // self.gw, k % self.gw


@dataclass
class VideoSequence:
    frames: list
    gt_masks: list = None
    name: str = ""

    def __post_init__(self):
        if not self.frames:
            raise ValueError("empty sequence")
        shape = self.frames[0].shape
        for f in self.frames:
            if f.shape != shape or f.ndim != 3 or f.shape[2] != 3:
                raise ValueError("frames must share one (H, W, 3) shape")
        if self.gt_masks is not None:
            if len(self.gt_masks) != len(self.frames):
                raise ValueError("gt_masks length differs from frames")
            for m in self.gt_masks:
                if m.shape != shape[:2]:
                    raise ValueError(f"mask shape {m.shape} does not match frame shape {shape[:2]}")

    def __len__(self):
        return len(self.frames)

    @property
    def shape(self):
        return self.frames[0].shape[:2]


# --- netpbm -----------------------------------------------------------------

def _parse_header(data, magic):
    """Return (width, height, maxval, payload offset) of a binary netpbm blob."""
    if data[:2] != magic:
        raise FormatError(f"expected magic {magic!r}, got {data[:2]!r}")
    fields = []
    pos = 2
    n = len(data)
    while len(fields) < 3:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise FormatError("malformed header")
        fields.append(int(data[start:pos]))
    if pos >= n or not data[pos:pos + 1].isspace():
        raise FormatError("malformed header")
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}")
    return width, height, maxval, pos + 1


def _read_netpbm(path, magic, channels):
    data = Path(path).read_bytes()
    width, height, _, off = _parse_header(data, magic)
    size = width * height * channels
    payload = data[off:off + size]
    if len(payload) < size:
        raise FormatError(f"{path}: truncated payload ({len(payload)} of {size} bytes)")
    arr = np.frombuffer(payload, dtype=np.uint8)
    return arr.reshape((height, width, channels) if channels > 1 else (height, width))


def _write_netpbm(path, magic, arr):
    height, width = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"%s\n%d %d\n255\n" % (magic, width, height))
        fh.write(np.ascontiguousarray(arr, dtype=np.uint8).tobytes())


def quantize(values):
    """Map [0, 1] reals to bytes with round-half-up."""
    return np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def read_ppm(path):
    return _read_netpbm(path, b"P6", 3).astype(np.float64) / 255.0


def write_ppm(frame, path):
    _write_netpbm(path, b"P6", quantize(frame))


def read_pgm_bytes(path):
    return _read_netpbm(path, b"P5", 1)


def read_mask(path):
    return read_pgm_bytes(path) > 127


def save_mask(mask, path):
    """Write a bool mask as 0/255 or a soft mask as round-half-up bytes (P5)."""
    mask = np.asarray(mask)
    if mask.dtype == bool:
        _write_netpbm(path, b"P5", mask.astype(np.uint8) * 255)
    else:
        _write_netpbm(path, b"P5", quantize(mask))


# --- sequences --------------------------------------------------------------

_INDEX = re.compile(r"^(\d+)\.(ppm|pgm)$")


def _indexed_files(directory, ext):
    names = [n for n in os.listdir(directory) if n.endswith("." + ext) and _INDEX.match(n)]
    return sorted(names)


def load_sequence(dir_path, with_gt=False):
    """Load ``<seq>/frames/*.ppm`` (and ``<seq>/gt/*.pgm`` when ``with_gt``)."""
    root = Path(dir_path)
    frame_dir = root / "frames"
    if not frame_dir.is_dir():
        raise FileNotFoundError(f"missing frame directory {frame_dir}")
    names = _indexed_files(frame_dir, "ppm")
    if not names:
        raise FileNotFoundError(f"no frames in {frame_dir}")
    frames = [read_ppm(frame_dir / n) for n in names]
    gt = None
    if with_gt:
        gt_dir = root / "gt"
        if not gt_dir.is_dir():
            raise FileNotFoundError(f"missing ground-truth directory {gt_dir}")
        gt = []
        for n in names:
            path = gt_dir / (n[:-4] + ".pgm")
            if not path.exists():
                raise FileNotFoundError(f"missing mask {path}")
            gt.append(read_mask(path))
    return VideoSequence(frames, gt, root.name)


def save_sequence(seq, dir_path):
    root = Path(dir_path)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    for t, f in enumerate(seq.frames):
        write_ppm(f, root / "frames" / f"{t:05d}.ppm")
    if seq.gt_masks is not None:
        (root / "gt").mkdir(exist_ok=True)
        for t, m in enumerate(seq.gt_masks):
            save_mask(m, root / "gt" / f"{t:05d}.pgm")


# --- mask helpers -----------------------------------------------------------

def upsample_patch_mask(patch_values, grid, height, width):
    """Nearest-neighbour expansion of a ``(gh, gw)`` label grid to pixels.

    Rows/columns past ``gh * p_s`` / ``gw * p_s`` copy the last patch row/column.
    """
    patch_values = np.asarray(patch_values)
    if patch_values.shape != (grid.gh, grid.gw):
        raise ValueError(f"patch grid {patch_values.shape} != {(grid.gh, grid.gw)}")
    rows = np.minimum(np.arange(height) // grid.p_s, grid.gh - 1)
    cols = np.minimum(np.arange(width) // grid.p_s, grid.gw - 1)
    return patch_values[rows[:, None], cols[None, :]].astype(bool)


def binarize(mask, threshold=0.5):
    return np.asarray(mask) >= threshold
