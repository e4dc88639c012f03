"""Handcrafted per-patch descriptors and the FGRD feature-file format."""
import struct

import numpy as np

from .video import FormatError, PatchGrid

DESCRIPTOR_DIM = 12
FGRD_MAGIC = b"FGRD"


def _patches(arr, grid):
    """View the covered area of ``arr`` (H, W[, C]) as (gh, gw, p, p[, C])."""
    p = grid.p_s
    a = arr[:grid.gh * p, :grid.gw * p]
    shape = (grid.gh, p, grid.gw, p) + a.shape[2:]
    a = a.reshape(shape)
    return np.moveaxis(a, 2, 1)


def featurize(image, p_s):
    """12-d descriptor per ``p_s`` x ``p_s`` patch.

    Layout: mean RGB (3), std RGB (3), gradient-orientation histogram over
    0/45/90/135 degrees weighted by magnitude and normalised to sum 1 (4),
    mean gradient magnitude (1), luminance range (1). Gradients are central
    differences on luminance with half-sample symmetric padding inside each
    patch, so a patch never sees its neighbours.
    """
    image = np.asarray(image, dtype=np.float64)
    H, W = image.shape[:2]
    if H < p_s or W < p_s:
        raise ValueError(f"image {H}x{W} smaller than patch size {p_s}")
    grid = PatchGrid.for_shape(H, W, p_s)
    rgb = _patches(image, grid)                                  # (gh, gw, p, p, 3)
    lum = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]

    out = np.empty((grid.gh, grid.gw, DESCRIPTOR_DIM))
    out[..., 0:3] = rgb.mean(axis=(2, 3))
    out[..., 3:6] = rgb.std(axis=(2, 3))

    padded = np.pad(lum, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="symmetric")
    gx = 0.5 * (padded[:, :, 1:-1, 2:] - padded[:, :, 1:-1, :-2])
    gy = 0.5 * (padded[:, :, 2:, 1:-1] - padded[:, :, :-2, 1:-1])
    mag = np.hypot(gx, gy)
    theta = np.degrees(np.arctan2(gy, gx)) % 180.0
    bins = np.floor((theta + 22.5) / 45.0).astype(int) % 4
    hist = np.stack([(mag * (bins == k)).sum(axis=(2, 3)) for k in range(4)], axis=-1)
    total = hist.sum(axis=-1, keepdims=True)
    out[..., 6:10] = np.divide(hist, total, out=np.zeros_like(hist), where=total > 1e-12)
    out[..., 10] = mag.mean(axis=(2, 3))
    out[..., 11] = lum.max(axis=(2, 3)) - lum.min(axis=(2, 3))
    return out


def center(grid_features):
    """Subtract the mean descriptor over all patches of one grid."""
    g = np.asarray(grid_features, dtype=np.float64)
    return g - g.reshape(-1, g.shape[-1]).mean(axis=0)


def write_fgrd(features, path):
    features = np.asarray(features)
    gh, gw, d = features.shape
    with open(path, "wb") as fh:
        fh.write(FGRD_MAGIC + struct.pack("<iii", gh, gw, d))
        fh.write(np.ascontiguousarray(features, dtype="<f4").tobytes())


def read_fgrd(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != FGRD_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header")
    gh, gw, d = struct.unpack("<iii", raw[4:16])
    need = 4 * gh * gw * d
    if len(raw) - 16 != need:
        raise FormatError(f"{path}: payload is {len(raw) - 16} bytes, expected {need}")
    return np.frombuffer(raw[16:], dtype="<f4").reshape(gh, gw, d).astype(np.float32)
