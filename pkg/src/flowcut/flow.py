"""Horn-Schunck optical flow, flow colouring, backward mask warping and Middlebury ``.flo`` I/O."""
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .video import FormatError

FLO_TAG = 202021.25


@dataclass
class FlowField:
    """Dense motion in pixels/frame (u: +x right, v: +y down), stored as float32."""
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float32)
        self.v = np.asarray(self.v, dtype=np.float32)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ValueError("u and v must be 2-D arrays of one shape")

    @property
    def shape(self):
        return self.u.shape

    @classmethod
    def zeros(cls, height, width):
        return cls(np.zeros((height, width)), np.zeros((height, width)))

    @classmethod
    def constant(cls, height, width, u, v):
        return cls(np.full((height, width), u), np.full((height, width), v))


@dataclass
class HSConfig:
    smoothness: float = 0.1
    n_iters: int = 100
    n_levels: int = 3
    warps_per_level: int = 2

    def __post_init__(self):
        if self.smoothness <= 0 or self.n_iters < 1 or self.n_levels < 1 or self.warps_per_level < 1:
            raise ValueError("HSConfig fields must all be positive")


def luminance(frame):
    frame = np.asarray(frame, dtype=np.float64)
    return 0.299 * frame[..., 0] + 0.587 * frame[..., 1] + 0.114 * frame[..., 2]


def bilinear_sample(img, ys, xs):
    """Sample ``img`` (H, W[, C]) at real coordinates, clamping to the image rectangle."""
    H, W = img.shape[:2]
    xs = np.clip(xs, 0.0, W - 1)
    ys = np.clip(ys, 0.0, H - 1)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = xs - x0
    fy = ys - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def resize_bilinear(img, height, width):
    """Half-pixel-centre bilinear resize (a 2x shrink averages 2x2 blocks)."""
    H, W = img.shape[:2]
    ys = (np.arange(height) + 0.5) * (H / height) - 0.5
    xs = (np.arange(width) + 0.5) * (W / width) - 0.5
    return bilinear_sample(img, ys[:, None] + 0 * xs[None, :], xs[None, :] + 0 * ys[:, None])


def _gradients(img):
    p = np.pad(img, 1, mode="edge")
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    return gx, gy


def horn_schunck(f1, f2, cfg=None):
    """Coarse-to-fine Horn-Schunck flow taking ``f1`` to ``f2``.

    ``f1(x) ~ f2(x + flow(x))``. ``cfg.smoothness`` is the weight on the
    squared flow gradient (intensities in [0, 1]).
    """
    cfg = cfg or HSConfig()
    f1 = np.asarray(f1)
    f2 = np.asarray(f2)
    if f1.shape != f2.shape:
        raise ValueError(f"frame shapes differ: {f1.shape} vs {f2.shape}")
    I1, I2 = luminance(f1), luminance(f2)
    pyr1, pyr2 = [I1], [I2]
    for _ in range(cfg.n_levels - 1):
        h, w = pyr1[-1].shape
        if h < 8 or w < 8:
            break
        pyr1.append(resize_bilinear(pyr1[-1], h // 2, w // 2))
        pyr2.append(resize_bilinear(pyr2[-1], h // 2, w // 2))

    u = np.zeros(pyr1[-1].shape)
    v = np.zeros(pyr1[-1].shape)
    for level in range(len(pyr1) - 1, -1, -1):
        a, b = pyr1[level], pyr2[level]
        h, w = a.shape
        if u.shape != (h, w):
            sy, sx = h / u.shape[0], w / u.shape[1]
            u = resize_bilinear(u, h, w) * sx
            v = resize_bilinear(v, h, w) * sy
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        for _ in range(cfg.warps_per_level):
            bw = bilinear_sample(b, ys + v, xs + u)
            Ix, Iy = _gradients(0.5 * (a + bw))
            c = (bw - a) - Ix * u - Iy * v
            u, v = kernels.hs_jacobi(Ix, Iy, c, u, v, float(cfg.smoothness), int(cfg.n_iters))
    return FlowField(u, v)


def flow_to_rgb(flow, max_mag=None):
    """Colour-wheel rendering: hue from direction, saturation from magnitude, value 1.

    ``max_mag=None`` uses the field's own maximum magnitude (floored at 1e-6).
    """
    u = flow.u.astype(np.float64)
    v = flow.v.astype(np.float64)
    mag = np.hypot(u, v)
    if max_mag is None:
        max_mag = max(float(mag.max()) if mag.size else 0.0, 1e-6)
    elif max_mag <= 0:
        raise ValueError("max_mag must be positive")
    hue = np.degrees(np.arctan2(v, u)) % 360.0
    sat = np.minimum(1.0, mag / max_mag)
    return hsv_to_rgb(hue, sat, np.ones_like(sat))


def hsv_to_rgb(hue, sat, val):
    c = val * sat
    hp = hue / 60.0
    x = c * (1.0 - np.abs(hp % 2.0 - 1.0))
    sector = np.floor(hp).astype(int) % 6
    zero = np.zeros_like(c)
    r = np.choose(sector, [c, x, zero, zero, x, c])
    g = np.choose(sector, [x, c, c, x, zero, zero])
    b = np.choose(sector, [zero, zero, x, c, c, x])
    m = val - c
    return np.stack([r + m, g + m, b + m], axis=-1)


# --- backward warping --------------------------------------------------------

class WarpOperator:
    """Bilinear gather ``out(x) = src(x + flow(x))`` with clamped coordinates.

    Stores the four source indices and weights per output pixel so the same
    operator gives the forward warp and its adjoint (for backprop).
    """

    def __init__(self, flow):
        H, W = flow.shape
        self.shape = (H, W)
        ys, xs = np.mgrid[0:H, 0:W].astype(np.float64)
        sx = np.clip(xs + flow.u, 0.0, W - 1)
        sy = np.clip(ys + flow.v, 0.0, H - 1)
        x0 = np.floor(sx).astype(np.intp)
        y0 = np.floor(sy).astype(np.intp)
        x1 = np.minimum(x0 + 1, W - 1)
        y1 = np.minimum(y0 + 1, H - 1)
        fx = sx - x0
        fy = sy - y0
        self.idx = np.stack([y0 * W + x0, y0 * W + x1, y1 * W + x0, y1 * W + x1]).reshape(4, -1)
        self.wts = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy]).reshape(4, -1)
        self._fx = fx.reshape(-1)
        self._fy = fy.reshape(-1)

    def apply(self, src):
        flat = np.asarray(src, dtype=np.float64).reshape(-1)
        a, b, c, d = (flat[i] for i in self.idx)
        # lerp form keeps zero-fraction samples bit-exact
        top = a + self._fx * (b - a)
        bot = c + self._fx * (d - c)
        out = top + self._fy * (bot - top)
        out = np.clip(out, flat.min(), flat.max())
        return out.reshape(self.shape)

    def adjoint(self, grad_out):
        g = np.asarray(grad_out, dtype=np.float64).reshape(-1)
        n = self.shape[0] * self.shape[1]
        acc = np.zeros(n)
        for k in range(4):
            acc += np.bincount(self.idx[k], weights=self.wts[k] * g, minlength=n)
        return acc.reshape(self.shape)


def warp_mask(mask, flow_bwd):
    """Warp a soft mask from frame f1 into frame f2 using the f2 -> f1 flow."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != flow_bwd.shape:
        raise ValueError(f"mask {mask.shape} and flow {flow_bwd.shape} differ")
    return WarpOperator(flow_bwd).apply(mask)


def compose_flows(first, second):
    """Flow a->c from a->b (``first``) and b->c (``second``)."""
    H, W = first.shape
    ys, xs = np.mgrid[0:H, 0:W].astype(np.float64)
    u1 = first.u.astype(np.float64)
    v1 = first.v.astype(np.float64)
    su = bilinear_sample(second.u.astype(np.float64), ys + v1, xs + u1)
    sv = bilinear_sample(second.v.astype(np.float64), ys + v1, xs + u1)
    return FlowField(u1 + su, v1 + sv)


# --- Middlebury .flo -----------------------------------------------------------

def write_flo(flow, path):
    H, W = flow.shape
    data = np.empty((H, W, 2), dtype="<f4")
    data[..., 0] = flow.u
    data[..., 1] = flow.v
    with open(path, "wb") as fh:
        fh.write(struct.pack("<fii", FLO_TAG, W, H))
        fh.write(data.tobytes())


def read_flo(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated header")
    tag, W, H = struct.unpack("<fii", raw[:12])
    if tag != FLO_TAG:
        raise FormatError(f"{path}: bad magic {tag!r}")
    if W < 1 or H < 1:
        raise FormatError(f"{path}: bad size {W}x{H}")
    need = 8 * W * H
    payload = raw[12:]
    if len(payload) < need:
        raise FormatError(f"{path}: truncated payload ({len(payload)} of {need} bytes)")
    if len(payload) > need:
        raise FormatError(f"{path}: {len(payload) - need} trailing bytes")
    data = np.frombuffer(payload, dtype="<f4").reshape(H, W, 2)
    return FlowField(data[..., 0].copy(), data[..., 1].copy())
