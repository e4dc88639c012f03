"""Small convolutional segmentation head trained on pseudo masks with a temporal-consistency schedule.

Architecture: input RGB + (x/W, y/H) coordinates -> conv3x3(5->16) ReLU ->
conv3x3(16->16) ReLU -> conv3x3(16->1) sigmoid, stride 1, reflect padding.
"""
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .flow import WarpOperator, compose_flows
from .rng import SplitMix64, derive_seed
from .video import FormatError, binarize

LAYERS = ((5, 16), (16, 16), (16, 1))
SEGH_MAGIC = b"SEGH"
SEGH_VERSION = 1
NEIGHBOR_OFFSETS = (-2, -1, 1, 2)


def _layer_shapes():
    shapes = []
    for cin, cout in LAYERS:
        shapes.append((3, 3, cin, cout))
        shapes.append((cout,))
    return shapes


PARAM_SHAPES = _layer_shapes()
PARAM_SIZES = [int(np.prod(s)) for s in PARAM_SHAPES]
N_PARAMS = sum(PARAM_SIZES)  # 3201


@dataclass
class SegHead:
    """Parameters as one flat float64 vector (w1, b1, w2, b2, w3, b3; kernels laid out kh, kw, cin, cout)."""
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(-1)
        if self.theta.size != N_PARAMS:
            raise ValueError(f"expected {N_PARAMS} parameters, got {self.theta.size}")

    def tensors(self):
        out, pos = [], 0
        for shape, size in zip(PARAM_SHAPES, PARAM_SIZES):
            out.append(self.theta[pos:pos + size].reshape(shape))
            pos += size
        return out

    def copy(self):
        return SegHead(self.theta.copy())

    @classmethod
    def zeros(cls):
        return cls(np.zeros(N_PARAMS))


def seghead_init(seed):
    """Kernels ~ U(-s, s) with s = sqrt(1 / (9 * c_in)); biases zero."""
    rng = SplitMix64(seed)
    parts = []
    for cin, cout in LAYERS:
        s = np.sqrt(1.0 / (9 * cin))
        parts.append(rng.uniform_array(-s, s, 9 * cin * cout))
        parts.append(np.zeros(cout))
    return SegHead(np.concatenate(parts))


def make_input(frame):
    frame = np.asarray(frame, dtype=np.float64)
    H, W = frame.shape[:2]
    x = np.empty((H, W, 5))
    x[..., :3] = frame
    x[..., 3] = (np.arange(W) / W)[None, :]
    x[..., 4] = (np.arange(H) / H)[:, None]
    return x


def _pad(a):
    return np.pad(a, ((1, 1), (1, 1), (0, 0)), mode="reflect")


def _unpad(gp):
    """Adjoint of reflect padding: fold the border gradients back onto their sources."""
    g = gp.copy()
    g[2] += g[0]
    g[-3] += g[-1]
    g = g[1:-1]
    g[:, 2] += g[:, 0]
    g[:, -3] += g[:, -1]
    return g[:, 1:-1]


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward_tensor(head, x, cache=None):
    """Run the head on a prepared (H, W, 5) input; returns the (H, W) soft mask."""
    w1, b1, w2, b2, w3, b3 = head.tensors()
    p0 = _pad(x)
    z1 = kernels.conv3x3_forward(p0, w1, b1)
    a1 = np.maximum(z1, 0.0)
    p1 = _pad(a1)
    z2 = kernels.conv3x3_forward(p1, w2, b2)
    a2 = np.maximum(z2, 0.0)
    p2 = _pad(a2)
    z3 = kernels.conv3x3_forward(p2, w3, b3)
    out = _sigmoid(z3[..., 0])
    if cache is not None:
        cache.update(p0=p0, z1=z1, p1=p1, z2=z2, p2=p2, out=out)
    return out


def forward(head, frame, cache=None):
    return forward_tensor(head, make_input(frame), cache)


def backward_tensor(head, cache, upstream):
    """Gradient of sum(upstream * output) with respect to ``head.theta``."""
    w1, b1, w2, b2, w3, b3 = head.tensors()
    out = cache["out"]
    gz3 = (np.asarray(upstream) * out * (1.0 - out))[..., None]
    gp2, gw3, gb3 = kernels.conv3x3_backward(cache["p2"], w3, gz3)
    gz2 = _unpad(gp2) * (cache["z2"] > 0)
    gp1, gw2, gb2 = kernels.conv3x3_backward(cache["p1"], w2, gz2)
    gz1 = _unpad(gp1) * (cache["z1"] > 0)
    _, gw1, gb1 = kernels.conv3x3_backward(cache["p0"], w1, gz1)
    return np.concatenate([g.reshape(-1) for g in (gw1, gb1, gw2, gb2, gw3, gb3)])


def backward(head, frame, upstream):
    cache = {}
    forward(head, frame, cache)
    return backward_tensor(head, cache, upstream)


def l1_loss(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.abs(pred - target).mean())


def l1_grad(pred, target):
    return np.sign(pred - np.asarray(target, dtype=np.float64)) / pred.size


def loss_and_grad(head, frame, target, warp=None):
    """Loss of one schedule step and its gradient.

    ``warp=None`` is the graph-cut branch; otherwise ``warp`` is the
    WarpOperator (f2 -> f1 flow) and ``target`` is the neighbour's mask.
    """
    cache = {}
    pred = forward(head, frame, cache)
    if warp is None:
        return l1_loss(pred, target), backward_tensor(head, cache, l1_grad(pred, target))
    warped = warp.apply(pred)
    upstream = warp.adjoint(l1_grad(warped, target))
    return l1_loss(warped, target), backward_tensor(head, cache, upstream)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8

    @classmethod
    def zeros(cls, n, **kw):
        return cls(np.zeros(n), np.zeros(n), **kw)


def adam_step(state, params, grads):
    """One in-place Adam update of ``params`` (and ``state``); returns ``params``."""
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ValueError("shape mismatch between params, grads and optimizer state")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    params -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps_hat)
    return params


@dataclass
class TrainConfig:
    n_epochs: int = 200
    seed: int = 0
    neighbor_offsets: tuple = NEIGHBOR_OFFSETS
    warp_branch_prob: float = 0.5
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        self.neighbor_offsets = tuple(int(o) for o in self.neighbor_offsets)
        if not self.neighbor_offsets or 0 in self.neighbor_offsets:
            raise ValueError("neighbor_offsets must be nonempty and exclude 0")
        if not 0.0 <= self.warp_branch_prob <= 1.0:
            raise ValueError("warp_branch_prob must lie in [0, 1]")
        if self.n_epochs < 0:
            raise ValueError("n_epochs must be >= 0")


def sample_neighbor(idx, length, rng, offsets=NEIGHBOR_OFFSETS):
    valid = [o for o in offsets if 0 <= idx + o < length]
    if not valid:
        raise ValueError(f"no valid neighbour for frame {idx} of {length}")
    return idx + valid[rng.randbelow(len(valid))]


def schedule(n_frames, cfg, rng):
    """Yield ``(frame, neighbour or None)`` for every optimisation step.

    Frames are visited in order each epoch; a uniform draw below
    ``1 - warp_branch_prob`` selects the direct pseudo-mask branch.
    """
    for _ in range(cfg.n_epochs):
        for t in range(n_frames):
            if rng.random() < 1.0 - cfg.warp_branch_prob:
                yield t, None
            else:
                yield t, sample_neighbor(t, n_frames, rng, cfg.neighbor_offsets)


class NeighborFlows:
    """Backward flows between frames, built from consecutive-pair fields.

    ``forward[t]`` is the flow t -> t+1 and ``backward[t]`` the flow t -> t-1
    (``backward[0]`` unused). Longer hops are composed from single steps.
    """

    def __init__(self, forward, backward):
        self.forward = dict(enumerate(forward)) if isinstance(forward, list) else dict(forward)
        self.backward = dict(enumerate(backward)) if isinstance(backward, list) else dict(backward)
        self._cache = {}

    def get(self, src, dst):
        key = (src, dst)
        if key in self._cache:
            return self._cache[key]
        if dst == src + 1:
            flow = self.forward.get(src)
        elif dst == src - 1:
            flow = self.backward.get(src)
        else:
            step = 1 if dst > src else -1
            flow = compose_flows(self.get(src, src + step), self.get(src + step, dst))
        if flow is None:
            raise KeyError(f"missing flow {src} -> {dst}")
        self._cache[key] = flow
        return flow

    def __call__(self, src, dst):
        return self.get(src, dst)


def train(frames, pseudo, flows, cfg=None, init=None, callback=None):
    """Fit a SegHead to pseudo masks with the two-branch loss schedule.

    ``flows(src, dst)`` returns the flow field from frame ``src`` to ``dst``;
    the warp branch needs flows from the neighbour back to the current frame.
    ``callback(step, frame, neighbour, loss)`` is called after every update.
    """
    cfg = cfg or TrainConfig()
    frames = list(getattr(frames, "frames", frames))
    if len(pseudo) != len(frames):
        raise ValueError("pseudo masks and frames differ in length")
    n = len(frames)
    head = init.copy() if init is not None else seghead_init(derive_seed(cfg.seed, "refine.init"))
    rng = SplitMix64(derive_seed(cfg.seed, "refine.schedule"))
    state = AdamState.zeros(N_PARAMS, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    targets = [np.asarray(m, dtype=np.float64) for m in pseudo]
    warps = {}
    for step, (t, nb) in enumerate(schedule(n, cfg, rng)):
        if nb is None:
            loss, grad = loss_and_grad(head, frames[t], targets[t])
        else:
            if (nb, t) not in warps:
                try:
                    warps[(nb, t)] = WarpOperator(flows(nb, t))
                except KeyError as exc:
                    raise KeyError(f"missing flow {nb} -> {t} required by the warp branch") from exc
            loss, grad = loss_and_grad(head, frames[t], targets[nb], warps[(nb, t)])
        adam_step(state, head.theta, grad)
        if callback is not None:
            callback(step, t, nb, loss)
    return head


def infer(head, frame, threshold=0.5):
    return binarize(forward(head, frame), threshold)


def quantize_head(head):
    """Round parameters to float32, the checkpoint precision."""
    return SegHead(head.theta.astype(np.float32).astype(np.float64))


def write_checkpoint(head, path):
    with open(path, "wb") as fh:
        fh.write(SEGH_MAGIC + struct.pack("<ii", SEGH_VERSION, len(LAYERS)))
        for cin, cout in LAYERS:
            fh.write(struct.pack("<iiii", 3, 3, cin, cout))
        fh.write(head.theta.astype("<f4").tobytes())


def read_checkpoint(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != SEGH_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated header")
    version, n_layers = struct.unpack("<ii", raw[4:12])
    if version != SEGH_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    pos = 12
    shapes = []
    for _ in range(n_layers):
        if len(raw) < pos + 16:
            raise FormatError(f"{path}: truncated layer table")
        shapes.append(struct.unpack("<iiii", raw[pos:pos + 16]))
        pos += 16
    if shapes != [(3, 3, cin, cout) for cin, cout in LAYERS]:
        raise FormatError(f"{path}: unexpected layer shapes {shapes}")
    payload = raw[pos:]
    if len(payload) != 4 * N_PARAMS:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, expected {4 * N_PARAMS}")
    return SegHead(np.frombuffer(payload, dtype="<f4").astype(np.float64))
