"""Flow-blended patch similarity graph and its spectral bipartition."""
from dataclasses import dataclass

import numpy as np

from .features import center, featurize
from .flow import flow_to_rgb
from .kernels import ConvergenceError, symmetric_eigh, tridiagonal_eigh
from .rng import SplitMix64
from .video import PatchGrid, upsample_patch_mask

EIGEN_MODES = ("ncut", "raw_w")
DENSE_LIMIT = 512


@dataclass
class GraphCutConfig:
    alpha: float = 0.7
    tau: float = 0.25
    epsilon: float = 1e-5
    p_s: int = 8
    eigen_mode: str = "ncut"
    eigen_tol: float = 1e-8
    eigen_max_iters: int = 1000
    center_features: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0.0 < self.epsilon < self.tau:
            raise ValueError("epsilon must lie in (0, tau)")
        if self.eigen_mode not in EIGEN_MODES:
            raise ValueError(f"eigen_mode must be one of {EIGEN_MODES}")
        if self.p_s < 1:
            raise ValueError("p_s must be positive")


@dataclass
class CutResult:
    eigvec: np.ndarray
    eigval: float
    labels: np.ndarray
    fg_is_A: bool
    patch_mask: np.ndarray
    border_fraction_A: float = 0.0
    border_fraction_B: float = 0.0

    def summary(self):
        return {
            "eigval": float(self.eigval),
            "size_A": int(self.labels.sum()),
            "size_B": int((~self.labels).sum()),
            "border_fraction_A": float(self.border_fraction_A),
            "border_fraction_B": float(self.border_fraction_B),
            "fg_is_A": bool(self.fg_is_A),
            "foreground_patches": int(self.patch_mask.sum()),
        }


def cosine_sim(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx < 1e-12 or ny < 1e-12:
        return 0.0
    return float(x @ y / (nx * ny))


def combine_similarity(s_img, s_flow, alpha):
    return alpha * s_img + (1.0 - alpha) * s_flow


def _cosine_matrix(feats):
    X = np.asarray(feats, dtype=np.float64).reshape(-1, feats.shape[-1])
    norms = np.linalg.norm(X, axis=1)
    safe = np.where(norms < 1e-12, 1.0, norms)
    Xn = np.where((norms < 1e-12)[:, None], 0.0, X / safe[:, None])
    S = Xn @ Xn.T
    return np.clip(0.5 * (S + S.T), -1.0, 1.0)


def build_adjacency(feat_img, feat_flow, alpha):
    """Pairwise similarity between all patches (n x n, n = gh * gw).

    A patch is treated as fully similar to itself, so the diagonal is 1 even
    when a descriptor is all zeros.
    """
    if feat_img.shape[:2] != feat_flow.shape[:2]:
        raise ValueError(f"grid mismatch: {feat_img.shape[:2]} vs {feat_flow.shape[:2]}")
    W = combine_similarity(_cosine_matrix(feat_img), _cosine_matrix(feat_flow), alpha)
    np.fill_diagonal(W, 1.0)
    return W


def threshold_adjacency(W, tau, epsilon):
    if not 0.0 < epsilon < tau:
        raise ValueError("epsilon must lie in (0, tau)")
    return np.where(np.asarray(W) >= tau, 1.0, epsilon)


# --- eigensolvers --------------------------------------------------------------

def _lanczos_smallest(matvec, n, deflate, tol, max_iters, seed=0x5EED):
    """Smallest eigenpair of a symmetric operator restricted to the complement of ``deflate``.

    Full reorthogonalisation against the Krylov basis and the deflation vectors.
    """
    rng = SplitMix64(seed)
    q = rng.random_array(n) - 0.5
    Q_def = np.array(deflate, dtype=np.float64).reshape(len(deflate), n) if len(deflate) else np.zeros((0, n))

    def project(x):
        for _ in range(2):
            if Q_def.shape[0]:
                x = x - Q_def.T @ (Q_def @ x)
        return x

    q = project(q)
    q /= np.linalg.norm(q)
    basis = [q]
    alphas, betas = [], []
    limit = min(max_iters, n - Q_def.shape[0])
    for k in range(limit):
        w = matvec(basis[k])
        a = float(basis[k] @ w)
        alphas.append(a)
        Qm = np.array(basis)
        for _ in range(2):
            w = project(w - Qm.T @ (Qm @ w))
        b = float(np.linalg.norm(w))
        if k % 5 == 4 or k == limit - 1 or b < 1e-14:
            vals, vecs = tridiagonal_eigh(alphas, betas)
            theta = vals[0]
            y = Qm.T @ vecs[:, 0]
            y /= np.linalg.norm(y)
            if np.linalg.norm(matvec(y) - theta * y) <= tol or b < 1e-14:
                return theta, y
        if b < 1e-14:
            break
        betas.append(b)
        basis.append(w / b)
    raise ConvergenceError(f"Lanczos did not converge in {limit} steps")


def _smallest_pairs_dense(M, k, max_iters):
    vals, vecs = symmetric_eigh(M, max_iters=60 if max_iters >= 60 else max_iters)
    return vals[:k], vecs[:, :k]


def second_smallest_eigenvector(W, mode="ncut", tol=1e-8, max_iters=1000):
    """Second-smallest eigenpair used for the bipartition.

    ``ncut``: generalised problem (D - W) y = lam D y, solved through
    L_sym = I - D^-1/2 W D^-1/2 with the trivial eigenvector D^1/2 1 deflated;
    returns y = D^-1/2 z scaled to unit norm. ``raw_w``: second-smallest
    eigenpair of W itself.
    """
    W = np.asarray(W, dtype=np.float64)
    n = W.shape[0]
    if n < 2:
        raise ValueError("need at least two vertices")
    if mode == "ncut":
        deg = W.sum(axis=1)
        if np.any(deg <= 0):
            raise ValueError("zero-degree vertex in adjacency")
        dinv = 1.0 / np.sqrt(deg)
        L = np.eye(n) - dinv[:, None] * W * dinv[None, :]
        L = 0.5 * (L + L.T)
        trivial = np.sqrt(deg)
        trivial /= np.linalg.norm(trivial)
        if n <= DENSE_LIMIT:
            # Shift the known zero eigenpair above the spectrum (which lies in [0, 2]).
            M = L + 3.0 * np.outer(trivial, trivial)
            vals, vecs = _smallest_pairs_dense(M, 1, max_iters)
            lam, z = float(vals[0]), vecs[:, 0]
        else:
            lam, z = _lanczos_smallest(lambda x: L @ x, n, [trivial], tol / (10.0 * deg.max()), max_iters)
        z = z - (trivial @ z) * trivial
        y = dinv * z
        y /= np.linalg.norm(y)
        resid = np.linalg.norm((np.diag(deg) - W) @ y - lam * deg * y)
        if resid > tol:
            raise ConvergenceError(f"eigen residual {resid:.3e} above tolerance")
        return y, lam
    if mode == "raw_w":
        Ws = 0.5 * (W + W.T)
        if n <= DENSE_LIMIT:
            vals, vecs = _smallest_pairs_dense(Ws, 2, max_iters)
            lam, y = float(vals[1]), vecs[:, 1]
        else:
            inner_tol = tol / 10.0
            _, y0 = _lanczos_smallest(lambda x: Ws @ x, n, [], inner_tol, max_iters)
            lam, y = _lanczos_smallest(lambda x: Ws @ x, n, [y0], inner_tol, max_iters)
        y = y / np.linalg.norm(y)
        resid = np.linalg.norm(Ws @ y - lam * y)
        if resid > tol:
            raise ConvergenceError(f"eigen residual {resid:.3e} above tolerance")
        return y, lam
    raise ValueError(f"unknown eigen mode {mode!r}")


def bipartition(eigvec):
    """Partition A = entries at or above the mean.

    Entries within a few ulps of the mean count as "at" it; otherwise rounding
    in the mean decides ties such as [0.8, -0.6, 0.1].
    """
    eigvec = np.asarray(eigvec, dtype=np.float64)
    slack = 8 * np.finfo(np.float64).eps * np.abs(eigvec).max(initial=0.0)
    return eigvec >= eigvec.mean() - slack


def border_mask(grid):
    b = np.zeros((grid.gh, grid.gw), dtype=bool)
    b[0, :] = b[-1, :] = True
    b[:, 0] = b[:, -1] = True
    return b.reshape(-1)


def _border_fractions(labels, grid):
    border = border_mask(grid)
    a, b = labels, ~labels
    fa = border[a].mean() if a.any() else 0.0
    fb = border[b].mean() if b.any() else 0.0
    return float(fa), float(fb)


def select_foreground(labels, grid):
    """True if partition A (labels == True) is the foreground.

    Foreground is the side with the smaller share of border patches; ties go to
    the smaller side, then to A. If one side is empty, the non-empty side is
    background: the return value then names the empty side.
    """
    labels = np.asarray(labels, dtype=bool).reshape(-1)
    n_a = int(labels.sum())
    n_b = labels.size - n_a
    if n_a == 0:
        return True
    if n_b == 0:
        return False
    fa, fb = _border_fractions(labels, grid)
    if fa != fb:
        return fa < fb
    if n_a != n_b:
        return n_a < n_b
    return True


def foreground_patches(labels, fg_is_A, grid):
    labels = np.asarray(labels, dtype=bool).reshape(-1)
    mask = labels if fg_is_A else ~labels
    return mask.reshape(grid.gh, grid.gw)


def cut_features(feat_img, feat_flow, grid, cfg):
    """Adjacency -> threshold -> eigenvector -> partition -> foreground patches."""
    if cfg.center_features:
        feat_img, feat_flow = center(feat_img), center(feat_flow)
    W = threshold_adjacency(build_adjacency(feat_img, feat_flow, cfg.alpha), cfg.tau, cfg.epsilon)
    y, lam = second_smallest_eigenvector(W, cfg.eigen_mode, cfg.eigen_tol, cfg.eigen_max_iters)
    labels = bipartition(y)
    fg_is_A = select_foreground(labels, grid)
    fa, fb = _border_fractions(labels, grid)
    return CutResult(y, lam, labels, fg_is_A, foreground_patches(labels, fg_is_A, grid), fa, fb)


def graphcut_frame(frame, flow, cfg=None, feat_img=None, feat_flow=None):
    """Pixel-level pseudo mask for one frame plus the cut diagnostics.

    Precomputed descriptor grids (e.g. read from FGRD files) replace the
    built-in featurizer when given.
    """
    cfg = cfg or GraphCutConfig()
    frame = np.asarray(frame)
    H, W = frame.shape[:2]
    if flow.shape != (H, W):
        raise ValueError(f"flow {flow.shape} does not match frame {(H, W)}")
    grid = PatchGrid.for_shape(H, W, cfg.p_s)
    if feat_img is None:
        feat_img = featurize(frame, cfg.p_s)
    if feat_flow is None:
        feat_flow = featurize(flow_to_rgb(flow), cfg.p_s)
    res = cut_features(feat_img, feat_flow, grid, cfg)
    return upsample_patch_mask(res.patch_mask, grid, H, W), res
