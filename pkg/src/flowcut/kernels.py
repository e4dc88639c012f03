"""Hot loops, each in a numba flavour (``*_nb``) and a vectorised numpy flavour (``*_np``).

The public names (``hs_jacobi``, ``conv3x3_forward``, ...) point at one or the
other depending on ``FLOWCUT_NUMBA``; ``benchmarks/bench_kernels.py`` times both.
"""
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._accel import njit, pick


class ConvergenceError(RuntimeError):
    pass


# --- Horn-Schunck Jacobi sweeps ---------------------------------------------
# Neighbourhood average uses the classic 1/6 (edge) 1/12 (corner) stencil with
# replicated borders. ``c`` is the constant part of the linearised data term,
# It - Ix*u0 - Iy*v0, so the update works on the total flow.

@njit
def _hs_jacobi_nb(Ix, Iy, c, u, v, lam, n_iters):
    H, W = u.shape
    u = u.copy()
    v = v.copy()
    ub = np.empty_like(u)
    vb = np.empty_like(v)
    for _ in range(n_iters):
        for y in range(H):
            ym = y - 1 if y > 0 else 0
            yp = y + 1 if y < H - 1 else H - 1
            for x in range(W):
                xm = x - 1 if x > 0 else 0
                xp = x + 1 if x < W - 1 else W - 1
                ub[y, x] = (u[ym, x] + u[yp, x] + u[y, xm] + u[y, xp]) / 6.0 + (
                    u[ym, xm] + u[ym, xp] + u[yp, xm] + u[yp, xp]) / 12.0
                vb[y, x] = (v[ym, x] + v[yp, x] + v[y, xm] + v[y, xp]) / 6.0 + (
                    v[ym, xm] + v[ym, xp] + v[yp, xm] + v[yp, xp]) / 12.0
        for y in range(H):
            for x in range(W):
                ix = Ix[y, x]
                iy = Iy[y, x]
                r = (ix * ub[y, x] + iy * vb[y, x] + c[y, x]) / (lam + ix * ix + iy * iy)
                u[y, x] = ub[y, x] - ix * r
                v[y, x] = vb[y, x] - iy * r
    return u, v


def _neighbour_mean(a):
    p = np.pad(a, 1, mode="edge")
    edge = (p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:]) / 6.0
    corner = (p[:-2, :-2] + p[:-2, 2:] + p[2:, :-2] + p[2:, 2:]) / 12.0
    return edge + corner


def _hs_jacobi_np(Ix, Iy, c, u, v, lam, n_iters):
    denom = lam + Ix * Ix + Iy * Iy
    for _ in range(n_iters):
        ub = _neighbour_mean(u)
        vb = _neighbour_mean(v)
        r = (Ix * ub + Iy * vb + c) / denom
        u = ub - Ix * r
        v = vb - Iy * r
    return u, v


# --- 3x3 convolution, stride 1, input already padded -------------------------
# xp: (H+2, W+2, Cin); w: (3, 3, Cin, Cout); b: (Cout,)

# fastmath lets LLVM vectorise the channel loops; results stay run-to-run deterministic.
@njit(fastmath=True)
def _conv3x3_forward_nb(xp, w, b):
    H = xp.shape[0] - 2
    W = xp.shape[1] - 2
    cin = w.shape[2]
    cout = w.shape[3]
    out = np.empty((H, W, cout))
    acc = np.empty(cout)
    for y in range(H):
        for x in range(W):
            for o in range(cout):
                acc[o] = b[o]
            for ky in range(3):
                for kx in range(3):
                    for i in range(cin):
                        xv = xp[y + ky, x + kx, i]
                        for o in range(cout):
                            acc[o] += xv * w[ky, kx, i, o]
            for o in range(cout):
                out[y, x, o] = acc[o]
    return out


@njit(fastmath=True)
def _conv3x3_backward_nb(xp, w, gout):
    H, W, cout = gout.shape
    cin = w.shape[2]
    gxp = np.zeros(xp.shape)
    gw = np.zeros(w.shape)
    gb = np.zeros(cout)
    for y in range(H):
        for x in range(W):
            for o in range(cout):
                gb[o] += gout[y, x, o]
            for ky in range(3):
                for kx in range(3):
                    for i in range(cin):
                        xv = xp[y + ky, x + kx, i]
                        s = 0.0
                        for o in range(cout):
                            g = gout[y, x, o]
                            gw[ky, kx, i, o] += xv * g
                            s += w[ky, kx, i, o] * g
                        gxp[y + ky, x + kx, i] += s
    return gxp, gw, gb


def _im2col(xp):
    H, W = xp.shape[0] - 2, xp.shape[1] - 2
    win = sliding_window_view(xp, (3, 3), axis=(0, 1))  # (H, W, Cin, 3, 3)
    return np.ascontiguousarray(win.transpose(0, 1, 3, 4, 2)).reshape(H * W, -1)


def _conv3x3_forward_np(xp, w, b):
    H, W = xp.shape[0] - 2, xp.shape[1] - 2
    cout = w.shape[3]
    out = _im2col(xp) @ w.reshape(-1, cout) + b
    return out.reshape(H, W, cout)


def _conv3x3_backward_np(xp, w, gout):
    H, W, cout = gout.shape
    cin = w.shape[2]
    g2 = gout.reshape(-1, cout)
    gw = (_im2col(xp).T @ g2).reshape(w.shape)
    gb = g2.sum(axis=0)
    gcols = (g2 @ w.reshape(-1, cout).T).reshape(H, W, 3, 3, cin)
    gxp = np.zeros(xp.shape)
    for ky in range(3):
        for kx in range(3):
            gxp[ky:ky + H, kx:kx + W] += gcols[:, :, ky, kx]
    return gxp, gw, gb


# --- symmetric eigensolver: Householder tridiagonalisation + implicit QL ----
# Follows the EISPACK tred2/tql2 pair. ``V`` enters as the matrix and leaves
# holding the eigenvectors; eigenvalues come back ascending. The numba pair
# keeps V transposed (eigenvectors as rows) so its inner loops run along
# contiguous memory. Without numba the interpreted loops would be far too slow,
# so the fallback path calls LAPACK through numpy.linalg.eigh instead.

@njit
def _tred2_nb(V):
    n = V.shape[0]
    d = np.zeros(n)
    e = np.zeros(n)
    for j in range(n):
        d[j] = V[j, n - 1]
    for i in range(n - 1, 0, -1):
        scale = 0.0
        h = 0.0
        for k in range(i):
            scale += abs(d[k])
        if scale == 0.0:
            e[i] = d[i - 1]
            for j in range(i):
                d[j] = V[j, i - 1]
                V[j, i] = 0.0
                V[i, j] = 0.0
        else:
            for k in range(i):
                d[k] /= scale
                h += d[k] * d[k]
            f = d[i - 1]
            g = math.sqrt(h)
            if f > 0:
                g = -g
            e[i] = scale * g
            h = h - f * g
            d[i - 1] = f - g
            for j in range(i):
                e[j] = 0.0
            for j in range(i):
                f = d[j]
                V[i, j] = f
                g = e[j] + V[j, j] * f
                for k in range(j + 1, i):
                    g += V[j, k] * d[k]
                    e[k] += V[j, k] * f
                e[j] = g
            f = 0.0
            for j in range(i):
                e[j] /= h
                f += e[j] * d[j]
            hh = f / (h + h)
            for j in range(i):
                e[j] -= hh * d[j]
            for j in range(i):
                f = d[j]
                g = e[j]
                for k in range(j, i):
                    V[j, k] -= f * e[k] + g * d[k]
                d[j] = V[j, i - 1]
                V[j, i] = 0.0
        d[i] = h
    for i in range(n - 1):
        V[i, n - 1] = V[i, i]
        V[i, i] = 1.0
        h = d[i + 1]
        if h != 0.0:
            for k in range(i + 1):
                d[k] = V[i + 1, k] / h
            for j in range(i + 1):
                g = 0.0
                for k in range(i + 1):
                    g += V[i + 1, k] * V[j, k]
                for k in range(i + 1):
                    V[j, k] -= g * d[k]
        for k in range(i + 1):
            V[i + 1, k] = 0.0
    for j in range(n):
        d[j] = V[j, n - 1]
        V[j, n - 1] = 0.0
    V[n - 1, n - 1] = 1.0
    e[0] = 0.0
    return d, e


@njit
def _tql2_nb(d, e, V, max_iters):
    """Diagonalise the tridiagonal (d, e[1:]) and rotate V. Returns False on non-convergence."""
    n = d.shape[0]
    for i in range(1, n):
        e[i - 1] = e[i]
    e[n - 1] = 0.0
    f = 0.0
    tst1 = 0.0
    eps = 2.0 ** -52
    for l in range(n):
        tst1 = max(tst1, abs(d[l]) + abs(e[l]))
        m = l
        while m < n:
            if abs(e[m]) <= eps * tst1:
                break
            m += 1
        if m > l:
            it = 0
            while True:
                it += 1
                if it > max_iters:
                    return False
                g = d[l]
                p = (d[l + 1] - g) / (2.0 * e[l])
                r = math.hypot(p, 1.0)
                if p < 0:
                    r = -r
                d[l] = e[l] / (p + r)
                d[l + 1] = e[l] * (p + r)
                dl1 = d[l + 1]
                h = g - d[l]
                for i in range(l + 2, n):
                    d[i] -= h
                f += h
                p = d[m]
                c = 1.0
                c2 = c
                c3 = c
                el1 = e[l + 1]
                s = 0.0
                s2 = 0.0
                for i in range(m - 1, l - 1, -1):
                    c3 = c2
                    c2 = c
                    s2 = s
                    g = c * e[i]
                    h = c * p
                    r = math.hypot(p, e[i])
                    e[i + 1] = s * r
                    s = e[i] / r
                    c = p / r
                    p = c * d[i] - s * g
                    d[i + 1] = h + s * (c * g + s * d[i])
                    for k in range(V.shape[1]):
                        h = V[i + 1, k]
                        V[i + 1, k] = s * V[i, k] + c * h
                        V[i, k] = c * V[i, k] - s * h
                p = -s * s2 * c3 * el1 * e[l] / dl1
                e[l] = s * p
                d[l] = c * p
                if abs(e[l]) <= eps * tst1:
                    break
        d[l] = d[l] + f
        e[l] = 0.0
    return True


hs_jacobi = pick(_hs_jacobi_nb, _hs_jacobi_np)
conv3x3_forward = pick(_conv3x3_forward_nb, _conv3x3_forward_np)
conv3x3_backward = pick(_conv3x3_backward_nb, _conv3x3_backward_np)


def _eigh_nb(A, max_iters):
    V = np.array(A, dtype=np.float64, copy=True)
    d, e = _tred2_nb(V)
    if not _tql2_nb(d, e, V, max_iters):
        raise ConvergenceError(f"implicit QL did not converge within {max_iters} iterations")
    return d, V.T


def _eigh_np(A, max_iters):
    return np.linalg.eigh(np.asarray(A, dtype=np.float64))


def _tridiag_nb(d, e, max_iters):
    V = np.eye(len(d))
    if not _tql2_nb(d, e, V, max_iters):
        raise ConvergenceError(f"implicit QL did not converge within {max_iters} iterations")
    return d, V.T


def _tridiag_np(d, e, max_iters):
    return np.linalg.eigh(np.diag(d) + np.diag(e[1:], 1) + np.diag(e[1:], -1))


_eigh = pick(_eigh_nb, _eigh_np)
_tridiag = pick(_tridiag_nb, _tridiag_np)


def _sort_pairs(d, V):
    order = np.argsort(d, kind="stable")
    return d[order], V[:, order]


def symmetric_eigh(A, max_iters=60):
    """All eigenpairs of a dense symmetric matrix, eigenvalues ascending."""
    A = np.asarray(A, dtype=np.float64)
    if A.shape[0] == 1:
        return A[0].copy(), np.ones((1, 1))
    return _sort_pairs(*_eigh(A, max_iters))


def tridiagonal_eigh(alpha, beta, max_iters=60):
    """Eigenpairs of the symmetric tridiagonal matrix with diagonal ``alpha`` and off-diagonal ``beta``."""
    n = len(alpha)
    d = np.array(alpha, dtype=np.float64)
    e = np.zeros(n)
    e[1:] = beta
    return _sort_pairs(*_tridiag(d, e, max_iters))
