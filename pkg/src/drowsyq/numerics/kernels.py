"""Hot inner loops: per-channel 1-D correlation along the last axis, and the
fused RMSProp update.

Every temporal convolution in the network (the (1, 64) front-end filters and
the (1, 16) depthwise half of the separable block) reduces to this kernel.
Two interchangeable implementations exist; :data:`drowsyq._accel.USE_NUMBA`
picks the one behind :func:`tconv_forward` / :func:`tconv_backward`.

Shapes: ``x`` is (N, C, W), ``w`` is (C, K), zero padding ``pad_left`` /
``pad_right``; output length is ``W + pad_left + pad_right - K + 1``.
"""

from __future__ import annotations

import numpy as np

from .._accel import USE_NUMBA, njit


def _out_len(W: int, K: int, pad_left: int, pad_right: int) -> int:
    Wo = W + pad_left + pad_right - K + 1
    if Wo <= 0:
        raise ValueError(f"kernel width {K} exceeds padded input width {W + pad_left + pad_right}")
    return Wo


# ---------------------------------------------------------------- numpy path


def _toeplitz(w: np.ndarray, W: int, Wo: int, pad_left: int) -> np.ndarray:
    K = w.shape[1]
    k = np.arange(W)[None, :] - np.arange(Wo)[:, None] + pad_left  # (Wo, W)
    mask = (k >= 0) & (k < K)
    T = np.ascontiguousarray(w[:, np.clip(k, 0, K - 1)])
    T[:, ~mask] = 0.0
    return T  # (C, Wo, W)


def tconv_forward_numpy(x, w, pad_left, pad_right):
    N, C, W = x.shape
    Wo = _out_len(W, w.shape[1], pad_left, pad_right)
    T = _toeplitz(w, W, Wo, pad_left)
    out = np.matmul(x.transpose(1, 0, 2), T.transpose(0, 2, 1))  # (C, N, Wo)
    return np.ascontiguousarray(out.transpose(1, 0, 2))


def tconv_backward_numpy(g, x, w, pad_left, pad_right):
    N, C, W = x.shape
    K = w.shape[1]
    Wo = g.shape[2]
    T = _toeplitz(w, W, Wo, pad_left)
    gc = g.transpose(1, 0, 2)  # (C, N, Wo)
    gx = np.ascontiguousarray(np.matmul(gc, T).transpose(1, 0, 2))
    gT = np.matmul(gc.transpose(0, 2, 1), x.transpose(1, 0, 2))  # (C, Wo, W)
    gw = np.empty_like(w)
    for k in range(K):
        gw[:, k] = np.diagonal(gT, offset=k - pad_left, axis1=1, axis2=2).sum(axis=-1)
    return gx, gw


# ---------------------------------------------------------------- numba path


@njit(cache=True, fastmath=True)
def _tconv_forward_nb(x, w, pad_left, Wo):
    N, C, W = x.shape
    K = w.shape[1]
    out = np.empty((N, C, Wo))
    xp = np.zeros((N, Wo + K - 1))
    hi = min(W, Wo + K - 1 - pad_left)
    for c in range(C):
        xp[:, pad_left:pad_left + hi] = x[:, c, :hi]
        wc = w[c].copy()
        for n in range(N):
            row = xp[n]
            for t in range(Wo):
                acc = 0.0
                for k in range(K):
                    acc += wc[k] * row[t + k]
                out[n, c, t] = acc
    return out


@njit(cache=True, fastmath=True)
def _tconv_weight_grad_nb(g, x, K, pad_left):
    N, C, W = x.shape
    Wo = g.shape[2]
    L = Wo + K - 1
    hi = min(W, L - pad_left)
    gw = np.zeros((C, K))
    xp = np.zeros(L)
    for c in range(C):
        for n in range(N):
            xp[pad_left:pad_left + hi] = x[n, c, :hi]
            grow = g[n, c]
            for k in range(K):
                acc = 0.0
                for t in range(Wo):
                    acc += grow[t] * xp[t + k]
                gw[c, k] += acc
    return gw


def tconv_forward_numba(x, w, pad_left, pad_right):
    Wo = _out_len(x.shape[2], w.shape[1], pad_left, pad_right)
    return _tconv_forward_nb(np.ascontiguousarray(x), np.ascontiguousarray(w), pad_left, Wo)


def tconv_backward_numba(g, x, w, pad_left, pad_right):
    g = np.ascontiguousarray(g)
    K = w.shape[1]
    # input gradient is the correlation of g with the flipped kernel
    wr = np.ascontiguousarray(w[:, ::-1])
    gx = _tconv_forward_nb(g, wr, K - 1 - pad_left, x.shape[2])
    gw = _tconv_weight_grad_nb(g, np.ascontiguousarray(x), K, pad_left)
    return gx, gw


# ---------------------------------------------------------------- rmsprop


def rmsprop_update_numpy(p, g, sq, lr, rho, eps, decay):
    """In place: ``g += decay*p``; ``sq = rho*sq + (1-rho)*g^2``; ``p -= lr*g/(sqrt(sq)+eps)``."""
    if decay:
        g = g + decay * p
    sq *= rho
    sq += (1.0 - rho) * g * g
    p -= lr * g / (np.sqrt(sq) + eps)


@njit(cache=True)
def _rmsprop_nb(p, g, sq, lr, rho, eps, decay):
    for i in range(p.size):
        gi = g[i] + decay * p[i]
        s = rho * sq[i] + (1.0 - rho) * gi * gi
        sq[i] = s
        p[i] -= lr * gi / (np.sqrt(s) + eps)


def rmsprop_update_numba(p, g, sq, lr, rho, eps, decay):
    if not (p.flags.c_contiguous and sq.flags.c_contiguous):
        rmsprop_update_numpy(p, g, sq, lr, rho, eps, decay)
        return
    _rmsprop_nb(p.reshape(-1), np.ascontiguousarray(g).reshape(-1), sq.reshape(-1), lr, rho, eps, decay)


if USE_NUMBA:
    tconv_forward = tconv_forward_numba
    tconv_backward = tconv_backward_numba
    rmsprop_update = rmsprop_update_numba
else:
    tconv_forward = tconv_forward_numpy
    tconv_backward = tconv_backward_numpy
    rmsprop_update = rmsprop_update_numpy


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
