"""Differentiable operations over :class:`Tensor`.

Feature maps are (C, H, W) or batched (N, C, H, W); 3-D inputs are promoted
to a batch of one and squeezed back. "same" padding follows the usual
convention for even kernels: total padding k - 1, left gets (k - 1) // 2.
"""

from __future__ import annotations

from typing import Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kernels
from .tensor import Tensor, as_tensor, make

Padding = str


def _pads(k: int, padding: Padding) -> Tuple[int, int]:
    if padding == "same":
        left = (k - 1) // 2
        return left, k - 1 - left
    if padding == "valid":
        return 0, 0
    raise ValueError(f"unknown padding {padding!r}")


def _batched(fn):
    """Run a 4-D op on a 3-D input by adding and removing a unit batch axis."""

    def wrapper(x, *args, **kwargs):
        x = as_tensor(x)
        if x.ndim == 3:
            out = fn(reshape(x, (1,) + x.shape), *args, **kwargs)
            return reshape(out, out.shape[1:])
        if x.ndim != 4:
            raise ValueError(f"expected a (C,H,W) or (N,C,H,W) map, got shape {x.shape}")
        return fn(x, *args, **kwargs)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ------------------------------------------------------------------ elementwise


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    out = x.data.reshape(shape)

    def backward(g):
        x.accumulate(g.reshape(src))

    return make(out, (x,), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"add: shape mismatch {a.shape} vs {b.shape}")

    def backward(g):
        if a.requires_grad:
            a.accumulate(g)
        if b.requires_grad:
            b.accumulate(g)

    return make(a.data + b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"mul: shape mismatch {a.shape} vs {b.shape}")

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * b.data)
        if b.requires_grad:
            b.accumulate(g * a.data)

    return make(a.data * b.data, (a, b), backward)


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)

    def backward(g):
        x.accumulate(g * (1.0 - y * y))

    return make(y, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def backward(g):
        x.accumulate(g * y * (1.0 - y))

    return make(y, (x,), backward)


def total(x: Tensor, weights=None) -> Tensor:
    """Scalar sum of ``x`` (optionally weighted elementwise by a constant array)."""
    x = as_tensor(x)
    w = np.ones_like(x.data) if weights is None else np.asarray(weights, dtype=np.float64)

    def backward(g):
        x.accumulate(g * w)

    return make(np.array(np.sum(x.data * w)), (x,), backward)


# ------------------------------------------------------------------ structural


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate(g[tuple(idx)])

    return make(out, tensors, backward)


def take(x: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    """Contiguous slice ``[start, stop)`` along ``axis``."""
    x = as_tensor(x)
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out = x.data[idx]

    def backward(g):
        full = np.zeros_like(x.data)
        full[idx] = g
        x.accumulate(full)

    return make(np.array(out), (x,), backward)


def gather(q: Tensor, actions) -> Tensor:
    """Pick ``q[n, actions[n]]`` from an (N, A) matrix."""
    q = as_tensor(q)
    actions = np.asarray(actions, dtype=np.int64)
    rows = np.arange(q.shape[0])
    out = q.data[rows, actions]

    def backward(g):
        full = np.zeros_like(q.data)
        full[rows, actions] = g
        q.accumulate(full)

    return make(out, (q,), backward)


# ------------------------------------------------------------------ convolution


@_batched
def conv2d(x: Tensor, kernels_: Tensor, padding: Padding = "same") -> Tensor:
    """Cross-correlation of (N, C_in, H, W) with (C_out, C_in, kh, kw) kernels."""
    w = as_tensor(kernels_)
    N, C, H, W = x.shape
    O, Ci, kh, kw = w.shape
    if Ci != C:
        raise ValueError(f"conv2d: input has {C} channels, kernels expect {Ci}")
    pt, pb = _pads(kh, padding)
    pl, pr = _pads(kw, padding)
    if kh > H + pt + pb or kw > W + pl + pr:
        raise ValueError(f"conv2d: kernel {(kh, kw)} larger than padded input {(H + pt + pb, W + pl + pr)}")
    Ho, Wo = H + pt + pb - kh + 1, W + pl + pr - kw + 1
    wm = w.data.reshape(O, C * kh * kw)

    if kh == 1 and kw == 1:
        xm = x.data.reshape(N, C, H * W)
        out = np.matmul(wm, xm).reshape(N, O, H, W)

        def backward(g):
            gm = g.reshape(N, O, H * W)
            if w.requires_grad:
                w.accumulate(np.tensordot(gm, xm, axes=([0, 2], [0, 2])).reshape(w.shape))
            if x.requires_grad:
                x.accumulate(np.matmul(wm.T, gm).reshape(x.shape))

        return make(out, (x, w), backward)

    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    cols = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # (N, C, Ho, Wo, kh, kw)
    cols2 = cols.transpose(0, 2, 3, 1, 4, 5).reshape(N * Ho * Wo, C * kh * kw)
    out = (cols2 @ wm.T).reshape(N, Ho, Wo, O).transpose(0, 3, 1, 2)

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(N * Ho * Wo, O)
        if w.requires_grad:
            w.accumulate((g2.T @ cols2).reshape(w.shape))
        if x.requires_grad:
            dcols = (g2 @ wm).reshape(N, Ho, Wo, C, kh, kw)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + Ho, j : j + Wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            x.accumulate(gxp[:, :, pt : pt + H, pl : pl + W])

    return make(np.ascontiguousarray(out), (x, w), backward)


def _activate(out: Tensor, activation) -> Tensor:
    if activation is None or activation == "identity":
        return out
    if activation == "tanh":
        return tanh(out)
    raise ValueError(f"unknown activation {activation!r}")


@_batched
def depthwise_conv2d(x: Tensor, kernels_: Tensor, padding: Padding = "valid", activation="tanh") -> Tensor:
    """One (kh, kw) kernel per input channel (depth multiplier 1), then ``activation``."""
    w = as_tensor(kernels_)
    N, C, H, W = x.shape
    Cw, kh, kw = w.shape
    if Cw != C:
        raise ValueError(f"depthwise_conv2d: {Cw} kernels for {C} input channels")
    pt, pb = _pads(kh, padding)
    pl, pr = _pads(kw, padding)
    if kh > H + pt + pb or kw > W + pl + pr:
        raise ValueError(f"depthwise_conv2d: kernel {(kh, kw)} larger than padded input")
    Ho, Wo = H + pt + pb - kh + 1, W + pl + pr - kw + 1

    if kh == 1:
        # rows are independent: hand every (n, row) to the temporal kernel
        xr = np.ascontiguousarray(x.data.transpose(0, 2, 1, 3)).reshape(N * H, C, W)
        w2 = np.ascontiguousarray(w.data[:, 0, :])
        out = kernels.tconv_forward(xr, w2, pl, pr).reshape(N, H, C, Wo).transpose(0, 2, 1, 3)

        def backward(g):
            gr = np.ascontiguousarray(g.transpose(0, 2, 1, 3)).reshape(N * H, C, Wo)
            gx, gw = kernels.tconv_backward(gr, xr, w2, pl, pr)
            if w.requires_grad:
                w.accumulate(gw.reshape(w.shape))
            if x.requires_grad:
                x.accumulate(gx.reshape(N, H, C, W).transpose(0, 2, 1, 3))

        pre = make(np.ascontiguousarray(out), (x, w), backward)
        return _activate(pre, activation)

    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    out = np.zeros((N, C, Ho, Wo))
    for i in range(kh):
        for j in range(kw):
            out += w.data[None, :, i, j, None, None] * xp[:, :, i : i + Ho, j : j + Wo]

    def backward(g):
        gw = np.empty_like(w.data)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                win = xp[:, :, i : i + Ho, j : j + Wo]
                gw[:, i, j] = np.einsum("nchw,nchw->c", g, win)
                gxp[:, :, i : i + Ho, j : j + Wo] += w.data[None, :, i, j, None, None] * g
        if w.requires_grad:
            w.accumulate(gw)
        if x.requires_grad:
            x.accumulate(gxp[:, :, pt : pt + H, pl : pl + W])

    pre = make(out, (x, w), backward)
    return _activate(pre, activation)


def separable_conv2d(
    x: Tensor, depth_kernels: Tensor, point_kernels: Tensor, padding: Padding = "same", activation="tanh"
) -> Tensor:
    """Depthwise (C, kh, kw) pass, then a 1x1 (C_out, C, 1, 1) mix, then ``activation``."""
    point_kernels = as_tensor(point_kernels)
    if point_kernels.shape[2:] != (1, 1):
        raise ValueError("separable_conv2d: pointwise kernels must be 1x1")
    mid = depthwise_conv2d(x, depth_kernels, padding=padding, activation=None)
    return _activate(conv2d(mid, point_kernels, padding="valid"), activation)


@_batched
def temporal_spatial_conv(x: Tensor, temporal: Tensor, spatial: Tensor) -> Tensor:
    """``depthwise_conv2d(conv2d(x, temporal, "same"), spatial, "valid")`` without the
    32 x H x W intermediate.

    ``x`` is (N, 1, H, W); ``temporal`` is (F, 1, 1, K); ``spatial`` is (F, H, 1).
    Both stages are linear and act on different axes, so the electrode mix is
    applied first and the temporal filter afterwards. Output is (N, F, 1, W);
    no activation is applied.
    """
    wt, ws = as_tensor(temporal), as_tensor(spatial)
    N, Cin, H, W = x.shape
    F, Ci, one, K = wt.shape
    if Cin != 1 or Ci != 1 or one != 1:
        raise ValueError("temporal_spatial_conv expects one input plane and (1, K) kernels")
    if ws.shape != (F, H, 1):
        raise ValueError(f"temporal_spatial_conv: spatial kernels {ws.shape} != {(F, H, 1)}")
    pl, pr = _pads(K, "same")
    x3 = x.data[:, 0]  # (N, H, W)
    ws2 = ws.data[:, :, 0]  # (F, H)
    wt2 = np.ascontiguousarray(wt.data[:, 0, 0, :])  # (F, K)
    y = np.matmul(ws2, x3)  # (N, F, W)
    z = kernels.tconv_forward(y, wt2, pl, pr)

    def backward(g):
        gy, gwt = kernels.tconv_backward(np.ascontiguousarray(g[:, :, 0, :]), y, wt2, pl, pr)
        if wt.requires_grad:
            wt.accumulate(gwt.reshape(wt.shape))
        if ws.requires_grad:
            gws = np.tensordot(gy, x3, axes=([0, 2], [0, 2]))
            ws.accumulate(gws[:, :, None])
        if x.requires_grad:
            x.accumulate(np.matmul(ws2.T, gy)[:, None])

    return make(z[:, :, None, :], (x, wt, ws), backward)


@_batched
def avgpool2d(x: Tensor, window: Tuple[int, int] = (2, 2)) -> Tensor:
    """Non-overlapping mean pooling with "same" padding.

    Windows hanging over the trailing edge average only their in-bounds cells.
    """
    kh, kw = window
    N, C, H, W = x.shape
    Ho, Wo = -(-H // kh), -(-W // kw)
    rows = np.minimum(kh, H - kh * np.arange(Ho))
    cols = np.minimum(kw, W - kw * np.arange(Wo))
    inv_counts = 1.0 / np.outer(rows, cols)
    out = np.zeros((N, C, Ho, Wo))
    # sum of strided slices, one per window offset; offsets past the edge skip
    for i in range(min(kh, H)):
        for j in range(min(kw, W)):
            sl = x.data[:, :, i::kh, j::kw]
            out[:, :, : sl.shape[2], : sl.shape[3]] += sl
    out *= inv_counts

    def backward(g):
        gs = g * inv_counts
        gx = np.empty_like(x.data)
        for i in range(min(kh, H)):
            for j in range(min(kw, W)):
                dst = gx[:, :, i::kh, j::kw]
                dst[...] = gs[:, :, : dst.shape[2], : dst.shape[3]]
        x.accumulate(gx)

    return make(out, (x,), backward)


# ------------------------------------------------------------------ dense


def linear(x: Tensor, weights: Tensor, bias: Tensor, activation="identity") -> Tensor:
    """``x @ weights.T + bias`` for x of shape (n,) or (N, n)."""
    x, W, b = as_tensor(x), as_tensor(weights), as_tensor(bias)
    m, n = W.shape
    if x.shape[-1] != n or b.shape != (m,):
        raise ValueError(f"linear: input {x.shape}, weights {W.shape}, bias {b.shape}")
    out = x.data @ W.data.T + b.data

    def backward(g):
        if W.requires_grad:
            W.accumulate(np.outer(g, x.data) if x.ndim == 1 else g.T @ x.data)
        if b.requires_grad:
            b.accumulate(g if g.ndim == 1 else g.sum(axis=0))
        if x.requires_grad:
            x.accumulate(g @ W.data)

    return _activate(make(out, (x, W, b), backward), activation)


def add_channel_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a per-channel bias to a (N, C, H, W) or (C, H, W) map."""
    x, b = as_tensor(x), as_tensor(bias)
    caxis = x.ndim - 3
    if b.shape != (x.shape[caxis],):
        raise ValueError(f"bias {b.shape} does not match {x.shape[caxis]} channels")
    shape = [1] * x.ndim
    shape[caxis] = -1
    out = x.data + b.data.reshape(shape)
    red = tuple(i for i in range(x.ndim) if i != caxis)

    def backward(g):
        if x.requires_grad:
            x.accumulate(g)
        if b.requires_grad:
            b.accumulate(g.sum(axis=red))

    return make(out, (x, b), backward)


def _lstm_cell(z: Tensor, c: Tensor) -> Tensor:
    """Gate nonlinearities and state update on pre-activations ``z``.

    Returns ``concat(h', c')`` along the channel axis so the pair travels as a
    single graph node.
    """
    caxis = z.ndim - 3
    ch = c.shape[caxis]

    def block(a, k):
        idx = [slice(None)] * a.ndim
        idx[caxis] = slice(k * ch, (k + 1) * ch)
        return a[tuple(idx)]

    sig = 0.5 * (1.0 + np.tanh(0.5 * np.concatenate([block(z.data, k) for k in range(3)], axis=caxis)))
    i, f, o = (block(sig, k) for k in range(3))
    g = np.tanh(block(z.data, 3))
    c_next = f * c.data + i * g
    tc = np.tanh(c_next)
    h_next = o * tc

    def backward(grad):
        gh, gc = block(grad, 0), block(grad, 1)
        dc = gc + gh * o * (1.0 - tc * tc)
        if z.requires_grad:
            dz = np.concatenate(
                [
                    dc * g * i * (1.0 - i),
                    dc * c.data * f * (1.0 - f),
                    gh * tc * o * (1.0 - o),
                    dc * i * (1.0 - g * g),
                ],
                axis=caxis,
            )
            z.accumulate(dz)
        if c.requires_grad:
            c.accumulate(dc * f)

    return make(np.concatenate([h_next, c_next], axis=caxis), (z, c), backward)


def conv_lstm_step(x: Tensor, h: Tensor, c: Tensor, kernels_: Tensor, bias: Tensor):
    """One convolutional LSTM update.

    Gate pre-activations come from a "same" convolution over ``concat(x, h)``
    with ``kernels_`` of shape (4 * Ch, C_x + Ch, kh, kw); channel blocks are
    ordered input, forget, output, candidate. Returns ``(h', c')``.
    """
    x, h, c = as_tensor(x), as_tensor(h), as_tensor(c)
    if h.shape != c.shape or x.shape[-2:] != h.shape[-2:] or x.ndim != h.ndim:
        raise ValueError(f"conv_lstm_step: planes x{x.shape} h{h.shape} c{c.shape} disagree")
    caxis = x.ndim - 3
    ch = h.shape[caxis]
    cx = x.shape[caxis]
    kern = as_tensor(kernels_)
    if kern.shape[0] != 4 * ch or kern.shape[1] != cx + ch:
        raise ValueError(f"conv_lstm_step: kernels {kern.shape} inconsistent with x{x.shape}, h{h.shape}")
    if not h.requires_grad and not np.any(h.data):
        # zero hidden state contributes nothing to the gates
        pre = conv2d(x, take(kern, 0, cx, axis=1), padding="same")
    else:
        pre = conv2d(concat([x, h], axis=caxis), kern, padding="same")
    hc = _lstm_cell(add_channel_bias(pre, bias), c)
    return take(hc, 0, ch, axis=caxis), take(hc, ch, 2 * ch, axis=caxis)


def dueling_combine(value: Tensor, advantage: Tensor) -> Tensor:
    """``Q = V + (A - mean(A))`` for V of shape (N, 1) or (1,) and A of shape (N, A) or (A,)."""
    v, a = as_tensor(value), as_tensor(advantage)
    if v.shape[-1] != 1 or v.shape[:-1] != a.shape[:-1]:
        raise ValueError(f"dueling_combine: value {v.shape} vs advantage {a.shape}")
    out = v.data + a.data - a.data.mean(axis=-1, keepdims=True)

    def backward(g):
        if v.requires_grad:
            v.accumulate(g.sum(axis=-1, keepdims=True))
        if a.requires_grad:
            a.accumulate(g - g.mean(axis=-1, keepdims=True))

    return make(out, (v, a), backward)


def squared_error_loss(prediction: Tensor, target: Union[Tensor, np.ndarray]) -> Tensor:
    """Mean squared difference; ``target`` is a constant (no gradient flows to it)."""
    p = as_tensor(prediction)
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"squared_error_loss: shape mismatch {p.shape} vs {t.shape}")
    diff = p.data - t
    n = max(diff.size, 1)

    def backward(g):
        p.accumulate(g * 2.0 * diff / n)

    return make(np.array(np.mean(diff * diff)), (p,), backward)
