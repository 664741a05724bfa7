"""Convolution, pooling and initialization primitives (batch x H x W x C layout).

All forward functions record gradient rules on the returned GraphNode, so they
compose freely with the elementwise graph ops. Pure functions of their inputs:
safe for concurrent read-only use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import GraphNode, ShapeError, _make, as_node, get_default_dtype

__all__ = [
    "ConvSpec",
    "conv1d_channels",
    "conv2d",
    "max_pool2d",
    "pool_channel",
    "pool_spatial",
    "transposed_conv2d",
    "upsample_nearest",
    "xavier_init",
]


@dataclass(frozen=True)
class ConvSpec:
    """Declarative description of one 2-D convolution layer."""

    kernel: tuple
    stride: tuple = (1, 1)
    padding: str = "same"
    in_channels: int = 1
    out_channels: int = 1
    bias: bool = True

    def __post_init__(self):
        kh, kw = self.kernel
        if self.padding not in ("same", "valid"):
            raise ValueError(f"padding must be 'same' or 'valid', got {self.padding!r}")
        if self.padding == "same" and (kh % 2 == 0 or kw % 2 == 0):
            raise ValueError(f"'same' padding needs odd kernel dims, got {self.kernel}")
        if min(self.stride) < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be >= 1")

    @property
    def weight_shape(self):
        return (*self.kernel, self.in_channels, self.out_channels)

    @property
    def bias_shape(self):
        return (self.out_channels,)

    def apply(self, x, w, b=None):
        return conv2d(x, w, b, stride=self.stride, padding=self.padding)


def _same_padding(size: int, k: int, s: int):
    out = -(-size // s)  # ceil
    total = max((out - 1) * s + k - size, 0)
    return total // 2, total - total // 2


def conv2d(x, w, b=None, stride=(1, 1), padding: str = "same") -> GraphNode:
    """Cross-correlation of x (N,H,W,Cin) with w (kh,kw,Cin,Cout)."""
    x, w = as_node(x), as_node(w)
    xv, wv = x.value, w.value
    kh, kw, cin, cout = wv.shape
    if xv.ndim != 4 or xv.shape[3] != cin:
        raise ShapeError(
            f"conv2d: input {xv.shape} does not supply {cin} channels for kernel {wv.shape}")
    sh, sw = stride
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError(f"'same' padding needs odd kernel dims, got {(kh, kw)}")
        pt, pb = _same_padding(xv.shape[1], kh, sh)
        pl, pr = _same_padding(xv.shape[2], kw, sw)
    elif padding == "valid":
        pt = pb = pl = pr = 0
    else:
        raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")

    xp = np.pad(xv, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    n, hp, wp, _ = xp.shape
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    cols = np.empty((n, ho, wo, kh, kw, cin), dtype=xv.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = xp[:, i:i + sh * ho:sh, j:j + sw * wo:sw, :]
    out = np.tensordot(cols, wv, axes=([3, 4, 5], [0, 1, 2]))

    def vjp_x(g):
        dcols = np.tensordot(g, wv, axes=([3], [3]))
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i:i + sh * ho:sh, j:j + sw * wo:sw, :] += dcols[:, :, :, i, j, :]
        return dxp[:, pt:hp - pb, pl:wp - pr, :]

    def vjp_w(g):
        return np.tensordot(cols, g, axes=([0, 1, 2], [0, 1, 2]))

    vjps = [(x, vjp_x), (w, vjp_w)]
    if b is not None:
        b = as_node(b)
        out = out + b.value
        vjps.append((b, lambda g: g.sum(axis=(0, 1, 2))))
    return _make(out, "conv2d", vjps)


def transposed_conv2d(x, w, b=None, stride: int = 1, padding=None) -> GraphNode:
    """Transposed convolution, the adjoint of a stride-s cross-correlation.

    Weight layout is shared with the convolution it is adjoint to:
    w (kh,kw,Cout,Cin) consumes x with Cin channels and emits Cout, so
    <conv2d(x, w, valid, s), y> == <x, transposed_conv2d(y, w, s, padding=0)>.
    Output spatial dims are in*stride for the default padding (kh - s)/2,
    which requires kh - s even and >= 0.
    """
    x, w = as_node(x), as_node(w)
    xv, wv = x.value, w.value
    kh, kw, cout, cin = wv.shape
    if xv.ndim != 4 or xv.shape[3] != cin:
        raise ShapeError(
            f"transposed_conv2d: input {xv.shape} does not supply {cin} channels "
            f"for kernel {wv.shape}")
    s = int(stride)
    if padding is None:
        if kh != kw:
            raise ShapeError(f"default padding needs a square kernel, got {(kh, kw)}")
        if kh < s or (kh - s) % 2 != 0:
            raise ShapeError(
                f"kernel {kh} with stride {s}: exact x{s} upsampling needs "
                f"kernel - stride even and >= 0")
        p = (kh - s) // 2
    else:
        p = int(padding)

    n, h, wdim, _ = xv.shape
    hf, wf = (h - 1) * s + kh, (wdim - 1) * s + kw
    full = np.zeros((n, hf, wf, cout), dtype=xv.dtype)
    for i in range(kh):
        for j in range(kw):
            # each input pixel scatters value * w[i, j] into the output grid
            full[:, i:i + s * h:s, j:j + s * wdim:s, :] += np.tensordot(
                xv, wv[i, j], axes=([3], [1]))
    out = full[:, p:hf - p, p:wf - p, :]

    def _regrow(g):
        gf = np.zeros((n, hf, wf, cout), dtype=g.dtype)
        gf[:, p:hf - p, p:wf - p, :] = g
        return gf

    def vjp_x(g):
        gf = _regrow(g)
        dx = np.zeros_like(xv)
        for i in range(kh):
            for j in range(kw):
                dx += np.tensordot(
                    gf[:, i:i + s * h:s, j:j + s * wdim:s, :], wv[i, j],
                    axes=([3], [0]))
        return dx

    def vjp_w(g):
        gf = _regrow(g)
        dw = np.empty_like(wv)
        for i in range(kh):
            for j in range(kw):
                dw[i, j] = np.tensordot(
                    gf[:, i:i + s * h:s, j:j + s * wdim:s, :], xv,
                    axes=([0, 1, 2], [0, 1, 2]))
        return dw

    vjps = [(x, vjp_x), (w, vjp_w)]
    if b is not None:
        b = as_node(b)
        out = out + b.value
        vjps.append((b, lambda g: g.sum(axis=(0, 1, 2))))
    return _make(out, "tconv2d", vjps)


def max_pool2d(x) -> GraphNode:
    """2x2 max pooling at stride 2; gradient goes to the first max in scan order."""
    x = as_node(x)
    xv = x.value
    n, h, wdim, c = xv.shape
    if h % 2 or wdim % 2:
        raise ShapeError(f"max_pool2d needs even spatial dims, got {xv.shape}")
    ho, wo = h // 2, wdim // 2
    windows = xv.reshape(n, ho, 2, wo, 2, c).transpose(0, 1, 3, 2, 4, 5).reshape(
        n, ho, wo, 4, c)
    idx = windows.argmax(axis=3)
    out = np.take_along_axis(windows, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]

    def vjp(g):
        dwin = np.zeros_like(windows)
        np.put_along_axis(dwin, idx[:, :, :, None, :], g[:, :, :, None, :], axis=3)
        return dwin.reshape(n, ho, wo, 2, 2, c).transpose(0, 1, 3, 2, 4, 5).reshape(
            n, h, wdim, c)

    return _make(out, "maxpool2x2", [(x, vjp)])


def pool_spatial(kind: str, x) -> GraphNode:
    """Global pooling over H and W: (N,H,W,C) -> (N,1,1,C)."""
    x = as_node(x)
    xv = x.value
    n, h, wdim, c = xv.shape
    if kind == "avg":
        out = xv.mean(axis=(1, 2), keepdims=True)
        scale = 1.0 / (h * wdim)
        return _make(out, "gavg_hw",
                     [(x, lambda g: np.broadcast_to(g * scale, xv.shape).copy())])
    if kind == "max":
        flat = xv.reshape(n, h * wdim, c)
        idx = flat.argmax(axis=1)
        out = np.take_along_axis(flat, idx[:, None, :], axis=1).reshape(n, 1, 1, c)

        def vjp(g):
            dflat = np.zeros_like(flat)
            np.put_along_axis(dflat, idx[:, None, :], g.reshape(n, 1, c), axis=1)
            return dflat.reshape(xv.shape)

        return _make(out, "gmax_hw", [(x, vjp)])
    raise ValueError(f"kind must be 'avg' or 'max', got {kind!r}")


def pool_channel(kind: str, x) -> GraphNode:
    """Pooling along the channel axis: (N,H,W,C) -> (N,H,W,1)."""
    x = as_node(x)
    xv = x.value
    c = xv.shape[-1]
    if kind == "avg":
        out = xv.mean(axis=-1, keepdims=True)
        return _make(out, "cavg",
                     [(x, lambda g: np.broadcast_to(g / c, xv.shape).copy())])
    if kind == "max":
        idx = xv.argmax(axis=-1)
        out = np.take_along_axis(xv, idx[..., None], axis=-1)

        def vjp(g):
            dx = np.zeros_like(xv)
            np.put_along_axis(dx, idx[..., None], g, axis=-1)
            return dx

        return _make(out, "cmax", [(x, vjp)])
    raise ValueError(f"kind must be 'avg' or 'max', got {kind!r}")


def conv1d_channels(x, w) -> GraphNode:
    """1-D convolution along the channel axis with one shared kernel, no bias.

    Zero-padded 'same', odd kernel of size <= 2C - 1 (the efficient
    channel-attention recalibration).
    """
    x, w = as_node(x), as_node(w)
    xv, wv = x.value, w.value
    k = wv.shape[0]
    c = xv.shape[-1]
    if k % 2 == 0:
        raise ShapeError(f"channel kernel size must be odd, got {k}")
    if k > 2 * c - 1:
        raise ShapeError(f"channel kernel size {k} exceeds 2C-1 = {2 * c - 1}")
    r = k // 2
    pad = [(0, 0)] * (xv.ndim - 1) + [(r, r)]
    xp = np.pad(xv, pad)
    out = np.zeros_like(xv)
    for j in range(k):
        out += wv[j] * xp[..., j:j + c]

    def vjp_x(g):
        dxp = np.zeros_like(xp)
        for j in range(k):
            dxp[..., j:j + c] += wv[j] * g
        return dxp[..., r:r + c]

    def vjp_w(g):
        dw = np.empty_like(wv)
        for j in range(k):
            dw[j] = np.sum(g * xp[..., j:j + c])
        return dw

    return _make(out, "conv1d_ch", [(x, vjp_x), (w, vjp_w)])


def upsample_nearest(x, factor: int) -> GraphNode:
    """Nearest-neighbour spatial upsampling by an integer factor."""
    x = as_node(x)
    xv = x.value
    n, h, wdim, c = xv.shape
    s = int(factor)
    out = np.repeat(np.repeat(xv, s, axis=1), s, axis=2)

    def vjp(g):
        return g.reshape(n, h, s, wdim, s, c).sum(axis=(2, 4))

    return _make(out, "upsample_nn", [(x, vjp)])


def _fans(shape) -> tuple:
    if len(shape) == 1:
        return shape[0], shape[0]
    receptive = int(np.prod(shape[:-2])) if len(shape) > 2 else 1
    return receptive * shape[-2], receptive * shape[-1]


def xavier_init(shape, seed) -> np.ndarray:
    """Uniform on +/- sqrt(6 / (fan_in + fan_out)); deterministic per seed."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    fan_in, fan_out = _fans(tuple(shape))
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(get_default_dtype())
