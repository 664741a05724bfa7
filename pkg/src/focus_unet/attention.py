"""Channel attention, spatial attention, the focal filter and the two gates.

The focus gate refines a skip connection with two attention branches computed
in parallel on the sum of the (learnably upsampled) gating signal and the
mapped skip: a per-channel branch recalibrating *what* matters and a
per-pixel branch recalibrating *where*. Their combined coefficients pass
through an elementwise power - the focal filter - that suppresses low
(background) coefficients harder than high ones before reweighting the skip.

The additive gate is the single-branch baseline kept for ablations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .ops import (
    conv1d_channels,
    conv2d,
    pool_channel,
    pool_spatial,
    transposed_conv2d,
    upsample_nearest,
    xavier_init,
)
from .tensor import GraphNode, Parameter, ShapeError, constant

__all__ = [
    "AdditiveGateParams",
    "AttentionDims",
    "FocusGateParams",
    "adaptive_kernel_channel",
    "adaptive_kernel_spatial",
    "additive_attention_gate",
    "channel_attention",
    "focal_filter",
    "focus_gate",
    "make_additive_gate_params",
    "make_focus_gate_params",
    "spatial_attention",
]


@dataclass(frozen=True)
class AttentionDims:
    """Channel bookkeeping for adaptive kernel sizing.

    current is the channel count where attention is applied, first the
    shallowest layer's and deepest the largest in the network.
    """

    current: int
    first: int
    deepest: int
    b: int = 2
    gamma: float = 1.0

    def __post_init__(self):
        if not self.first <= self.current <= self.deepest:
            raise ValueError(
                f"need first <= current <= deepest, got "
                f"{self.first}, {self.current}, {self.deepest}")
        if self.deepest + self.first - self.current < 1:
            raise ValueError("deepest + first - current must be >= 1")


def _round_up_to_odd(t: float) -> int:
    k = int(round(t))
    if k % 2 == 0:
        k += 1
    return max(k, 1)


def adaptive_kernel_channel(channels: int, b: int = 2, gamma: float = 1.0) -> int:
    """Kernel size for cross-channel recalibration: odd(log2(C)/g + b/g)."""
    if channels < 1:
        raise ValueError(f"channels must be >= 1, got {channels}")
    return _round_up_to_odd(math.log2(channels) / gamma + b / gamma)


def adaptive_kernel_spatial(dims: AttentionDims) -> int:
    """Spatial kernel grows as the channel count shrinks (shallower layers
    have larger spatial extent): odd(log2(Cmax + C0 - C)/g + b/g)."""
    span = dims.deepest + dims.first - dims.current
    return _round_up_to_odd(math.log2(span) / dims.gamma + dims.b / dims.gamma)


def channel_attention(x, kernel) -> GraphNode:
    """Per-channel coefficients in (0,1), shape (N,1,1,C).

    Global average and max descriptors each pass through the same shared
    1-D kernel; the two recalibrations are summed before the sigmoid.
    """
    avg = conv1d_channels(pool_spatial("avg", x), kernel)
    mx = conv1d_channels(pool_spatial("max", x), kernel)
    return T.sigmoid(T.add(avg, mx))


def spatial_attention(x, weights) -> GraphNode:
    """Per-pixel coefficients in (0,1), shape (N,H,W,1).

    Channel-average and channel-max maps are stacked to two channels and
    mixed by a k x k same-padding convolution (no bias).
    """
    stacked = T.concat_channels(pool_channel("avg", x), pool_channel("max", x))
    return T.sigmoid(conv2d(stacked, weights, None, (1, 1), "same"))


def focal_filter(coefficients, lam: float) -> GraphNode:
    """Elementwise x**lam on [0,1] coefficients; lam = 1 is the identity.

    Larger lam pushes low coefficients toward zero much faster than high
    ones, sharpening the foreground/background contrast.
    """
    if lam < 1.0:
        raise ValueError(f"focal parameter must be >= 1, got {lam}")
    return T.power(coefficients, lam)


@dataclass
class FocusGateParams:
    upsample_w: Parameter
    upsample_b: Parameter
    skip_w: Parameter
    skip_b: Parameter
    channel_kernel: Parameter
    spatial_w: Parameter
    focal: float = 1.0

    def __post_init__(self):
        if self.focal < 1.0:
            raise ValueError(f"focal parameter must be >= 1, got {self.focal}")

    def parameters(self):
        return [self.upsample_w, self.upsample_b, self.skip_w, self.skip_b,
                self.channel_kernel, self.spatial_w]


@dataclass
class AdditiveGateParams:
    gate_w: Parameter
    gate_b: Parameter
    skip_w: Parameter
    skip_b: Parameter

    def parameters(self):
        return [self.gate_w, self.gate_b, self.skip_w, self.skip_b]


def _upsample_kernel(ratio: int) -> int:
    # 2s covers the stride footprint without gaps; 1x1 at stride 1
    return 1 if ratio == 1 else 2 * ratio


def upsample_ratio(skip_shape, gate_shape) -> int:
    """Integer resolution ratio between a skip and the gating signal."""
    hs, ws = skip_shape[1], skip_shape[2]
    hg, wg = gate_shape[1], gate_shape[2]
    if hs % hg or ws % wg or hs // hg != ws // wg:
        raise ShapeError(
            f"skip {skip_shape} is not an integer multiple of gate {gate_shape}")
    return hs // hg


def make_focus_gate_params(skip_channels: int, gate_channels: int, ratio: int,
                           dims: AttentionDims, focal: float, rng,
                           prefix: str = "gate") -> FocusGateParams:
    k_up = _upsample_kernel(ratio)
    k_chan = adaptive_kernel_channel(skip_channels, dims.b, dims.gamma)
    k_spat = adaptive_kernel_spatial(dims)
    return FocusGateParams(
        upsample_w=Parameter(f"{prefix}/up/w",
                             xavier_init((k_up, k_up, skip_channels, gate_channels), rng)),
        upsample_b=Parameter(f"{prefix}/up/b", np.zeros(skip_channels)),
        skip_w=Parameter(f"{prefix}/skip/w",
                         xavier_init((1, 1, skip_channels, skip_channels), rng)),
        skip_b=Parameter(f"{prefix}/skip/b", np.zeros(skip_channels)),
        channel_kernel=Parameter(f"{prefix}/chan/k", xavier_init((k_chan,), rng)),
        spatial_w=Parameter(f"{prefix}/spat/w",
                            xavier_init((k_spat, k_spat, 2, 1), rng)),
        focal=focal,
    )


def make_additive_gate_params(skip_channels: int, gate_channels: int, rng,
                              prefix: str = "gate") -> AdditiveGateParams:
    return AdditiveGateParams(
        gate_w=Parameter(f"{prefix}/gate/w",
                         xavier_init((1, 1, gate_channels, skip_channels), rng)),
        gate_b=Parameter(f"{prefix}/gate/b", np.zeros(skip_channels)),
        skip_w=Parameter(f"{prefix}/skip/w",
                         xavier_init((1, 1, skip_channels, skip_channels), rng)),
        skip_b=Parameter(f"{prefix}/skip/b", np.zeros(skip_channels)),
    )


def focus_gate(skip, gate, params: FocusGateParams, lam: float = None,
               bypass_attention: bool = False, return_coefficients: bool = False):
    """Gate a skip connection with dual attention and the focal filter.

    Pipeline: transposed-conv upsample of the gate to the skip's resolution,
    1x1-conv map of the skip, add + ReLU, channel and spatial attention in
    parallel, coefficient product, focal power, multiply with the original
    skip. Output magnitudes are bounded by the skip's elementwise.

    bypass_attention forces both coefficient maps to one (test hook): with
    lam = 1 the gate then reproduces the skip exactly.
    """
    skip, gate = T.as_node(skip), T.as_node(gate)
    ratio = upsample_ratio(skip.value.shape, gate.value.shape)
    up = transposed_conv2d(gate, params.upsample_w.node, params.upsample_b.node,
                           stride=ratio)
    mapped = conv2d(skip, params.skip_w.node, params.skip_b.node, (1, 1), "same")
    summed = T.relu(T.add(up, mapped))
    if bypass_attention:
        combined = constant(np.ones_like(skip.value))
    else:
        chan = channel_attention(summed, params.channel_kernel.node)
        spat = spatial_attention(summed, params.spatial_w.node)
        combined = T.mul(chan, spat)
    filtered = focal_filter(combined, params.focal if lam is None else lam)
    gated = T.mul(skip, filtered)
    if return_coefficients:
        return gated, filtered
    return gated


def additive_attention_gate(skip, gate, params: AdditiveGateParams,
                            return_coefficients: bool = False):
    """Single-branch additive gate (ablation baseline).

    The gating signal is 1x1-conv mapped and nearest-upsampled to the skip's
    resolution; after add + ReLU, channel-average pooling and a sigmoid give
    one coefficient per pixel that reweights the skip.
    """
    skip, gate = T.as_node(skip), T.as_node(gate)
    ratio = upsample_ratio(skip.value.shape, gate.value.shape)
    g = conv2d(gate, params.gate_w.node, params.gate_b.node, (1, 1), "same")
    if ratio > 1:
        g = upsample_nearest(g, ratio)
    mapped = conv2d(skip, params.skip_w.node, params.skip_b.node, (1, 1), "same")
    coefficients = T.sigmoid(pool_channel("avg", T.relu(T.add(g, mapped))))
    gated = T.mul(skip, coefficients)
    if return_coefficients:
        return gated, coefficients
    return gated
