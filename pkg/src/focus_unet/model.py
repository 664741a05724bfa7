"""Encoder-decoder assembly: gated long skips, short residual skips and
deep-supervision heads.

The encoder halves resolution and doubles channels per level; its deepest
output is the gating signal fed to every gate. Each decoder stage upsamples
the deeper feature with a learnable transposed convolution, gates the
same-level encoder skip, fuses by channel concatenation and applies a conv
block. Every decoder level (or only the final one, when deep supervision is
off) carries a head that projects to two classes, upsamples to full
resolution and applies a softmax; head losses are weighted by
2**(-stride**2), so the full-resolution output dominates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import losses as L
from . import tensor as T
from .attention import (
    AttentionDims,
    FocusGateParams,
    additive_attention_gate,
    focus_gate,
    make_additive_gate_params,
    make_focus_gate_params,
)
from .ops import conv2d, max_pool2d, transposed_conv2d, xavier_init
from .tensor import GraphNode, Parameter, ShapeError, constant

__all__ = [
    "ConfigError",
    "FocusUNet",
    "NetworkConfig",
    "aggregate_supervised_loss",
    "build",
    "conv_block",
    "deep_supervision_weight",
    "expected_parameter_count",
    "supervision_head",
]

GATE_TYPES = ("focus", "additive", "none")
LOSS_KINDS = ("hybrid_focal", "dice_ce")


class ConfigError(ValueError):
    """A NetworkConfig field violates its invariants."""


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture hyperparameters; binary segmentation of RGB images.

    Channel widths follow base_channels * 2**level; the deepest level's
    width is the network's maximum.
    """

    height: int
    width: int
    depth: int = 5
    base_channels: int = 32
    focal: float = 1.25
    gate_type: str = "focus"
    short_skips: bool = True
    deep_supervision: bool = True

    in_channels = 3
    classes = 2

    def validate(self) -> None:
        if self.depth < 2:
            raise ConfigError(f"depth must be >= 2, got {self.depth}")
        if self.base_channels < 2:
            raise ConfigError(f"base_channels must be >= 2, got {self.base_channels}")
        factor = 2 ** (self.depth - 1)
        for name, dim in (("height", self.height), ("width", self.width)):
            if dim < factor or dim % factor:
                raise ConfigError(
                    f"{name}={dim} must be a positive multiple of 2**(depth-1)={factor}")
        if self.focal < 1.0:
            raise ConfigError(f"focal must be >= 1, got {self.focal}")
        if self.gate_type not in GATE_TYPES:
            raise ConfigError(f"gate_type must be one of {GATE_TYPES}, got {self.gate_type!r}")

    def channels(self, level: int) -> int:
        return self.base_channels * 2 ** level

    @property
    def max_channels(self) -> int:
        return self.channels(self.depth - 1)


@dataclass
class ConvBlockParams:
    conv1_w: Parameter
    conv1_b: Parameter
    conv2_w: Parameter
    conv2_b: Parameter
    proj_w: Optional[Parameter] = None
    proj_b: Optional[Parameter] = None

    def parameters(self):
        out = [self.conv1_w, self.conv1_b, self.conv2_w, self.conv2_b]
        if self.proj_w is not None:
            out += [self.proj_w, self.proj_b]
        return out


@dataclass
class HeadParams:
    stride: int
    proj_w: Parameter
    proj_b: Parameter
    up_w: Optional[Parameter] = None
    up_b: Optional[Parameter] = None

    def parameters(self):
        out = [self.proj_w, self.proj_b]
        if self.up_w is not None:
            out += [self.up_w, self.up_b]
        return out


@dataclass
class DecoderStage:
    level: int
    up_w: Parameter
    up_b: Parameter
    gate: object  # FocusGateParams | AdditiveGateParams | None
    block: ConvBlockParams
    head: Optional[HeadParams]

    def parameters(self):
        out = [self.up_w, self.up_b]
        if self.gate is not None:
            out += self.gate.parameters()
        out += self.block.parameters()
        if self.head is not None:
            out += self.head.parameters()
        return out


def conv_block(x, params: ConvBlockParams, short_skips: bool) -> GraphNode:
    """Two conv3x3 -> ReLU stages; with short skips, the block input is added
    to the output (through a 1x1 projection when channel counts differ)."""
    h = T.relu(conv2d(x, params.conv1_w.node, params.conv1_b.node))
    h = T.relu(conv2d(h, params.conv2_w.node, params.conv2_b.node))
    if short_skips:
        if params.proj_w is not None:
            residual = conv2d(x, params.proj_w.node, params.proj_b.node)
        else:
            residual = x
        h = T.add(h, residual)
    return h


def deep_supervision_weight(stride: int) -> float:
    """2**(-stride*stride): strictly decreasing with upsampling stride."""
    s = int(stride)
    if s < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    return 2.0 ** (-(s * s))


def supervision_head(feature, head: HeadParams) -> GraphNode:
    """1x1 projection to 2 classes, transposed-conv upsample to full
    resolution (identity at stride 1), softmax over classes."""
    z = conv2d(feature, head.proj_w.node, head.proj_b.node, (1, 1), "same")
    if head.stride > 1:
        z = transposed_conv2d(z, head.up_w.node, head.up_b.node, stride=head.stride)
    return T.softmax_channels(z)


def aggregate_supervised_loss(outputs, strides, target, loss: str = "hybrid_focal",
                              config: L.LossConfig = L.DEFAULT) -> GraphNode:
    """Stride-weighted sum of per-head losses, outputs ordered deepest->final.

    With the hybrid focal selection, intermediate heads use the full hybrid
    focal loss while the final head drops the focal exponents
    (Tversky + alpha-weighted CE) to keep the gradient alive near
    convergence. The dice_ce selection applies the same baseline loss at
    every head.
    """
    if loss not in LOSS_KINDS:
        raise ValueError(f"loss must be one of {LOSS_KINDS}, got {loss!r}")
    if len(outputs) != len(strides) or not outputs:
        raise ValueError("outputs and strides must be equal-length and non-empty")
    total = None
    last = len(outputs) - 1
    for i, (out, s) in enumerate(zip(outputs, strides)):
        if loss == "dice_ce":
            term = L.dice_ce_loss(out, target, config)
        elif i == last:
            term = T.add(L.tversky_loss(out, target, config=config),
                         L.alpha_weighted_cross_entropy(out, target, config=config))
        else:
            term = L.hybrid_focal_loss(out, target, config)
        weighted = T.mul(term, deep_supervision_weight(s))
        total = weighted if total is None else T.add(total, weighted)
    return total


class FocusUNet:
    """The assembled parameterized model.

    A model instance is single-writer during a training step; read-only
    forward passes on frozen parameters may run concurrently.
    """

    def __init__(self, config: NetworkConfig, encoder, decoder, params):
        self.config = config
        self.encoder = encoder    # ConvBlockParams per level, shallow -> deep
        self.decoder = decoder    # DecoderStage, deepest -> final
        self.params = params      # name -> Parameter, creation order

    def parameters(self):
        return list(self.params.values())

    @property
    def output_strides(self):
        return [2 ** stage.level for stage in self.decoder if stage.head is not None]

    def forward(self, batch, lam: float = None, capture_attention: bool = False):
        """Run the network on (N,H,W,3); returns softmax outputs ordered
        deepest -> final, each (N,H,W,2) and resampled to full resolution.

        lam overrides the focus gates' focal parameter (heatmap sweeps);
        capture_attention also returns {level: coefficient GraphNode}.
        """
        cfg = self.config
        h = batch if isinstance(batch, GraphNode) else constant(np.asarray(batch))
        expected = (cfg.height, cfg.width, cfg.in_channels)
        if h.value.ndim != 4 or h.value.shape[1:] != expected:
            raise ShapeError(
                f"batch shape {h.value.shape} does not match (N,{expected})")
        skips = []
        for level, block in enumerate(self.encoder):
            if level:
                h = max_pool2d(h)
            h = conv_block(h, block, cfg.short_skips)
            skips.append(h)
        gating = skips[-1]

        outputs = []
        attention = {}
        h = gating
        for stage in self.decoder:
            up = transposed_conv2d(h, stage.up_w.node, stage.up_b.node, stride=2)
            skip = skips[stage.level]
            if stage.gate is None:
                gated = skip
            elif isinstance(stage.gate, FocusGateParams):
                gated = focus_gate(skip, gating, stage.gate, lam=lam,
                                   return_coefficients=capture_attention)
                if capture_attention:
                    gated, attention[stage.level] = gated
            else:
                gated = additive_attention_gate(skip, gating, stage.gate)
            h = conv_block(T.concat_channels(up, gated), stage.block, cfg.short_skips)
            if stage.head is not None:
                outputs.append(supervision_head(h, stage.head))
        if capture_attention:
            return outputs, attention
        return outputs

    def predict(self, batch, lam: float = None) -> np.ndarray:
        """Final-head probabilities as a plain array."""
        return self.forward(batch, lam=lam)[-1].value


class _Store:
    """Registers parameters under unique path-like names, in creation order."""

    def __init__(self, rng):
        self.rng = rng
        self.params = {}

    def _add(self, p: Parameter) -> Parameter:
        if p.name in self.params:
            raise ConfigError(f"duplicate parameter name {p.name!r}")
        self.params[p.name] = p
        return p

    def weight(self, name, shape) -> Parameter:
        return self._add(Parameter(name, xavier_init(shape, self.rng)))

    def zeros(self, name, shape) -> Parameter:
        return self._add(Parameter(name, np.zeros(shape)))

    def adopt(self, params_obj):
        for p in params_obj.parameters():
            self._add(p)
        return params_obj


def _make_conv_block(store: _Store, prefix: str, cin: int, cout: int,
                     short_skips: bool) -> ConvBlockParams:
    block = ConvBlockParams(
        conv1_w=store.weight(f"{prefix}/conv1/w", (3, 3, cin, cout)),
        conv1_b=store.zeros(f"{prefix}/conv1/b", (cout,)),
        conv2_w=store.weight(f"{prefix}/conv2/w", (3, 3, cout, cout)),
        conv2_b=store.zeros(f"{prefix}/conv2/b", (cout,)),
    )
    if short_skips and cin != cout:
        block.proj_w = store.weight(f"{prefix}/proj/w", (1, 1, cin, cout))
        block.proj_b = store.zeros(f"{prefix}/proj/b", (cout,))
    return block


def build(config: NetworkConfig, seed: int) -> FocusUNet:
    """Construct and initialize the network; deterministic per seed."""
    config.validate()
    rng = np.random.default_rng(seed)
    store = _Store(rng)
    depth = config.depth

    encoder = []
    for level in range(depth):
        cin = config.in_channels if level == 0 else config.channels(level - 1)
        encoder.append(_make_conv_block(store, f"enc/l{level}", cin,
                                        config.channels(level), config.short_skips))

    gate_channels = config.max_channels
    decoder = []
    for level in range(depth - 2, -1, -1):
        cs = config.channels(level)
        deeper = config.channels(level + 1)
        up_w = store.weight(f"dec/l{level}/up/w", (4, 4, cs, deeper))
        up_b = store.zeros(f"dec/l{level}/up/b", (cs,))
        if config.gate_type == "focus":
            dims = AttentionDims(current=cs, first=config.base_channels,
                                 deepest=gate_channels)
            gate = store.adopt(make_focus_gate_params(
                cs, gate_channels, ratio=2 ** (depth - 1 - level), dims=dims,
                focal=config.focal, rng=rng, prefix=f"gate/l{level}"))
        elif config.gate_type == "additive":
            gate = store.adopt(make_additive_gate_params(
                cs, gate_channels, rng=rng, prefix=f"gate/l{level}"))
        else:
            gate = None
        block = _make_conv_block(store, f"dec/l{level}/block", 2 * cs, cs,
                                 config.short_skips)
        head = None
        if config.deep_supervision or level == 0:
            stride = 2 ** level
            head = HeadParams(
                stride=stride,
                proj_w=store.weight(f"head/l{level}/proj/w", (1, 1, cs, config.classes)),
                proj_b=store.zeros(f"head/l{level}/proj/b", (config.classes,)),
            )
            if stride > 1:
                k = 2 * stride
                head.up_w = store.weight(f"head/l{level}/up/w",
                                         (k, k, config.classes, config.classes))
                head.up_b = store.zeros(f"head/l{level}/up/b", (config.classes,))
        decoder.append(DecoderStage(level=level, up_w=up_w, up_b=up_b, gate=gate,
                                    block=block, head=head))
    return FocusUNet(config, encoder, decoder, store.params)


def _conv_block_size(cin: int, cout: int, short_skips: bool) -> int:
    n = 9 * cin * cout + cout + 9 * cout * cout + cout
    if short_skips and cin != cout:
        n += cin * cout + cout
    return n


def expected_parameter_count(config: NetworkConfig) -> int:
    """Closed-form parameter count; a pure function of the configuration.

    Per encoder level: two 3x3 convs with bias plus an optional 1x1 residual
    projection. Per decoder stage at level d (skip width c, gate width g,
    ratio r = 2**(depth-1-d)): a 4x4/stride-2 upsample (16*c*deeper + c), the
    gate parameters, a conv block on the concatenated 2c channels, and a head
    (1x1 projection c->2 plus, above stride 1, a (2s)^2 transposed conv 2->2).
    Focus gates add a (2r)^2 upsample to c channels, a 1x1 skip map, the
    adaptive 1-D channel kernel and the adaptive k x k spatial kernel on two
    pooled channels; additive gates add two 1x1 maps.
    """
    from .attention import adaptive_kernel_channel, adaptive_kernel_spatial

    config.validate()
    depth, short = config.depth, config.short_skips
    n = 0
    for level in range(depth):
        cin = config.in_channels if level == 0 else config.channels(level - 1)
        n += _conv_block_size(cin, config.channels(level), short)
    g = config.max_channels
    for level in range(depth - 2, -1, -1):
        c = config.channels(level)
        n += 16 * c * config.channels(level + 1) + c
        if config.gate_type == "focus":
            r = 2 ** (depth - 1 - level)
            k_up = 1 if r == 1 else 2 * r
            dims = AttentionDims(current=c, first=config.base_channels, deepest=g)
            n += k_up * k_up * c * g + c          # learnable upsample
            n += c * c + c                        # 1x1 skip map
            n += adaptive_kernel_channel(c)       # shared 1-D kernel
            n += adaptive_kernel_spatial(dims) ** 2 * 2  # k x k conv on 2 channels
        elif config.gate_type == "additive":
            n += g * c + c + c * c + c
        n += _conv_block_size(2 * c, c, short)
        if config.deep_supervision or level == 0:
            n += c * config.classes + config.classes
            s = 2 ** level
            if s > 1:
                n += (2 * s) ** 2 * config.classes * config.classes + config.classes
    return n
