"""Finite-difference verification suite over every registered operation.

Runs in float64 and compares analytic gradients against central differences
on random inputs: elementwise ops, activations, reductions, structural ops,
the convolution/pooling family, every loss, the full focus gate and a small
end-to-end network. Used by the gradcheck CLI command and the acceptance
tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses as L
from . import tensor as T
from .attention import (
    AttentionDims,
    additive_attention_gate,
    focus_gate,
    make_additive_gate_params,
    make_focus_gate_params,
)
from .model import NetworkConfig, aggregate_supervised_loss, build
from .ops import (
    conv1d_channels,
    conv2d,
    max_pool2d,
    pool_channel,
    pool_spatial,
    transposed_conv2d,
    upsample_nearest,
)
from .tensor import constant, finite_diff_check, precision

__all__ = ["CheckResult", "run_suite"]

TOLERANCE = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_error: float
    trials: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


class _Proj:
    """Random projection to a scalar so elementwise errors cannot cancel.

    The projection array is drawn on first use and cached: the function under
    finite_diff_check must be deterministic across repeated evaluations.
    """

    def __init__(self, rng):
        self.rng = rng
        self.weights = None

    def __call__(self, node):
        if self.weights is None:
            self.weights = constant(self.rng.normal(size=node.value.shape))
        return T.sum_all(T.mul(node, self.weights))


def _check_unary(op, low=-2.0, high=2.0, shape=(2, 3, 4)):
    def trial(rng):
        x = rng.uniform(low, high, size=shape)
        proj = _Proj(rng)
        return finite_diff_check(lambda v: proj(op(v)), x)

    return trial


def _elementwise_trials():
    yield "add", _check_unary(lambda v: T.add(v, 1.5))
    yield "sub", _check_unary(lambda v: T.sub(2.0, v))
    yield "mul", _check_unary(lambda v: T.mul(v, v))

    def div_trial(rng):
        x = rng.uniform(-2, 2, size=(2, 3, 4))
        denom = constant(rng.uniform(0.5, 2.0, size=(2, 3, 4)))
        proj = _Proj(rng)
        return finite_diff_check(lambda v: proj(T.div(v, denom)), x)

    yield "div", div_trial
    yield "neg", _check_unary(T.neg)
    yield "pow", _check_unary(lambda v: T.power(v, 1.7), low=0.1, high=1.5)
    yield "log", _check_unary(T.log, low=0.2, high=3.0)
    yield "clip", _check_unary(lambda v: T.clip(v, -0.9, 0.9), low=-0.8, high=0.8)
    yield "relu", _check_unary(T.relu)
    yield "sigmoid", _check_unary(T.sigmoid)
    yield "softmax_ch", _check_unary(T.softmax_channels, shape=(1, 2, 3, 3))
    yield "sum", lambda rng: finite_diff_check(
        lambda v: T.sum_all(T.mul(v, v)), rng.normal(size=(3, 4)))
    yield "mean", lambda rng: finite_diff_check(
        lambda v: T.mean(T.mul(v, v)), rng.normal(size=(3, 4)))
    yield "take_ch", _check_unary(lambda v: T.take_channel(v, 1), shape=(1, 3, 3, 3))

    def concat_trial(rng):
        x = rng.normal(size=(1, 2, 2, 3))
        tail = constant(rng.normal(size=(1, 2, 2, 2)))
        proj = _Proj(rng)
        return finite_diff_check(lambda v: proj(T.concat_channels(v, tail)), x)

    yield "concat_ch", concat_trial

    def broadcast_trial(rng):
        x = rng.normal(size=(2, 1, 1, 3))
        wide = constant(rng.normal(size=(2, 4, 5, 3)))
        proj = _Proj(rng)
        return finite_diff_check(lambda v: proj(T.mul(v, wide)), x)

    yield "broadcast_mul", broadcast_trial


def _conv_trials():
    def conv_x(stride, padding):
        def trial(rng):
            x = rng.normal(size=(2, 6, 5, 2))
            w = constant(rng.normal(size=(3, 3, 2, 3)))
            b = constant(rng.normal(size=3))
            proj = _Proj(rng)
            return finite_diff_check(lambda v: proj(conv2d(v, w, b, stride, padding)), x)

        return trial

    def conv_w(rng):
        w = rng.normal(size=(3, 3, 2, 3))
        x = constant(rng.normal(size=(2, 5, 5, 2)))
        b = constant(rng.normal(size=3))
        proj = _Proj(rng)
        return finite_diff_check(lambda v: proj(conv2d(x, v, b)), w)

    def conv_b(rng):
        b = rng.normal(size=3)
        x = constant(rng.normal(size=(1, 4, 4, 2)))
        w = constant(rng.normal(size=(3, 3, 2, 3)))
        proj = _Proj(rng)
        return finite_diff_check(lambda v: proj(conv2d(x, w, v)), b)

    yield "conv2d/x same s1", conv_x((1, 1), "same")
    yield "conv2d/x same s2", conv_x((2, 2), "same")
    yield "conv2d/x valid", conv_x((1, 1), "valid")
    yield "conv2d/w", conv_w
    yield "conv2d/b", conv_b

    def tconv_x(rng):
        x = rng.normal(size=(1, 3, 4, 2))
        w = constant(rng.normal(size=(4, 4, 3, 2)))
        b = constant(rng.normal(size=3))
        proj = _Proj(rng)
        return finite_diff_check(lambda v: proj(transposed_conv2d(v, w, b, stride=2)), x)

    def tconv_w(rng):
        w = rng.normal(size=(4, 4, 3, 2))
        x = constant(rng.normal(size=(1, 3, 3, 2)))
        proj = _Proj(rng)
        return finite_diff_check(lambda v: proj(transposed_conv2d(x, v, None, stride=2)), w)

    def tconv_s1(rng):
        w = rng.normal(size=(1, 1, 3, 2))
        x = constant(rng.normal(size=(1, 4, 4, 2)))
        proj = _Proj(rng)
        return finite_diff_check(lambda v: proj(transposed_conv2d(x, v, None, stride=1)), w)

    yield "tconv2d/x s2", tconv_x
    yield "tconv2d/w s2", tconv_w
    yield "tconv2d/w s1", tconv_s1

    yield "max_pool2d", _check_unary(max_pool2d, shape=(2, 4, 6, 3))
    for kind in ("avg", "max"):
        yield f"pool_spatial {kind}", _check_unary(
            lambda v, kind=kind: pool_spatial(kind, v), shape=(2, 3, 4, 5))
        yield f"pool_channel {kind}", _check_unary(
            lambda v, kind=kind: pool_channel(kind, v), shape=(2, 3, 4, 5))

    def c1d_x(rng):
        x = rng.normal(size=(2, 1, 1, 8))
        w = constant(rng.normal(size=5))
        proj = _Proj(rng)
        return finite_diff_check(lambda v: proj(conv1d_channels(v, w)), x)

    def c1d_w(rng):
        w = rng.normal(size=5)
        x = constant(rng.normal(size=(2, 1, 1, 8)))
        proj = _Proj(rng)
        return finite_diff_check(lambda v: proj(conv1d_channels(x, v)), w)

    yield "conv1d_ch/x", c1d_x
    yield "conv1d_ch/w", c1d_w
    yield "upsample_nn", _check_unary(lambda v: upsample_nearest(v, 2),
                                      shape=(1, 3, 3, 2))


def _loss_trials():
    defs = {
        "loss cross_entropy": L.cross_entropy,
        "loss dice_ce": L.dice_ce_loss,
        "loss tversky": L.tversky_loss,
        "loss focal_tversky": L.focal_tversky_loss,
        "loss focal": L.focal_loss,
        "loss alpha_weighted_ce": L.alpha_weighted_cross_entropy,
        "loss hybrid_focal": L.hybrid_focal_loss,
    }
    for name, fn in defs.items():
        def trial(rng, fn=fn):
            target = (rng.uniform(size=(1, 3, 3)) > 0.6).astype(np.float64)
            # bounded logits keep p_t away from the clip boundaries, where
            # gradients vanish and central differences drown in rounding noise
            logits = rng.uniform(-1.5, 1.5, size=(1, 3, 3, 2))
            return finite_diff_check(
                lambda v: fn(T.softmax_channels(v), target), logits)

        yield name, trial


def _gate_trials():
    def fresh(rng):
        dims = AttentionDims(current=3, first=3, deepest=4)
        params = make_focus_gate_params(3, 4, ratio=2, dims=dims, focal=1.25, rng=rng)
        skip = rng.normal(size=(1, 4, 4, 3))
        gate = rng.normal(size=(1, 2, 2, 4))
        return skip, gate, params

    def gate_skip(rng):
        skip, gate, params = fresh(rng)
        proj = _Proj(rng)
        return finite_diff_check(
            lambda v: proj(focus_gate(v, constant(gate), params)), skip)

    def gate_gate(rng):
        skip, gate, params = fresh(rng)
        proj = _Proj(rng)
        return finite_diff_check(
            lambda v: proj(focus_gate(constant(skip), v, params)), gate)

    def gate_param(field):
        def trial(rng):
            skip, gate, params = fresh(rng)
            proj = _Proj(rng)
            holder = getattr(params, field)
            original = holder.node

            def f(v):
                holder.node = v
                try:
                    return proj(focus_gate(constant(skip), constant(gate), params))
                finally:
                    holder.node = original

            return finite_diff_check(f, original.value)

        return trial

    yield "focus_gate/skip", gate_skip
    yield "focus_gate/gate", gate_gate
    for field in ("upsample_w", "skip_w", "channel_kernel", "spatial_w"):
        yield f"focus_gate/{field}", gate_param(field)

    def additive(rng):
        skip = rng.normal(size=(1, 4, 4, 2))
        params = make_additive_gate_params(2, 3, rng)
        gate = constant(rng.normal(size=(1, 2, 2, 3)))
        proj = _Proj(rng)
        return finite_diff_check(
            lambda v: proj(additive_attention_gate(v, gate, params)), skip)

    yield "additive_gate/skip", additive


def _end_to_end_trials():
    config = NetworkConfig(height=8, width=8, depth=2, base_channels=4)

    def loss_of(model, x_node, target):
        outputs = model.forward(x_node)
        return aggregate_supervised_loss(outputs, model.output_strides, target)

    def e2e_input(rng):
        model = build(config, seed=int(rng.integers(1 << 30)))
        target = (rng.uniform(size=(1, 8, 8)) > 0.7).astype(np.float64)
        x = rng.normal(size=(1, 8, 8, 3))
        return finite_diff_check(lambda v: loss_of(model, v, target), x)

    def e2e_param(name):
        def trial(rng):
            model = build(config, seed=int(rng.integers(1 << 30)))
            target = (rng.uniform(size=(1, 8, 8)) > 0.7).astype(np.float64)
            x = rng.normal(size=(1, 8, 8, 3))
            param = model.params[name]
            original = param.node

            def f(v):
                param.node = v
                try:
                    return loss_of(model, constant(x), target)
                finally:
                    param.node = original

            return finite_diff_check(f, original.value)

        return trial

    yield "end_to_end/input", e2e_input
    yield "end_to_end/enc conv w", e2e_param("enc/l0/conv1/w")
    yield "end_to_end/gate chan k", e2e_param("gate/l0/chan/k")
    yield "end_to_end/head proj w", e2e_param("head/l0/proj/w")


def all_trials():
    yield from _elementwise_trials()
    yield from _conv_trials()
    yield from _loss_trials()
    yield from _gate_trials()
    yield from _end_to_end_trials()


def run_suite(trials: int = 20, tolerance: float = TOLERANCE) -> list:
    """Run every check for the given number of random trials (float64)."""
    results = []
    with precision("float64"):
        for index, (name, trial) in enumerate(all_trials()):
            worst = 0.0
            for t in range(trials):
                rng = np.random.default_rng((7001, index, t))
                worst = max(worst, trial(rng))
            results.append(CheckResult(name=name, max_error=worst, trials=trials,
                                       tolerance=tolerance))
    return results
