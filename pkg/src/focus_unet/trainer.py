"""Optimization loop: SGD with Nesterov momentum, polynomial LR decay,
best-validation-model selection and binary checkpointing.

Checkpoint wire format (version 1, all integers little-endian):
magic b"FUNC", u32 version, u32-length-prefixed canonical config text
(sorted key=value lines carrying the network config, epoch and best
validation loss), u32 array count, then per array: u32-length-prefixed
name, u8 rank, rank x u32 dims, row-major float32 data. Arrays are written
in sorted name order, so save -> load -> save is byte-identical.

One training step is single-writer over the parameters; gradient
accumulation and the epoch shuffle use fixed orders and explicit seeds, so a
(seed, config, data) triple fully determines the log.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .data import AugmentationConfig, augment, zscore_normalize
from .metrics import binarize, evaluate_masks, mean_metrics
from .model import (
    LOSS_KINDS,
    FocusUNet,
    NetworkConfig,
    aggregate_supervised_loss,
    build,
)
from .tensor import backward, get_default_dtype

__all__ = [
    "Checkpoint",
    "CheckpointError",
    "CheckpointShapeError",
    "CheckpointTruncatedError",
    "CheckpointVersionError",
    "OptimizerState",
    "TrainConfig",
    "TrainingDiverged",
    "evaluate_model",
    "load_checkpoint",
    "nesterov_step",
    "poly_lr",
    "restore_model",
    "save_checkpoint",
    "train",
    "write_log_csv",
]

MAGIC = b"FUNC"
FORMAT_VERSION = 1
LOG_FIELDS = ("epoch", "lr", "train_loss", "val_loss", "val_mdsc")


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; message names the epoch and batch."""


class CheckpointError(ValueError):
    """Base class for unreadable or incompatible checkpoints."""


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.01
    momentum: float = 0.99
    epochs: int = 30
    batch_size: int = 16
    poly_power: float = 0.9
    seed: int = 0
    loss: str = "hybrid_focal"

    def validate(self) -> None:
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.lr0 <= 0:
            raise ValueError(f"lr0 must be > 0, got {self.lr0}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")


@dataclass
class OptimizerState:
    """Per-parameter velocity tensors, zero-initialized."""

    velocity: dict

    @classmethod
    def for_model(cls, model: FocusUNet) -> "OptimizerState":
        return cls({p.name: np.zeros_like(p.value) for p in model.parameters()})


@dataclass
class Checkpoint:
    config: NetworkConfig
    arrays: dict
    epoch: int
    best_val_loss: float
    version: int = FORMAT_VERSION


def poly_lr(epoch: int, epoch_max: int, lr0: float, power: float = 0.9) -> float:
    """lr0 * (1 - epoch/epoch_max)**power: lr0 at 0, exactly 0 at epoch_max."""
    if not 0 <= epoch <= epoch_max:
        raise ValueError(f"epoch {epoch} outside [0, {epoch_max}]")
    return lr0 * (1.0 - epoch / epoch_max) ** power

def nesterov_step(parameters, grads: dict, state: OptimizerState, lr: float,
                  momentum: float) -> None:
    """v <- mu*v - lr*g;  p <- p + mu*v - lr*g  (lookahead form).

    With mu = 0 this is plain SGD. Parameters update in their creation
    order, keeping repeat runs bit-identical.
    """
    for p in parameters:
        g = grads[p.name]
        v = state.velocity[p.name]
        v *= momentum
        v -= lr * g
        p.value = p.value + momentum * v - lr * g


def _batches(count: int, batch_size: int):
    for start in range(0, count, batch_size):
        yield range(start, min(start + batch_size, count))


def _assemble(samples) -> tuple:
    dtype = get_default_dtype()
    x = np.stack([zscore_normalize(s.image) for s in samples]).astype(dtype)
    y = np.stack([s.mask for s in samples]).astype(dtype)
    return x, y


def evaluate_model(model: FocusUNet, samples, batch_size: int = 16,
                   loss: str = "hybrid_focal"):
    """Augmentation-free pass: (mean loss, per-image metric rows)."""
    if not samples:
        raise ValueError("cannot evaluate on an empty sample list")
    total, rows = 0.0, []
    for batch in _batches(len(samples), batch_size):
        part = [samples[i] for i in batch]
        x, y = _assemble(part)
        outputs = model.forward(x)
        loss_node = aggregate_supervised_loss(outputs, model.output_strides, y, loss)
        total += float(loss_node.value) * len(part)
        pred = binarize(outputs[-1].value)
        for i, s in enumerate(part):
            rows.append(evaluate_masks(pred[i], s.mask))
    return total / len(samples), rows


def train(model: FocusUNet, samples, train_ids, val_ids, config: TrainConfig,
          aug: Optional[AugmentationConfig] = None):
    """Run the optimization loop; returns (best checkpoint, per-epoch log).

    Each epoch shuffles the training ids (seeded), optionally augments each
    sample with a per-(seed, epoch, position) generator, takes Nesterov steps
    at the polynomial learning rate, then scores the validation partition
    with augmentation off. The checkpoint updates only on strict validation
    loss improvement, so ties keep the earlier model.
    """
    config.validate()
    by_id = {s.id: s for s in samples}
    train_set = [by_id[i] for i in train_ids]
    val_set = [by_id[i] for i in val_ids]
    if not train_set or not val_set:
        raise ValueError("train and validation partitions must be non-empty")

    parameters = model.parameters()
    state = OptimizerState.for_model(model)
    best: Optional[Checkpoint] = None
    log = []
    for epoch in range(config.epochs):
        lr = poly_lr(epoch, config.epochs, config.lr0, config.poly_power)
        order = np.random.default_rng((config.seed, epoch)).permutation(len(train_set))
        seen, loss_sum = 0, 0.0
        for b, batch in enumerate(_batches(len(train_set), config.batch_size)):
            chosen = []
            for pos in batch:
                s = train_set[order[pos]]
                if aug is not None:
                    s = augment(s, aug, np.random.default_rng(
                        (config.seed, epoch, int(pos))))
                chosen.append(s)
            x, y = _assemble(chosen)
            outputs = model.forward(x)
            loss_node = aggregate_supervised_loss(outputs, model.output_strides, y,
                                                  config.loss)
            loss_value = float(loss_node.value)
            if not math.isfinite(loss_value):
                raise TrainingDiverged(
                    f"non-finite training loss at epoch {epoch}, batch {b}")
            grads = backward(loss_node, parameters)
            nesterov_step(parameters, grads, state, lr, config.momentum)
            loss_sum += loss_value * len(chosen)
            seen += len(chosen)
        val_loss, rows = evaluate_model(model, val_set, config.batch_size, config.loss)
        val_mdsc = mean_metrics(rows)["dsc"]
        log.append({"epoch": epoch, "lr": lr, "train_loss": loss_sum / seen,
                    "val_loss": val_loss, "val_mdsc": val_mdsc})
        if best is None or val_loss < best.best_val_loss:
            best = Checkpoint(
                config=model.config,
                arrays={p.name: p.value.astype(np.float32, copy=True)
                        for p in parameters},
                epoch=epoch, best_val_loss=val_loss)
    return best, log


def write_log_csv(log, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        writer.writeheader()
        for row in log:
            writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k]
                             for k in LOG_FIELDS})


_CONFIG_FIELDS = {
    "height": int, "width": int, "depth": int, "base_channels": int,
    "focal": float, "gate_type": str, "short_skips": bool,
    "deep_supervision": bool,
}


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(text: str, kind):
    if kind is bool:
        if text not in ("true", "false"):
            raise CheckpointError(f"expected true/false, got {text!r}")
        return text == "true"
    return kind(text)


def _config_text(ckpt: Checkpoint) -> str:
    entries = {name: getattr(ckpt.config, name) for name in _CONFIG_FIELDS}
    entries["epoch"] = ckpt.epoch
    entries["best_val_loss"] = float(ckpt.best_val_loss)
    return "".join(f"{k}={_format_value(entries[k])}\n" for k in sorted(entries))


def _config_from_text(text: str):
    values = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, raw = line.partition("=")
        values[key] = raw
    try:
        cfg = NetworkConfig(**{name: _parse_value(values[name], kind)
                               for name, kind in _CONFIG_FIELDS.items()})
        epoch = int(values["epoch"])
        best = float(values["best_val_loss"])
    except KeyError as missing:
        raise CheckpointError(f"config text is missing key {missing}") from None
    return cfg, epoch, best


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    buf = bytearray(MAGIC)
    buf += struct.pack("<I", ckpt.version)
    text = _config_text(ckpt).encode("utf-8")
    buf += struct.pack("<I", len(text)) + text
    names = sorted(ckpt.arrays)
    buf += struct.pack("<I", len(names))
    for name in names:
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(ckpt.arrays[name], dtype="<f4")
        buf += struct.pack("<I", len(raw)) + raw
        buf += struct.pack("<B", arr.ndim)
        buf += struct.pack(f"<{arr.ndim}I", *arr.shape)
        buf += arr.tobytes()
    Path(path).write_bytes(bytes(buf))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointTruncatedError(
                f"need {n} bytes at offset {self.pos}, file has {len(self.blob)}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return self.take(1)[0]


def load_checkpoint(path) -> Checkpoint:
    """Read and validate a checkpoint: magic, version, config compatibility
    and array names/shapes against the architecture the config implies."""
    reader = _Reader(Path(path).read_bytes())
    if reader.take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version}, expected {FORMAT_VERSION}")
    config, epoch, best = _config_from_text(reader.take(reader.u32()).decode("utf-8"))
    arrays = {}
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode("utf-8")
        rank = reader.u8()
        shape = struct.unpack(f"<{rank}I", reader.take(4 * rank))
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        data = np.frombuffer(reader.take(4 * count), dtype="<f4")
        arrays[name] = data.reshape(shape).copy()
    if reader.pos != len(reader.blob):
        raise CheckpointError(f"{path}: {len(reader.blob) - reader.pos} trailing bytes")

    reference = build(config, seed=0)
    expected = {p.name: p.value.shape for p in reference.parameters()}
    if set(arrays) != set(expected):
        missing = sorted(set(expected) - set(arrays))
        extra = sorted(set(arrays) - set(expected))
        raise CheckpointShapeError(
            f"{path}: parameter names do not match config "
            f"(missing {missing[:3]}, unexpected {extra[:3]})")
    for name, arr in arrays.items():
        if arr.shape != expected[name]:
            raise CheckpointShapeError(
                f"{path}: {name} has shape {arr.shape}, config implies {expected[name]}")
    return Checkpoint(config=config, arrays=arrays, epoch=epoch,
                      best_val_loss=best, version=version)


def restore_model(ckpt: Checkpoint) -> FocusUNet:
    """Materialize the checkpointed model."""
    model = build(ckpt.config, seed=0)
    for p in model.parameters():
        p.value = ckpt.arrays[p.name]
    return model
