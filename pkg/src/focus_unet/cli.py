"""Command-line surface: train, eval, predict, inspect-attention, gradcheck,
synth and ablate subcommands.

Runs are driven by a flat key=value configuration (RunConfig) that mirrors
the network, trainer and augmentation dataclasses plus data paths; a config
file can set any key and command-line flags override it. Unknown keys are
rejected. Every run writes its fully resolved configuration next to its
outputs, and re-running from that file reproduces the outputs bit-for-bit
with --threads 1.

Exit codes: 0 success, 2 usage, 3 configuration error, 4 data error,
5 checkpoint error, 6 numeric failure (gradient check or divergence).
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import data as D
from .data import AugmentationConfig, DataError
from .gradcheck import run_suite
from .metrics import METRIC_NAMES, binarize, mean_metrics
from .model import ConfigError, NetworkConfig, build
from .trainer import (
    CheckpointError,
    TrainConfig,
    TrainingDiverged,
    evaluate_model,
    load_checkpoint,
    restore_model,
    save_checkpoint,
    train,
    write_log_csv,
)
from .viz import draw_overlay, save_heatmap_png, save_image_png, save_mask_png

EXIT_CONFIG, EXIT_DATA, EXIT_CHECKPOINT, EXIT_NUMERIC = 3, 4, 5, 6

GATE_LABELS = {"none": "unet", "additive": "attention-unet", "focus": "focus-unet"}


@dataclass(frozen=True)
class RunConfig:
    """Flat run configuration; every field is a config-file key and a CLI flag.

    Defaults target the desk-scale synthetic task; real datasets override
    them from a config file.
    """

    # architecture
    height: int = 64
    width: int = 64
    depth: int = 3
    base_channels: int = 8
    focal: float = 1.25
    gate_type: str = "focus"
    short_skips: bool = True
    deep_supervision: bool = True
    # optimization
    epochs: int = 30
    batch_size: int = 16
    lr0: float = 0.01
    momentum: float = 0.99
    poly_power: float = 0.9
    loss: str = "hybrid_focal"
    seed: int = 0
    # data and run layout
    data_dir: str = ""
    out_dir: str = "runs/latest"
    split: str = "single"
    kfold_k: int = 5
    train_fraction: float = 0.8
    val_fraction: float = 0.2
    threads: int = 0
    # augmentation
    augment: bool = True
    aug_scale_min: float = 0.85
    aug_scale_max: float = 1.15
    aug_rotate_deg: float = 15.0
    aug_elastic_alpha: float = 10.0
    aug_elastic_sigma: int = 4
    aug_gamma_min: float = 0.7
    aug_gamma_max: float = 1.5
    aug_prob: float = 0.5

    def network_config(self) -> NetworkConfig:
        cfg = NetworkConfig(height=self.height, width=self.width, depth=self.depth,
                            base_channels=self.base_channels, focal=self.focal,
                            gate_type=self.gate_type, short_skips=self.short_skips,
                            deep_supervision=self.deep_supervision)
        cfg.validate()
        return cfg

    def train_config(self) -> TrainConfig:
        cfg = TrainConfig(lr0=self.lr0, momentum=self.momentum, epochs=self.epochs,
                          batch_size=self.batch_size, poly_power=self.poly_power,
                          seed=self.seed, loss=self.loss)
        cfg.validate()
        return cfg

    def augmentation_config(self):
        if not self.augment:
            return None
        return AugmentationConfig(
            scale_min=self.aug_scale_min, scale_max=self.aug_scale_max,
            rotate_deg=self.aug_rotate_deg, elastic_alpha=self.aug_elastic_alpha,
            elastic_sigma=self.aug_elastic_sigma, gamma_min=self.aug_gamma_min,
            gamma_max=self.aug_gamma_max, apply_prob=self.aug_prob)


_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_TYPES = {"int": int, "float": float, "str": str, "bool": bool}


def _parse_bool(text: str) -> bool:
    if text not in ("true", "false"):
        raise ValueError(f"expected true or false, got {text!r}")
    return text == "true"


def _coerce(key: str, raw: str):
    kind = _TYPES[_FIELDS[key]] if isinstance(_FIELDS[key], str) else _FIELDS[key]
    return _parse_bool(raw) if kind is bool else kind(raw)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_file(path) -> dict:
    """Flat key = value lines; # comments; unknown keys rejected."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, raw = (part.strip() for part in stripped.partition("="))
        if not sep or not key:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        if key not in _FIELDS:
            raise ConfigError(f"{path}:{lineno}: unknown configuration key {key!r}")
        try:
            values[key] = _coerce(key, raw)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def resolve_run_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(parse_config_file(args.config))
    for name in _FIELDS:
        override = getattr(args, name, None)
        if override is not None:
            values[name] = override
    cfg = RunConfig(**values)
    cfg.network_config()
    cfg.train_config()
    cfg.augmentation_config()
    return cfg


def write_resolved_config(cfg: RunConfig, out_dir: Path) -> None:
    text = "".join(f"{name} = {_format(getattr(cfg, name))}\n" for name in sorted(_FIELDS))
    (out_dir / "resolved_config.txt").write_text(text)


def _write_resolved_args(out_dir: Path, args, keys) -> None:
    """Resolved-invocation record for the non-RunConfig commands."""
    values = {}
    for key in keys:
        v = getattr(args, key)
        values[key] = " ".join(str(p) for p in v) if isinstance(v, list) else v
    (out_dir / "resolved_config.txt").write_text(
        "".join(f"{k} = {_format(values[k])}\n" for k in sorted(values)))


def _load_samples(cfg: RunConfig):
    if not cfg.data_dir:
        raise ConfigError("data_dir is not set; point it at a dataset root "
                          "(images/ + masks/)")
    samples = D.load_dataset(cfg.data_dir)
    return [D.resize(s, cfg.height, cfg.width) for s in samples]


def weighted_combined(per_dataset) -> dict:
    """Image-count-weighted mean over datasets: rows of (count, metrics)."""
    total = sum(count for count, _ in per_dataset)
    if total == 0:
        raise DataError("no images to combine")
    return {name: sum(count * metrics[name] for count, metrics in per_dataset) / total
            for name in METRIC_NAMES}


def _metric_stats(rows) -> dict:
    """Across-fold mean and sample std of already-averaged metrics."""
    out = {}
    for name in METRIC_NAMES:
        values = np.array([r[name] for r in rows], dtype=np.float64)
        out[f"{name}_mean"] = float(values.mean())
        out[f"{name}_std"] = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    return out


def _train_one(cfg: RunConfig, samples, train_ids, val_ids, out_dir: Path,
               tag: str = ""):
    model = build(cfg.network_config(), cfg.seed)
    ckpt, log = train(model, samples, train_ids, val_ids, cfg.train_config(),
                      cfg.augmentation_config())
    prefix = out_dir / tag if tag else out_dir
    prefix.mkdir(parents=True, exist_ok=True)
    save_checkpoint(prefix / "model.ckpt", ckpt)
    write_log_csv(log, prefix / "log.csv")
    return ckpt, log


def _run_kfold(cfg: RunConfig, samples, out_dir: Path):
    by_id = {s.id: s for s in samples}
    plan = D.kfold_split([s.id for s in samples], cfg.kfold_k, cfg.seed)
    fold_rows = []
    for fold in range(cfg.kfold_k):
        val_ids = plan.fold_ids(fold)
        train_ids = plan.complement_ids(fold)
        ckpt, _ = _train_one(cfg, samples, train_ids, val_ids, out_dir,
                             tag=f"fold{fold}")
        best = restore_model(ckpt)
        _, rows = evaluate_model(best, [by_id[i] for i in val_ids],
                                 cfg.batch_size, cfg.loss)
        fold_rows.append(mean_metrics(rows))
    return fold_rows


def _write_fold_summary(fold_rows, path: Path):
    stats = _metric_stats(fold_rows)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", *METRIC_NAMES])
        for i, row in enumerate(fold_rows):
            writer.writerow([i, *(repr(row[n]) for n in METRIC_NAMES)])
        writer.writerow(["mean", *(repr(stats[f"{n}_mean"]) for n in METRIC_NAMES)])
        writer.writerow(["std", *(repr(stats[f"{n}_std"]) for n in METRIC_NAMES)])
    return stats


def cmd_train(args) -> int:
    cfg = resolve_run_config(args)
    with _thread_limit(cfg.threads):
        return _run_train(cfg)


def _run_train(cfg: RunConfig) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved_config(cfg, out_dir)
    samples = _load_samples(cfg)
    by_id = {s.id: s for s in samples}

    if cfg.split == "kfold":
        fold_rows = _run_kfold(cfg, samples, out_dir)
        stats = _write_fold_summary(fold_rows, out_dir / "summary.csv")
        print(f"{cfg.kfold_k}-fold cross-validation on {len(samples)} samples:")
        for name in METRIC_NAMES:
            print(f"  m{name}: {stats[f'{name}_mean']:.4f} +/- {stats[f'{name}_std']:.4f}")
    elif cfg.split == "single":
        outer = D.single_split([s.id for s in samples], cfg.train_fraction, cfg.seed)
        pool, test_ids = outer.fold_ids(0), outer.fold_ids(1)
        inner = D.single_split(pool, 1.0 - cfg.val_fraction, cfg.seed + 1)
        train_ids, val_ids = inner.fold_ids(0), inner.fold_ids(1)
        ckpt, log = _train_one(cfg, samples, train_ids, val_ids, out_dir)
        best = restore_model(ckpt)
        _, rows = evaluate_model(best, [by_id[i] for i in test_ids],
                                 cfg.batch_size, cfg.loss)
        summary = mean_metrics(rows)
        (out_dir / "test_metrics.json").write_text(json.dumps(
            {"count": len(test_ids), **summary}, indent=2) + "\n")
        print(f"trained {len(train_ids)} / validated {len(val_ids)} / "
              f"tested {len(test_ids)}; best epoch {ckpt.epoch}")
        for name in METRIC_NAMES:
            print(f"  test m{name}: {summary[name]:.4f}")
    else:
        raise ConfigError(f"split must be 'single' or 'kfold', got {cfg.split!r}")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    model = restore_model(ckpt)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_resolved_args(out_dir, args, ("checkpoint", "data", "batch_size"))
    net = model.config

    per_dataset = []
    with open(out_dir / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "id", *METRIC_NAMES])
        for root in args.data:
            samples = [D.resize(s, net.height, net.width) for s in D.load_dataset(root)]
            _, rows = evaluate_model(model, samples, args.batch_size)
            name = Path(root).name or str(root)
            for s, row in zip(samples, rows):
                writer.writerow([name, s.id, *(repr(row[m]) for m in METRIC_NAMES)])
            per_dataset.append((name, len(samples), mean_metrics(rows)))

    combined = weighted_combined([(count, m) for _, count, m in per_dataset])
    summary = {
        "datasets": [{"name": name, "count": count, **metrics}
                     for name, count, metrics in per_dataset],
        "combined": {"count": sum(c for _, c, _ in per_dataset), **combined},
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    for name, count, metrics in per_dataset:
        print(f"{name} (n={count}): mDSC {metrics['dsc']:.4f}  mIoU {metrics['iou']:.4f}")
    print(f"combined (n={summary['combined']['count']}): "
          f"mDSC {combined['dsc']:.4f}  mIoU {combined['iou']:.4f}")
    return 0


def _prepare_input(image: np.ndarray, net: NetworkConfig):
    resized = D._bilinear_resize(image, net.height, net.width)
    return D.zscore_normalize(resized)[None].astype(np.float32)


def _mask_to_full(mask: np.ndarray, height: int, width: int) -> np.ndarray:
    iy = D._nearest_indices(height, mask.shape[0])
    ix = D._nearest_indices(width, mask.shape[1])
    return mask[iy[:, None], ix[None, :]]


def cmd_predict(args) -> int:
    model = restore_model(load_checkpoint(args.checkpoint))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_resolved_args(out_dir, args,
                         ("checkpoint", "images", "masks", "intermediate"))
    images_dir = Path(args.images)
    paths = sorted(images_dir.glob("*.png"))
    if not paths:
        raise DataError(f"no PNG images under {images_dir}")
    emitted = 0
    for path in paths:
        with Image.open(path) as im:
            if im.mode != "RGB":
                raise D.ImageModeError(f"{path}: expected an RGB image, got {im.mode}")
            image = np.asarray(im, dtype=np.float32)
        true_mask = None
        if args.masks:
            pair = Path(args.masks) / path.name
            true_mask = D.load_png_pair(path, pair).mask
        h, w = image.shape[:2]
        outputs = model.forward(_prepare_input(image, model.config))
        final = _mask_to_full(binarize(outputs[-1].value)[0], h, w)
        save_mask_png(final, out_dir / f"{path.stem}_mask.png")
        save_image_png(draw_overlay(image, final, true_mask),
                       out_dir / f"{path.stem}_overlay.png")
        emitted += 2
        if args.intermediate:
            deepest = _mask_to_full(binarize(outputs[0].value)[0], h, w)
            save_image_png(draw_overlay(image, deepest, true_mask),
                           out_dir / f"{path.stem}_intermediate.png")
            emitted += 1
    print(f"wrote {emitted} files for {len(paths)} images to {out_dir}")
    return 0


def cmd_inspect_attention(args) -> int:
    model = restore_model(load_checkpoint(args.checkpoint))
    if model.config.gate_type != "focus":
        raise ConfigError(
            f"checkpoint was built with gate_type={model.config.gate_type!r}; "
            "attention inspection needs focus gates")
    lambdas = sorted(set(args.lambdas))
    if any(lam < 1.0 for lam in lambdas):
        raise ConfigError(f"focal parameters must be >= 1, got {args.lambdas}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_resolved_args(out_dir, args, ("checkpoint", "image", "lambdas"))
    with Image.open(args.image) as im:
        if im.mode != "RGB":
            raise D.ImageModeError(f"{args.image}: expected an RGB image, got {im.mode}")
        image = np.asarray(im, dtype=np.float32)
    batch = _prepare_input(image, model.config)

    maps = {}
    for lam in lambdas:
        _, attention = model.forward(batch, lam=lam, capture_attention=True)
        maps[lam] = {level: node.value[0] for level, node in attention.items()}
    # suppression must be pointwise monotone in the focal parameter and must
    # not move the argmax; verify numerically before rendering
    for level in maps[lambdas[0]]:
        reference = maps[lambdas[0]][level]
        for lo, hi in zip(lambdas, lambdas[1:]):
            if not np.all(maps[hi][level] <= maps[lo][level] + 1e-6):
                raise ArithmeticError(
                    f"attention map at level {level} is not non-increasing "
                    f"between focal {lo} and {hi}")
            if np.argmax(maps[hi][level]) != np.argmax(reference):
                raise ArithmeticError(
                    f"argmax moved under the focal filter at level {level}")
    count = 0
    for lam in lambdas:
        for level, full in maps[lam].items():
            save_heatmap_png(full.mean(axis=-1),
                             out_dir / f"attention_l{level}_lam{lam:g}.png")
            count += 1
    print(f"wrote {count} heatmaps to {out_dir}")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_suite(trials=args.trials, tolerance=args.tolerance)
    width = max(len(r.name) for r in results)
    failures = 0
    for r in results:
        status = "ok" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  max rel err {r.max_error:.3e}  {status}")
        failures += not r.passed
    print(f"{len(results) - failures}/{len(results)} checks passed "
          f"({args.trials} trials each, tolerance {args.tolerance:g})")
    return EXIT_NUMERIC if failures else 0


def cmd_synth(args) -> int:
    samples = D.synth_polyp_dataset(args.n, args.height, args.width, args.seed)
    D.save_dataset(samples, args.out_dir)
    out_dir = Path(args.out_dir)
    (out_dir / "resolved_config.txt").write_text(
        "".join(f"{k} = {_format(getattr(args, k))}\n"
                for k in ("n", "height", "width", "seed")))
    fractions = [s.mask.mean() for s in samples]
    print(f"wrote {len(samples)} image/mask pairs to {out_dir} "
          f"(foreground fraction {min(fractions):.3f}..{max(fractions):.3f})")
    return 0


def cmd_ablate(args) -> int:
    cfg = resolve_run_config(args)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved_config(cfg, out_dir)
    # comparison protocol: no augmentation inside the ablation grid
    cfg = dataclasses.replace(cfg, augment=False)
    with _thread_limit(cfg.threads):
        samples = _load_samples(cfg)
        return _run_ablation(args, cfg, samples, out_dir)


def _run_ablation(args, cfg: RunConfig, samples, out_dir: Path) -> int:
    rows = []
    for gate_type in args.grid_gates:
        lambdas = args.grid_lambdas if gate_type == "focus" else [None]
        for lam in lambdas:
            for loss in args.grid_losses:
                for short in args.grid_short_skips:
                    for deep in args.grid_deep_supervision:
                        run_cfg = dataclasses.replace(
                            cfg, gate_type=gate_type, loss=loss, short_skips=short,
                            deep_supervision=deep,
                            focal=lam if lam is not None else 1.0)
                        tag = (f"{gate_type}_lam{lam if lam is not None else '-'}_"
                               f"{loss}_ss{int(short)}_ds{int(deep)}")
                        fold_rows = _run_kfold(run_cfg, samples, out_dir / tag)
                        stats = _metric_stats(fold_rows)
                        rows.append({
                            "model": GATE_LABELS[gate_type], "loss": loss,
                            "focal": "-" if lam is None else f"{lam:g}",
                            "short_skips": _format(short),
                            "deep_supervision": _format(deep), **stats})
                        print(f"{tag}: mDSC {stats['dsc_mean']:.4f} "
                              f"+/- {stats['dsc_std']:.4f}")

    header = ["model", "loss", "focal", "short_skips", "deep_supervision"]
    header += [f"{n}_{s}" for n in METRIC_NAMES for s in ("mean", "std")]
    with open(out_dir / "ablation.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in row.items()})
    print(f"{len(rows)} grid rows -> {out_dir / 'ablation.csv'}")
    return 0


def _float_list(text: str):
    return [float(part) for part in text.split(",") if part.strip()]


def _str_list(text: str):
    return [part.strip() for part in text.split(",") if part.strip()]


def _bool_list(text: str):
    return [_parse_bool(part.strip()) for part in text.split(",") if part.strip()]


def _add_runconfig_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value configuration file")
    for name, kind_name in _FIELDS.items():
        kind = _TYPES[kind_name] if isinstance(kind_name, str) else kind_name
        converter = _parse_bool if kind is bool else kind
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name,
                            type=converter, default=None,
                            metavar="true|false" if kind is bool else kind.__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="focus-unet",
        description="Dual attention-gated U-Net: training, evaluation and tooling")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train on a dataset (single split or k-fold)")
    _add_runconfig_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on datasets")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", nargs="+", required=True,
                        help="one or more dataset roots (images/ + masks/)")
    p_eval.add_argument("--out-dir", required=True)
    p_eval.add_argument("--batch-size", type=int, default=16)
    p_eval.add_argument("--threads", type=int, default=0)
    p_eval.set_defaults(func=cmd_eval)

    p_pred = sub.add_parser("predict", help="write mask and overlay PNGs")
    p_pred.add_argument("--checkpoint", required=True)
    p_pred.add_argument("--images", required=True)
    p_pred.add_argument("--masks", help="optional ground-truth masks directory")
    p_pred.add_argument("--out-dir", required=True)
    p_pred.add_argument("--intermediate", action="store_true",
                        help="also overlay the deepest head's prediction")
    p_pred.add_argument("--threads", type=int, default=0)
    p_pred.set_defaults(func=cmd_predict)

    p_att = sub.add_parser("inspect-attention",
                           help="render focal-parameter sweeps of the gate maps")
    p_att.add_argument("--checkpoint", required=True)
    p_att.add_argument("--image", required=True)
    p_att.add_argument("--lambdas", type=_float_list, default=[1.0, 1.25, 2.0, 3.0])
    p_att.add_argument("--out-dir", required=True)
    p_att.add_argument("--threads", type=int, default=0)
    p_att.set_defaults(func=cmd_inspect_attention)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p_grad.add_argument("--trials", type=int, default=20)
    p_grad.add_argument("--tolerance", type=float, default=1e-4)
    p_grad.add_argument("--threads", type=int, default=0)
    p_grad.set_defaults(func=cmd_gradcheck)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--n", type=int, default=100)
    p_synth.add_argument("--height", type=int, default=64)
    p_synth.add_argument("--width", type=int, default=64)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--threads", type=int, default=0)
    p_synth.set_defaults(func=cmd_synth)

    p_abl = sub.add_parser("ablate", help="run the component ablation grid")
    _add_runconfig_flags(p_abl)
    p_abl.add_argument("--grid-gates", type=_str_list,
                       default=["none", "additive", "focus"],
                       help="comma-separated gate types to sweep")
    p_abl.add_argument("--grid-lambdas", type=_float_list,
                       default=[1.0, 1.25, 1.5, 2.0, 3.0],
                       help="focal parameters swept for the focus gate")
    p_abl.add_argument("--grid-losses", type=_str_list,
                       default=["dice_ce", "hybrid_focal"])
    p_abl.add_argument("--grid-short-skips", type=_bool_list, default=[False, True])
    p_abl.add_argument("--grid-deep-supervision", type=_bool_list,
                       default=[False, True])
    p_abl.set_defaults(func=cmd_ablate)
    return parser


@contextlib.contextmanager
def _thread_limit(threads: int):
    if threads and threads > 0:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=threads):
            yield
    else:
        yield


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = getattr(args, "threads", None) or 0
    try:
        with _thread_limit(threads):
            return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
