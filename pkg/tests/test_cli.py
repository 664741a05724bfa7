import json

import numpy as np
import pytest
from PIL import Image

from focus_unet.cli import main, parse_config_file, weighted_combined
from focus_unet.model import ConfigError


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("data") / "synthetic"
    assert main(["synth", "--n", "12", "--height", "16", "--width", "16",
                 "--seed", "3", "--out-dir", str(root)]) == 0
    return root


TRAIN_ARGS = ["--depth", "2", "--base-channels", "4", "--height", "16",
              "--width", "16", "--epochs", "2", "--batch-size", "4",
              "--augment", "false", "--seed", "5"]


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory, synth_dir):
    out = tmp_path_factory.mktemp("runs") / "single"
    code = main(["train", "--data-dir", str(synth_dir), "--out-dir", str(out),
                 *TRAIN_ARGS])
    assert code == 0
    return out


class TestSynth:
    def test_layout_and_determinism(self, synth_dir, tmp_path):
        images = sorted((synth_dir / "images").glob("*.png"))
        masks = sorted((synth_dir / "masks").glob("*.png"))
        assert len(images) == len(masks) == 12
        again = tmp_path / "again"
        assert main(["synth", "--n", "12", "--height", "16", "--width", "16",
                     "--seed", "3", "--out-dir", str(again)]) == 0
        for a, b in zip(images, sorted((again / "images").glob("*.png"))):
            assert a.read_bytes() == b.read_bytes()

    def test_masks_binary(self, synth_dir):
        for p in (synth_dir / "masks").glob("*.png"):
            values = set(np.unique(np.asarray(Image.open(p))))
            assert values <= {0, 255}


class TestTrainSingle:
    def test_outputs_exist(self, trained_run):
        assert (trained_run / "model.ckpt").is_file()
        assert (trained_run / "log.csv").is_file()
        assert (trained_run / "resolved_config.txt").is_file()
        report = json.loads((trained_run / "test_metrics.json").read_text())
        assert set(report) >= {"count", "dsc", "iou", "recall", "precision"}

    def test_resolved_config_reproduces_run(self, trained_run, tmp_path, synth_dir):
        rerun_a = tmp_path / "a"
        rerun_b = tmp_path / "b"
        base = ["train", "--config", str(trained_run / "resolved_config.txt"),
                "--data-dir", str(synth_dir), "--threads", "1"]
        assert main([*base, "--out-dir", str(rerun_a)]) == 0
        assert main([*base, "--out-dir", str(rerun_b)]) == 0
        assert (rerun_a / "model.ckpt").read_bytes() == (rerun_b / "model.ckpt").read_bytes()
        assert (rerun_a / "log.csv").read_text() == (rerun_b / "log.csv").read_text()

    def test_missing_data_dir_is_config_error(self, tmp_path):
        assert main(["train", "--out-dir", str(tmp_path / "x"), *TRAIN_ARGS]) == 3


class TestTrainKfold:
    def test_emits_per_fold_checkpoints_and_summary(self, tmp_path, synth_dir):
        out = tmp_path / "kfold"
        code = main(["train", "--data-dir", str(synth_dir), "--out-dir", str(out),
                     "--split", "kfold", "--kfold-k", "2", *TRAIN_ARGS])
        assert code == 0
        assert (out / "fold0" / "model.ckpt").is_file()
        assert (out / "fold1" / "model.ckpt").is_file()
        lines = (out / "summary.csv").read_text().strip().splitlines()
        assert lines[0] == "fold,dsc,iou,recall,precision"
        assert len(lines) == 5  # 2 folds + mean + std + header


class TestEval:
    def test_eval_two_datasets_combined(self, tmp_path, synth_dir, trained_run):
        second = tmp_path / "second"
        main(["synth", "--n", "6", "--height", "16", "--width", "16",
              "--seed", "9", "--out-dir", str(second)])
        out = tmp_path / "eval"
        code = main(["eval", "--checkpoint", str(trained_run / "model.ckpt"),
                     "--data", str(synth_dir), str(second), "--out-dir", str(out)])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["combined"]["count"] == 18
        counts = [d["count"] for d in summary["datasets"]]
        weighted = sum(d["dsc"] * d["count"] for d in summary["datasets"]) / 18
        assert summary["combined"]["dsc"] == pytest.approx(weighted, rel=1e-12)
        rows = (out / "metrics.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 18

    def test_combined_mean_fixture(self):
        metrics_a = {"dsc": 1.0, "iou": 1.0, "recall": 1.0, "precision": 1.0}
        metrics_b = {"dsc": 0.5, "iou": 0.5, "recall": 0.5, "precision": 0.5}
        combined = weighted_combined([(10, metrics_a), (30, metrics_b)])
        assert combined["dsc"] == pytest.approx(0.625)

    def test_empty_dataset_is_data_error(self, tmp_path, trained_run):
        empty = tmp_path / "empty"
        (empty / "images").mkdir(parents=True)
        (empty / "masks").mkdir(parents=True)
        assert main(["eval", "--checkpoint", str(trained_run / "model.ckpt"),
                     "--data", str(empty), "--out-dir", str(tmp_path / "o")]) == 4


class TestPredict:
    def test_outputs_per_image(self, tmp_path, synth_dir, trained_run):
        out = tmp_path / "pred"
        code = main(["predict", "--checkpoint", str(trained_run / "model.ckpt"),
                     "--images", str(synth_dir / "images"),
                     "--masks", str(synth_dir / "masks"),
                     "--out-dir", str(out), "--intermediate"])
        assert code == 0
        masks = sorted(out.glob("*_mask.png"))
        overlays = sorted(out.glob("*_overlay.png"))
        inter = sorted(out.glob("*_intermediate.png"))
        assert len(masks) == len(overlays) == len(inter) == 12
        arr = np.asarray(Image.open(masks[0]))
        assert arr.shape == (16, 16)
        assert set(np.unique(arr)) <= {0, 255}

    def test_no_mask_mode_omits_ground_truth(self, tmp_path, synth_dir, trained_run):
        out = tmp_path / "pred_nomask"
        code = main(["predict", "--checkpoint", str(trained_run / "model.ckpt"),
                     "--images", str(synth_dir / "images"), "--out-dir", str(out)])
        assert code == 0
        overlay = np.asarray(Image.open(sorted(out.glob("*_overlay.png"))[0]))
        green = (overlay == np.array([0, 255, 0])).all(axis=-1)
        assert not green.any()


class TestInspectAttention:
    def test_heatmaps_per_level_and_lambda(self, tmp_path, synth_dir, trained_run):
        out = tmp_path / "attn"
        image = sorted((synth_dir / "images").glob("*.png"))[0]
        code = main(["inspect-attention",
                     "--checkpoint", str(trained_run / "model.ckpt"),
                     "--image", str(image), "--lambdas", "1,3",
                     "--out-dir", str(out)])
        assert code == 0
        files = sorted(out.glob("attention_*.png"))
        # depth-2 model has one gate level, two lambdas requested
        assert [f.name for f in files] == ["attention_l0_lam1.png",
                                           "attention_l0_lam3.png"]
        low = np.asarray(Image.open(files[0])).astype(int)
        high = np.asarray(Image.open(files[1])).astype(int)
        assert (high <= low + 1).all()  # suppression survives 8-bit rounding

    def test_lambda_below_one_rejected(self, tmp_path, synth_dir, trained_run):
        image = sorted((synth_dir / "images").glob("*.png"))[0]
        assert main(["inspect-attention",
                     "--checkpoint", str(trained_run / "model.ckpt"),
                     "--image", str(image), "--lambdas", "0.5",
                     "--out-dir", str(tmp_path / "x")]) == 3


class TestGradcheckCommand:
    def test_quick_pass(self, capsys):
        assert main(["gradcheck", "--trials", "1"]) == 0
        out = capsys.readouterr().out
        assert "conv2d/x same s1" in out
        assert "end_to_end/input" in out
        assert "checks passed" in out

    def test_failure_exit_code(self, capsys):
        assert main(["gradcheck", "--trials", "1", "--tolerance", "1e-12"]) == 6


class TestAblate:
    def test_two_row_grid(self, tmp_path, synth_dir):
        out = tmp_path / "abl"
        code = main(["ablate", "--data-dir", str(synth_dir), "--out-dir", str(out),
                     "--kfold-k", "2", *TRAIN_ARGS,
                     "--epochs", "1",
                     "--grid-gates", "focus", "--grid-lambdas", "1.25",
                     "--grid-losses", "hybrid_focal",
                     "--grid-short-skips", "true",
                     "--grid-deep-supervision", "false,true"])
        assert code == 0
        lines = (out / "ablation.csv").read_text().strip().splitlines()
        assert lines[0].startswith("model,loss,focal,short_skips,deep_supervision,")
        assert len(lines) == 3  # header + 2 grid rows
        assert all(line.startswith("focus-unet,hybrid_focal,1.25,true,")
                   for line in lines[1:])


class TestConfigHandling:
    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("depth = 2\nmystery = 4\n")
        with pytest.raises(ConfigError, match="mystery"):
            parse_config_file(cfg)
        assert main(["train", "--config", str(cfg)]) == 3

    def test_comments_and_types(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# a comment\ndepth = 2  # trailing\nshort_skips = false\n"
                       "focal = 1.5\n")
        values = parse_config_file(cfg)
        assert values == {"depth": 2, "short_skips": False, "focal": 1.5}

    def test_bad_bool_rejected(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("short_skips = yes\n")
        with pytest.raises(ConfigError):
            parse_config_file(cfg)

    def test_invalid_network_config_exit_code(self, tmp_path, synth_dir):
        assert main(["train", "--data-dir", str(synth_dir),
                     "--out-dir", str(tmp_path / "x"),
                     "--depth", "2", "--height", "15"]) == 3

    def test_missing_checkpoint_is_data_error(self, tmp_path):
        assert main(["eval", "--checkpoint", str(tmp_path / "none.ckpt"),
                     "--data", str(tmp_path), "--out-dir", str(tmp_path / "o")]) == 4
