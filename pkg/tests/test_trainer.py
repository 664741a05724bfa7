import numpy as np
import pytest

from focus_unet.data import AugmentationConfig, synth_polyp_dataset
from focus_unet.model import NetworkConfig, build
from focus_unet.tensor import Parameter
from focus_unet.trainer import (
    Checkpoint,
    CheckpointError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    OptimizerState,
    TrainConfig,
    TrainingDiverged,
    evaluate_model,
    load_checkpoint,
    nesterov_step,
    poly_lr,
    restore_model,
    save_checkpoint,
    train,
    write_log_csv,
)


def tiny_setup(n=8, seed=0, **net_kw):
    net = dict(height=16, width=16, depth=2, base_channels=4)
    net.update(net_kw)
    config = NetworkConfig(**net)
    model = build(config, seed=seed)
    samples = synth_polyp_dataset(n, 16, 16, seed=seed)
    ids = [s.id for s in samples]
    return model, samples, ids[: n * 3 // 4], ids[n * 3 // 4:]


class TestPolyLr:
    def test_boundary_values(self):
        assert poly_lr(0, 100, 0.01) == 0.01
        assert poly_lr(100, 100, 0.01) == 0.0

    def test_midpoint(self):
        assert poly_lr(50, 100, 0.01) == pytest.approx(0.01 * 0.5 ** 0.9, abs=1e-9)

    def test_monotone_non_increasing(self):
        values = [poly_lr(e, 40, 0.01) for e in range(41)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            poly_lr(-1, 10, 0.01)
        with pytest.raises(ValueError):
            poly_lr(11, 10, 0.01)


class TestNesterovStep:
    def make(self, value):
        p = Parameter("p", np.array(value, dtype=np.float32))
        state = OptimizerState({"p": np.zeros_like(p.value)})
        return p, state

    def test_zero_momentum_is_plain_sgd(self):
        p, state = self.make([1.0, -2.0])
        g = {"p": np.array([0.5, -0.5], dtype=np.float32)}
        nesterov_step([p], g, state, lr=0.1, momentum=0.0)
        np.testing.assert_allclose(p.value, [0.95, -1.95])

    def test_zero_gradient_zero_velocity_no_change(self):
        p, state = self.make([3.0])
        nesterov_step([p], {"p": np.zeros(1, np.float32)}, state, 0.1, 0.9)
        np.testing.assert_array_equal(p.value, [3.0])

    def test_quadratic_bowl_converges(self):
        # f(p) = p^2, grad = 2p
        p, state = self.make([1.0])
        for _ in range(50):
            nesterov_step([p], {"p": 2.0 * p.value}, state, lr=0.1, momentum=0.9)
        assert abs(float(p.value[0])) < 1e-3

    def test_velocity_accumulates(self):
        p, state = self.make([0.0])
        g = {"p": np.ones(1, np.float32)}
        nesterov_step([p], g, state, lr=0.1, momentum=0.5)
        # v = -0.1, p = 0.5*(-0.1) - 0.1 = -0.15
        np.testing.assert_allclose(p.value, [-0.15], rtol=1e-6)


class TestTrainLoop:
    def test_one_epoch_smoke(self):
        model, samples, train_ids, val_ids = tiny_setup()
        ckpt, log = train(model, samples, train_ids, val_ids,
                          TrainConfig(epochs=1, batch_size=4, seed=7))
        assert len(log) == 1
        assert set(log[0]) == {"epoch", "lr", "train_loss", "val_loss", "val_mdsc"}
        assert ckpt.epoch == 0
        assert ckpt.best_val_loss == log[0]["val_loss"]

    def test_same_seed_bit_identical_logs(self):
        logs = []
        for _ in range(2):
            model, samples, tr, va = tiny_setup(seed=3)
            _, log = train(model, samples, tr, va,
                           TrainConfig(epochs=2, batch_size=4, seed=3),
                           aug=AugmentationConfig())
            logs.append(log)
        assert logs[0] == logs[1]

    def test_best_checkpoint_is_min_val_loss(self):
        model, samples, tr, va = tiny_setup()
        ckpt, log = train(model, samples, tr, va,
                          TrainConfig(epochs=3, batch_size=4, seed=1))
        assert ckpt.best_val_loss == min(row["val_loss"] for row in log)

    def test_empty_partition_rejected(self):
        model, samples, tr, _ = tiny_setup()
        with pytest.raises(ValueError):
            train(model, samples, tr, [], TrainConfig(epochs=1))

    def test_divergence_aborts_with_location(self):
        model, samples, tr, va = tiny_setup()
        model.parameters()[0].value = np.full_like(model.parameters()[0].value, np.nan)
        with pytest.raises(TrainingDiverged, match="epoch 0, batch 0"):
            train(model, samples, tr, va, TrainConfig(epochs=1, batch_size=4))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(momentum=1.0).validate()
        with pytest.raises(ValueError):
            TrainConfig(lr0=0.0).validate()
        with pytest.raises(ValueError):
            TrainConfig(loss="other").validate()

    def test_log_csv(self, tmp_path):
        model, samples, tr, va = tiny_setup()
        _, log = train(model, samples, tr, va, TrainConfig(epochs=1, batch_size=4))
        out = tmp_path / "log.csv"
        write_log_csv(log, out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "epoch,lr,train_loss,val_loss,val_mdsc"
        assert len(lines) == 2


class TestEvaluate:
    def test_perfect_model_fixture(self):
        model, samples, _, _ = tiny_setup()
        _, rows = evaluate_model(model, samples, batch_size=4)
        assert len(rows) == len(samples)
        for row in rows:
            assert set(row) == {"dsc", "iou", "recall", "precision"}

    def test_empty_rejected(self):
        model, *_ = tiny_setup()
        with pytest.raises(ValueError):
            evaluate_model(model, [])


class TestCheckpointIO:
    def roundtrip(self, tmp_path, **net_kw):
        model, samples, tr, va = tiny_setup(**net_kw)
        ckpt, _ = train(model, samples, tr, va, TrainConfig(epochs=1, batch_size=4))
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, ckpt)
        return model, ckpt, path

    def test_magic_bytes(self, tmp_path):
        _, _, path = self.roundtrip(tmp_path)
        assert path.read_bytes()[:4] == b"FUNC"

    def test_byte_identical_roundtrip(self, tmp_path):
        _, _, path = self.roundtrip(tmp_path)
        loaded = load_checkpoint(path)
        second = tmp_path / "again.ckpt"
        save_checkpoint(second, loaded)
        assert path.read_bytes() == second.read_bytes()

    def test_restored_forward_bit_exact(self, tmp_path, rng):
        model, _, path = self.roundtrip(tmp_path)
        restored = restore_model(load_checkpoint(path))
        x = rng.normal(size=(2, 16, 16, 3)).astype(np.float32)
        assert np.array_equal(model.forward(x)[-1].value,
                              restored.forward(x)[-1].value)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk.ckpt"
        p.write_bytes(b"JUNKxxxx")
        with pytest.raises(CheckpointError):
            load_checkpoint(p)

    def test_version_mismatch(self, tmp_path):
        _, ckpt, path = self.roundtrip(tmp_path)
        blob = bytearray(path.read_bytes())
        blob[4:8] = (99).to_bytes(4, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointVersionError):
            load_checkpoint(path)

    def test_truncation_detected(self, tmp_path):
        _, _, path = self.roundtrip(tmp_path)
        blob = path.read_bytes()
        path.write_bytes(blob[:len(blob) - 10])
        with pytest.raises(CheckpointTruncatedError):
            load_checkpoint(path)

    def test_corrupted_length_field(self, tmp_path):
        _, _, path = self.roundtrip(tmp_path)
        blob = bytearray(path.read_bytes())
        blob[8:12] = (2 ** 31).to_bytes(4, "little")  # config length
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointTruncatedError):
            load_checkpoint(path)

    def test_shape_mismatch_detected(self, tmp_path):
        model, ckpt, path = self.roundtrip(tmp_path)
        bad = Checkpoint(config=ckpt.config,
                         arrays={**ckpt.arrays,
                                 "enc/l0/conv1/w": np.zeros((1, 1, 3, 4), np.float32)},
                         epoch=ckpt.epoch, best_val_loss=ckpt.best_val_loss)
        save_checkpoint(path, bad)
        with pytest.raises(CheckpointShapeError):
            load_checkpoint(path)

    def test_name_set_mismatch_detected(self, tmp_path):
        model, ckpt, path = self.roundtrip(tmp_path)
        arrays = dict(ckpt.arrays)
        arrays.pop("enc/l0/conv1/w")
        save_checkpoint(path, Checkpoint(config=ckpt.config, arrays=arrays,
                                         epoch=0, best_val_loss=0.5))
        with pytest.raises(CheckpointShapeError):
            load_checkpoint(path)
