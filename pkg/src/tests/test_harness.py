"""
Tests for iteration arithmetic, the optimizer, checkpoints, training and evaluation
"""

import csv
import importlib

import numpy as np
import pytest

from geoseg.data import generate_from_config, write_dataset
from geoseg.errors import (
    BadMagicError,
    ChecksumError,
    ConfigError,
    DatasetError,
    NonFiniteError,
    TileFormatError,
    TrainingDivergedError,
    TruncatedError,
)
from geoseg.harness import (
    AdamW,
    IterationRow,
    evaluate,
    iteration_table,
    iterations_for,
    load_checkpoint,
    save_checkpoint,
    train,
)
from geoseg.harness.checkpoint import decode_checkpoint, encode_checkpoint
from geoseg.harness.train import METRICS_LOG_HEADER, evaluate_records
from geoseg.nn import GeoSegModel, ParamStore

train_module = importlib.import_module("geoseg.harness.train")


@pytest.fixture
def one_tile_manifest(tmp_path, small_dataset_config):
    """A dataset with a single training tile and a single validation tile"""
    records = generate_from_config(small_dataset_config, seed=7)
    chosen = [r for r in records if r.tile_id in ("site00-train-0000", "site00-val-0000")]
    return write_dataset(chosen, tmp_path / "one", small_dataset_config.n_classes)


class TestIterations:
    """Test training-length arithmetic"""

    @pytest.mark.parametrize(
        "args,expected",
        [((1706, 75, 32, 1), 4050), ((16, 1, 16, 1), 1), ((17, 1, 16, 1), 2), ((100, 2, 4, 5), 10)],
    )
    def test_formula(self, args, expected):
        """epochs * ceil(samples / (batch * devices))"""
        assert iterations_for(*args) == expected

    @pytest.mark.parametrize("args", [(0, 75, 32, 1), (10, 75, 0, 1), (10, 75, 32, 0), (10, 0, 4, 1)])
    def test_non_positive_inputs(self, args):
        """Zero denominators and empty runs are configuration errors"""
        with pytest.raises(ConfigError):
            iterations_for(*args)

    def test_published_row_differs_from_formula(self):
        """The published RTS count on one A100 is 4000; the formula gives 4050"""
        row = IterationRow("RTS", 1706, "A100", 1, per_device_batch=32)
        assert row.reported == 4000
        assert row.iterations == 4050

    def test_table_rows(self):
        """Rows without a published count report None"""
        table = iteration_table(
            [IterationRow("RTS", 1706, "A100", 1, 32), IterationRow("custom", 10, "cpu", 1, 4, epochs=2)]
        )
        assert [r["iterations"] for r in table] == [4050, 6]
        assert table[1]["reported"] is None


class TestOptimizer:
    """Test the momentum-free AdamW update"""

    def _store(self):
        store = ParamStore(seed=0, dtype=np.float64)
        store.create("w", (2, 2), "ones")
        store.create("b", (2,), "ones")
        return store

    def test_cosine_schedule(self):
        """lr decays from its peak to min_lr along a half cosine"""
        opt = AdamW(self._store(), lr=1e-3, total_steps=100)
        assert opt.lr_at(0) == pytest.approx(1e-3)
        assert opt.lr_at(50) == pytest.approx(5e-4)
        assert opt.lr_at(100) == pytest.approx(0.0)
        assert opt.lr_at(500) == pytest.approx(0.0)

    def test_first_step_moves_by_lr(self):
        """With bias correction the first step has magnitude lr per element"""
        store = self._store()
        store["b"].grad = np.array([0.5, -2.0])
        AdamW(store, lr=0.01, weight_decay=0.0).step()
        np.testing.assert_allclose(store["b"].data, [0.99, 1.01], rtol=1e-6)

    def test_decay_only_on_matrices(self):
        """Weight decay shrinks matrices but leaves vectors alone"""
        store = self._store()
        store["w"].grad = np.zeros((2, 2))
        store["b"].grad = np.zeros(2)
        AdamW(store, lr=0.1, weight_decay=0.5, total_steps=10).step()
        np.testing.assert_allclose(store["w"].data, 0.95)
        np.testing.assert_allclose(store["b"].data, 1.0)

    def test_missing_gradients_are_skipped(self):
        """Parameters without gradients keep their values"""
        store = self._store()
        store["b"].grad = np.ones(2)
        AdamW(store, weight_decay=0.5).step()
        np.testing.assert_array_equal(store["w"].data, np.ones((2, 2)))

    def test_step_bumps_version(self):
        """Every update invalidates parameter-keyed caches"""
        store = self._store()
        opt = AdamW(store)
        opt.step()
        opt.step()
        assert store.version == 2
        assert opt.steps == 2


class TestCheckpoint:
    """Test the GVCK checkpoint format"""

    def test_round_trip(self, run_config, tmp_path):
        """A saved model reloads with the same config and identical parameters"""
        model = GeoSegModel.from_run_config(run_config)
        path = save_checkpoint(tmp_path / "m.gvck", run_config, model)
        loaded, config = load_checkpoint(path)
        assert config == run_config
        original = model.store.state_dict()
        for name, values in loaded.store.state_dict().items():
            np.testing.assert_array_equal(values, original[name])

    def test_fused_round_trip(self, make_run_config, tmp_path):
        """Fusion parameters are stored and restored as well"""
        config = make_run_config(fusion="post/L10/cross_attention")
        model = GeoSegModel.from_run_config(config)
        loaded, _ = load_checkpoint(save_checkpoint(tmp_path / "f.gvck", config, model))
        assert set(loaded.store) == set(model.store)
        assert any(name.startswith("fusion.post.p2") for name in loaded.store)

    def test_bad_magic(self, run_config):
        """A foreign payload is rejected"""
        payload = encode_checkpoint(run_config, {"a": np.zeros(2, dtype=np.float32)})
        with pytest.raises(BadMagicError):
            decode_checkpoint(b"GVT1" + payload[4:])

    def test_corrupted_data(self, run_config):
        """A flipped parameter byte breaks the CRC"""
        payload = bytearray(encode_checkpoint(run_config, {"a": np.arange(4, dtype=np.float32)}))
        payload[-6] ^= 0x01
        with pytest.raises(ChecksumError):
            decode_checkpoint(bytes(payload))

    def test_truncated(self, run_config):
        """A cut-off checkpoint reports truncation"""
        payload = encode_checkpoint(run_config, {"a": np.zeros(4, dtype=np.float32)})
        with pytest.raises(TruncatedError):
            decode_checkpoint(payload[:-10])

    def test_state_mismatch(self, run_config, tmp_path):
        """Parameters that do not fit the echoed config are a format error"""
        path = tmp_path / "bad.gvck"
        path.write_bytes(encode_checkpoint(run_config, {"a": np.zeros(1, dtype=np.float32)}))
        with pytest.raises(TileFormatError):
            load_checkpoint(path)


class TestEvaluateRecords:
    """Test evaluation over in-memory tiles"""

    def test_no_records(self, run_config):
        """Evaluating nothing is an error"""
        with pytest.raises(DatasetError):
            evaluate_records(GeoSegModel.from_run_config(run_config), [], 3)

    def test_does_not_touch_parameters(self, run_config, small_dataset_config):
        """Evaluation leaves the parameter version unchanged"""
        model = GeoSegModel.from_run_config(run_config)
        records = generate_from_config(small_dataset_config, seed=7)[:2]
        before = model.store.version
        metrics, loss = evaluate_records(model, records, 3)
        assert model.store.version == before
        assert 0.0 <= metrics.f1 <= 1.0
        assert loss > 0.0


@pytest.mark.integration
class TestTrain:
    """Test the training loop end to end on the small dataset"""

    def test_outputs_and_log(self, run_config):
        """Training writes a checkpoint and one log row per epoch"""
        result = train(run_config.model_copy(update={"epochs": 2}))
        assert result.checkpoint.exists()
        with open(result.metrics_log, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
        assert tuple(rows[0]) == METRICS_LOG_HEADER
        assert [r[:2] for r in rows[1:]] == [["1", "val"], ["2", "val"]]
        assert len(result.step_losses) == 4
        assert 1 <= result.best_epoch <= 2

    def test_same_seed_is_bit_identical(self, make_run_config, tmp_path):
        """Two runs with one seed give identical losses, metrics and checkpoints"""
        config = make_run_config(output_dir=str(tmp_path / "same"), jitter=True)
        a = train(config)
        first_checkpoint = a.checkpoint.read_bytes()
        b = train(config)
        assert a.step_losses == b.step_losses
        assert a.history == b.history
        assert b.checkpoint.read_bytes() == first_checkpoint

    def test_fused_run(self, make_run_config):
        """A post-pyramid fused configuration trains"""
        result = train(make_run_config(fusion="post/L40/concat"))
        assert all(np.isfinite(result.step_losses))

    def test_overfit_single_tile(self, make_run_config, one_tile_manifest):
        """Loss on one tile drops over ten steps at lr 1e-3"""
        result = train(make_run_config(manifest=str(one_tile_manifest), epochs=10, per_device_batch=1))
        assert len(result.step_losses) == 10
        assert result.step_losses[-1] < result.step_losses[0]

    def test_class_count_mismatch(self, make_run_config):
        """The config and manifest must agree on the class count"""
        with pytest.raises(DatasetError):
            train(make_run_config(n_classes=4))

    def test_pre_add_rejected_before_training(self, make_run_config, tmp_path):
        """An invalid fusion never reaches the training loop"""
        with pytest.raises(ConfigError):
            make_run_config(fusion="pre/L10/add")
        assert not (tmp_path / "run").exists()

    def test_divergence_reports_step_and_batch(self, run_config, monkeypatch):
        """A non-finite loss aborts with the step, lr and tile ids"""

        def diverge(model, optimizer, batch):
            raise NonFiniteError("cross_entropy")

        monkeypatch.setattr(train_module, "train_step", diverge)
        with pytest.raises(TrainingDivergedError) as info:
            train(run_config)
        assert info.value.step == 0
        assert info.value.lr == pytest.approx(run_config.learning_rate)
        assert len(info.value.batch) == 2
        assert all(tile.startswith("site") for tile in info.value.batch)


@pytest.mark.integration
class TestEvaluate:
    """Test checkpoint evaluation"""

    def test_repeatable_and_matches_saved_model(self, run_config):
        """Evaluation is repeatable and agrees with the in-memory model"""
        result = train(run_config)
        first = evaluate(result.checkpoint, split="val")
        second = evaluate(result.checkpoint, split="val")
        assert first == second
        assert first[0].f1 == result.best_val.f1

    def test_class_mismatch(self, run_config, dataset_dir):
        """A dataset declaring a different class count is rejected"""
        result = train(run_config)
        text = (dataset_dir / "manifest.txt").read_text()
        other = dataset_dir / "four.txt"
        other.write_text(text.replace("# n_classes=3", "# n_classes=4"))
        with pytest.raises(DatasetError):
            evaluate(result.checkpoint, manifest=other)

    def test_empty_split(self, run_config, one_tile_manifest):
        """An empty split is an error, not zero metrics"""
        result = train(run_config)
        with pytest.raises(DatasetError):
            evaluate(result.checkpoint, split="test", manifest=one_tile_manifest)
