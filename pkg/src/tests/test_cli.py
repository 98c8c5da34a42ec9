"""
Tests for the geoseg command line
"""

import json
from pathlib import Path

import pytest

from geoseg import __version__
from geoseg.cli import EXIT_FAILED, EXIT_INVALID, EXIT_OK, main


def _write_dataset_config(path: Path) -> Path:
    path.write_text(
        "# tiny recipe\n"
        "n_sites = 2\n"
        "train_tiles = 2\n"
        "val_tiles = 1\n"
        "test_tiles = 1\n"
        "img_size = 64\n"
    )
    return path


def _write_run_config(path: Path, manifest: Path, out: Path, **extra: str) -> Path:
    values = {
        "backbone": "tiny",
        "fusion": "none",
        "epochs": "1",
        "per_device_batch": "2",
        "pyramid_channels": "8",
        "d_attn": "4",
        "cross_attention_tokens": "2",
        "jitter": "false",
        "manifest": str(manifest),
        "output_dir": str(out),
    }
    values.update(extra)
    path.write_text("".join(f"{k} = {v}\n" for k, v in values.items()))
    return path


def _tree(root: Path):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestUsage:
    """Test argument handling and exit codes"""

    def test_version(self, capsys):
        """--version prints the package version"""
        assert main(["--version"]) == EXIT_OK
        assert __version__ in capsys.readouterr().out

    def test_unknown_flag(self, capsys):
        """Unknown flags print usage and exit 1"""
        assert main(["train", "--bogus"]) == EXIT_INVALID
        assert "usage:" in capsys.readouterr().err

    def test_missing_command(self, capsys):
        """A subcommand is required"""
        assert main([]) == EXIT_INVALID
        assert "usage:" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path, capsys):
        """Config files with unknown keys are validation errors"""
        config = tmp_path / "bad.cfg"
        config.write_text("n_sites = 2\ncolour = blue\n")
        assert main(["gen-data", "--config", str(config), "--out", str(tmp_path / "d")]) == EXIT_INVALID
        assert "colour" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        """An unreadable config file is a validation error"""
        assert main(["gen-data", "--config", str(tmp_path / "none.cfg")]) == EXIT_INVALID


class TestGenData:
    """Test synthetic dataset generation from the command line"""

    def test_same_seed_identical_directories(self, tmp_path):
        """Two runs with one seed produce byte-identical trees"""
        config = _write_dataset_config(tmp_path / "data.cfg")
        for name in ("a", "b"):
            code = main(["gen-data", "--config", str(config), "--seed", "7", "--out", str(tmp_path / name)])
            assert code == EXIT_OK
        first, second = _tree(tmp_path / "a"), _tree(tmp_path / "b")
        assert first == second
        assert "manifest.txt" in first
        assert sum(name.endswith(".gvt") for name in first) == 8

    def test_different_seed_differs(self, tmp_path):
        """Another seed changes the tiles"""
        config = _write_dataset_config(tmp_path / "data.cfg")
        main(["gen-data", "--config", str(config), "--seed", "1", "--out", str(tmp_path / "a")])
        main(["gen-data", "--config", str(config), "--seed", "2", "--out", str(tmp_path / "b")])
        assert _tree(tmp_path / "a") != _tree(tmp_path / "b")


class TestStats:
    """Test polygon statistics output"""

    def test_report(self, tmp_path, capsys):
        """Per-polygon statistics and the summary are printed as JSON"""
        polygons = tmp_path / "polygons.json"
        polygons.write_text(json.dumps([[[0, 0], [4, 0], [4, 1], [0, 1]], [[0, 0], [1, 0], [1, 1], [0, 1]]]))
        out = tmp_path / "report.json"
        assert main(["stats", str(polygons), "--out", str(out)]) == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["polygons"][0]["length_width_ratio"] == pytest.approx(4.0)
        assert report["summary"]["area"]["max"] == pytest.approx(4.0)
        assert json.loads(out.read_text()) == report

    def test_degenerate_polygon(self, tmp_path, capsys):
        """A degenerate polygon is a runtime failure"""
        polygons = tmp_path / "polygons.json"
        polygons.write_text(json.dumps([[[0, 0], [1, 1], [2, 2]]]))
        assert main(["stats", str(polygons)]) == EXIT_FAILED
        assert "zero area" in capsys.readouterr().err

    def test_not_json(self, tmp_path):
        """Malformed input is a validation error"""
        polygons = tmp_path / "polygons.json"
        polygons.write_text("[[0, 0],")
        assert main(["stats", str(polygons)]) == EXIT_INVALID


class TestIterations:
    """Test the iteration calculator"""

    def test_prints_count(self, capsys):
        """1706 samples, batch 32, one device, 75 epochs"""
        assert main(["iterations", "--samples", "1706", "--batch", "32"]) == EXIT_OK
        assert capsys.readouterr().out.strip() == "4050"

    def test_zero_batch(self):
        """A zero batch is a validation error"""
        assert main(["iterations", "--samples", "10", "--batch", "0"]) == EXIT_INVALID


class TestGradCheck:
    """Test the gradient suite command"""

    def test_selected_cases(self, capsys):
        """Selected cases are reported with their error"""
        assert main(["grad-check", "--case", "relu", "--case", "fusion.concat"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "relu" in out and "fusion.concat" in out
        assert "max relative error" in out

    def test_unknown_case(self):
        """Unknown case names are validation errors"""
        assert main(["grad-check", "--case", "nope"]) == EXIT_INVALID


@pytest.mark.integration
class TestTrainEval:
    """Test train and eval end to end"""

    def test_train_then_eval(self, tmp_path, dataset_dir, capsys):
        """A trained checkpoint evaluates on the test split"""
        config = _write_run_config(tmp_path / "run.cfg", dataset_dir / "manifest.txt", tmp_path / "run")
        assert main(["train", "--config", str(config)]) == EXIT_OK
        checkpoint = tmp_path / "run" / "best.gvck"
        assert checkpoint.exists()
        capsys.readouterr()
        assert main(["eval", "--checkpoint", str(checkpoint)]) == EXIT_OK
        assert capsys.readouterr().out.startswith("test: pixel_accuracy=")

    def test_eval_from_run_config(self, tmp_path, dataset_dir, capsys):
        """--config supplies the checkpoint and manifest of the run"""
        config = _write_run_config(tmp_path / "run.cfg", dataset_dir / "manifest.txt", tmp_path / "run")
        assert main(["train", "--config", str(config)]) == EXIT_OK
        capsys.readouterr()
        assert main(["eval", "--config", str(config), "--split", "val"]) == EXIT_OK
        assert capsys.readouterr().out.startswith("val: pixel_accuracy=")

    def test_pre_add_is_invalid(self, tmp_path, dataset_dir):
        """A post-only strategy placed pre pyramid exits 1"""
        config = _write_run_config(
            tmp_path / "run.cfg", dataset_dir / "manifest.txt", tmp_path / "run", fusion="pre/L10/add"
        )
        assert main(["train", "--config", str(config)]) == EXIT_INVALID
        assert not (tmp_path / "run").exists()

    def test_missing_dataset_fails(self, tmp_path):
        """A missing manifest is a runtime failure"""
        config = _write_run_config(tmp_path / "run.cfg", tmp_path / "nope.txt", tmp_path / "run")
        assert main(["train", "--config", str(config)]) == EXIT_FAILED

    def test_eval_missing_checkpoint(self, tmp_path):
        """A missing checkpoint file is a runtime failure"""
        assert main(["eval", "--checkpoint", str(tmp_path / "none.gvck")]) == EXIT_FAILED

    def test_eval_needs_checkpoint_or_config(self):
        """Without --checkpoint or --config eval exits 1"""
        assert main(["eval"]) == EXIT_INVALID
