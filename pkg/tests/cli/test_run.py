"""End-to-end runs through the command line."""

import json
import logging
from pathlib import Path
from typing import Any, Dict

import pytest
from pytest_mock import MockerFixture

from cli.__main__ import main
from cli.manifest import load_manifest
from cli.run import REPORT_NAME, TEACHER_WEIGHTS_NAME, run_experiment
from cli.settings import load_settings
from distillation import LOSS_LOG_NAME, compute_checkpoint_steps


def tiny_manifest(**overrides: Any) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        "teacher_spec": "t2_micro",
        "student_spec": "t1_nano",
        "task": {
            "generator": "classification",
            "params": {"num_classes": 2, "length": 8, "min_length": 5},
            "n_train": 64,
            "n_dev": 32,
        },
        "training": {"ckpt_frequency": 2, "seed": 1},
        "distillation": {
            "temperature": 4,
            "intermediate_matches": [
                {"layer_T": 2, "layer_S": 1, "feature": "hidden", "loss": "hidden_mse", "weight": 1,
                 "proj": ["linear", 16, 24]}
            ],
        },
        "distiller": "general",
        "optimizer": {"learning_rate": 0.001, "batch_size": 16, "num_epochs": 2, "teacher_epochs": 1},
    }
    data.update(overrides)
    return data


def write_manifest(path: Path, data: Dict[str, Any]) -> Path:
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


@pytest.mark.integration
class TestRun:
    """Test complete train-then-distill runs on tiny data."""

    def test_outputs(self, tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
        """Test run writes the report, loss log, checkpoints and teacher weights."""
        manifest = write_manifest(tmp_path / "m.json", tiny_manifest())
        out = tmp_path / "out"

        assert main(["run", str(manifest), "--out", str(out)]) == 0

        assert "Final dev metrics" in capsys.readouterr().out
        report = json.loads((out / REPORT_NAME).read_text())
        expected_steps = compute_checkpoint_steps(4, 2, 2)
        assert [c["step"] for c in report["checkpoints"]] == expected_steps
        assert report["final"] == report["checkpoints"][-1]["metrics"]
        assert set(report["final"]) == {"main"}
        assert report["parameters"]["projections"] == 16 * 24 + 24
        assert report["loss_summary"]["total"]["steps"] == 8
        assert {"kd", "intermediate.0.hidden_mse", "total"} <= set(report["loss_summary"])
        assert sorted(p.name for p in (out / "checkpoints").iterdir()) == sorted(f"gs{s}" for s in expected_steps)
        assert (out / "teacher" / TEACHER_WEIGHTS_NAME).is_file()
        assert (out / LOSS_LOG_NAME).is_file()

    def test_identical_runs_identical_bytes(self, tmp_path: Path) -> None:
        """Test two runs with one seed write byte-identical reports and loss logs."""
        manifest = load_manifest(write_manifest(tmp_path / "m.json", tiny_manifest()))
        run_experiment(manifest, tmp_path / "a")
        run_experiment(manifest, tmp_path / "b")
        for name in (REPORT_NAME, LOSS_LOG_NAME):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_override(self, tmp_path: Path) -> None:
        """Test --seed replaces the manifest seed in the report."""
        manifest = write_manifest(tmp_path / "m.json", tiny_manifest())
        assert main(["run", str(manifest), "--out", str(tmp_path / "out"), "--seed", "9"]) == 0
        report = json.loads((tmp_path / "out" / REPORT_NAME).read_text())
        assert report["seed"] == 9
        assert report["config"]["training"]["seed"] == 9

    def test_reuses_teacher_weights(self, tmp_path: Path) -> None:
        """Test a saved teacher is loaded instead of trained."""
        first = load_manifest(write_manifest(tmp_path / "first.json", tiny_manifest()))
        run_experiment(first, tmp_path / "first")
        data = tiny_manifest(teacher_weights="first/teacher/teacher.kdlw", distiller="basic", distillation={})
        second = load_manifest(write_manifest(tmp_path / "second.json", data))

        report = run_experiment(second, tmp_path / "second")

        assert not (tmp_path / "second" / "teacher").exists()
        assert report["teachers"] == json.loads((tmp_path / "first" / REPORT_NAME).read_text())["teachers"]

    def test_does_not_touch_inputs(self, tmp_path: Path) -> None:
        """Test the manifest file is left unchanged."""
        path = write_manifest(tmp_path / "m.json", tiny_manifest(distiller="basic", distillation={}))
        before = path.read_bytes()
        run_experiment(load_manifest(path), tmp_path / "out")
        assert path.read_bytes() == before




@pytest.mark.integration
@pytest.mark.slow
class TestOtherDistillers:
    """Test runs with several teachers, several tasks, and augmentation."""

    def test_multi_teacher(self, tmp_path: Path) -> None:
        """Test each teacher is trained and scored."""
        data = tiny_manifest(distiller="multi_teacher", num_teachers=2, distillation={"temperature": 4})
        report = run_experiment(load_manifest(write_manifest(tmp_path / "m.json", data)), tmp_path / "out")
        assert len(report["teachers"]) == 2
        assert (tmp_path / "out" / "teacher0" / TEACHER_WEIGHTS_NAME).is_file()
        assert (tmp_path / "out" / "teacher1" / TEACHER_WEIGHTS_NAME).is_file()

    def test_multi_task(self, tmp_path: Path) -> None:
        """Test one teacher per task and per-head dev metrics."""
        tasks = [
            {**tiny_manifest()["task"], "head_id": "topic"},
            {
                "head_id": "tags",
                "generator": "tagging",
                "params": {"num_tags": 3, "length": 8},
                "n_train": 32,
                "n_dev": 16,
            },
        ]
        data = tiny_manifest(distiller="multi_task", tasks=tasks, distillation={"temperature": 4})
        del data["task"]
        report = run_experiment(load_manifest(write_manifest(tmp_path / "m.json", data)), tmp_path / "out")
        assert set(report["final"]) == {"topic", "tags"}
        assert set(report["final"]["tags"]) == {"f1"}
        assert (tmp_path / "out" / "teacher_tags" / TEACHER_WEIGHTS_NAME).is_file()

    def test_augmented_span(self, tmp_path: Path) -> None:
        """Test unlabeled auxiliary examples join the student's training set."""
        data = tiny_manifest(
            distiller="basic",
            task={"generator": "span", "params": {"length": 8}, "n_train": 64, "n_dev": 32},
            augmentation={"n": 32, "mix_ratio": 0.5},
            distillation={"temperature": 4, "hard_label_weight": 1},
        )
        report = run_experiment(load_manifest(write_manifest(tmp_path / "m.json", data)), tmp_path / "out")
        assert set(report["final"]["main"]) == {"exact_match", "f1"}
        # 64 labeled + 32 auxiliary examples in batches of 16
        assert report["loss_summary"]["total"]["steps"] == 2 * 6


@pytest.mark.unit
class TestSettings:
    """Test environment settings."""

    def test_defaults(self, monkeypatch: pytest.MonkeyPatch, mocker: MockerFixture) -> None:
        """Test INFO logging and no progress bars by default."""
        monkeypatch.delenv("KDLAB_LOG_LEVEL", raising=False)
        monkeypatch.delenv("KDLAB_PROGRESS", raising=False)
        load_dotenv = mocker.patch("cli.settings.load_dotenv", return_value=False)
        settings = load_settings()
        load_dotenv.assert_called_once()
        assert settings.log_level == logging.INFO
        assert settings.show_progress is False

    def test_environment(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test the KDLAB_ variables are read."""
        monkeypatch.setenv("KDLAB_LOG_LEVEL", "debug")
        monkeypatch.setenv("KDLAB_PROGRESS", "yes")
        settings = load_settings()
        assert settings.log_level == logging.DEBUG
        assert settings.show_progress is True

    def test_unknown_level(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test an unknown level falls back to INFO."""
        monkeypatch.setenv("KDLAB_LOG_LEVEL", "chatty")
        assert load_settings().log_level == logging.INFO
