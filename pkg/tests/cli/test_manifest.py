"""Tests for experiment manifest loading and validation."""

import json
from pathlib import Path
from typing import Any, Dict

import pytest

from cli.__main__ import main
from cli.manifest import load_manifest, parse_manifest
from engine import ConfigParseError, ValidationError
from models import HeadKind


MANIFEST_DIR = Path(__file__).parents[2] / "configs" / "manifests"


def inline_manifest(**overrides: Any) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        "teacher_spec": "t2_micro",
        "student_spec": "t1_nano",
        "task": {"generator": "classification", "params": {"num_classes": 2, "length": 8}},
        "distiller": "basic",
    }
    data.update(overrides)
    return data


def problems(data: Dict[str, Any], base: Path) -> str:
    with pytest.raises(ValidationError) as info:
        parse_manifest(data, base)
    return "; ".join(info.value.errors)


@pytest.mark.unit
class TestBundledManifests:
    """Test the shipped manifests resolve."""

    @pytest.mark.parametrize("path", sorted(MANIFEST_DIR.glob("*.json")), ids=lambda p: p.stem)
    def test_loads(self, path: Path) -> None:
        """Test every bundled manifest validates."""
        manifest = load_manifest(path)
        assert manifest.tasks
        assert manifest.optimizer.batch_size >= 1

    def test_general_resolves_files(self) -> None:
        """Test spec and config paths resolve relative to the manifest."""
        manifest = load_manifest(MANIFEST_DIR / "general.json")
        assert manifest.distiller == "general"
        assert manifest.teacher_spec.num_layers == 4
        assert manifest.student_spec.num_layers == 1
        assert manifest.distillation.temperature == 8
        assert len(manifest.distillation.intermediate_matches) == 2

    def test_multi_task_heads(self) -> None:
        """Test the student gets one head per task."""
        manifest = load_manifest(MANIFEST_DIR / "multi_task.json")
        heads = {h.name: h.kind for h in manifest.student_spec.heads}
        assert heads == {"topic": HeadKind.CLASSIFICATION, "tags": HeadKind.TAGGING}
        assert [h.name for h in manifest.teacher_spec_for(manifest.tasks[1]).heads] == ["main"]


@pytest.mark.unit
class TestParseManifest:
    """Test cross-validation of inline manifests."""

    def test_defaults(self, tmp_path: Path) -> None:
        """Test missing sections fall back to defaults."""
        manifest = parse_manifest(inline_manifest(distiller="general"), tmp_path)
        assert manifest.task.head_id == "main"
        assert manifest.num_teachers == 1
        assert manifest.augmentation is None
        assert manifest.training.seed == 42

    def test_basic_trainer_needs_no_teacher(self, tmp_path: Path) -> None:
        """Test basic_trainer uses the student spec in place of a teacher."""
        data = inline_manifest(distiller="basic_trainer")
        del data["teacher_spec"]
        manifest = parse_manifest(data, tmp_path)
        assert manifest.teacher_spec.hidden_size == manifest.student_spec.hidden_size

    def test_unknown_distiller(self, tmp_path: Path) -> None:
        """Test unknown distillers list the choices."""
        assert "unknown distiller 'fancy'" in problems(inline_manifest(distiller="fancy"), tmp_path)

    def test_unknown_key_suggests(self, tmp_path: Path) -> None:
        """Test misspelled keys get a suggestion."""
        assert "did you mean 'distiller'" in problems(inline_manifest(distiler="basic"), tmp_path)

    def test_missing_student(self, tmp_path: Path) -> None:
        """Test a student spec is required."""
        data = inline_manifest()
        del data["student_spec"]
        assert "manifest.student_spec: required" in problems(data, tmp_path)

    def test_missing_spec_file(self, tmp_path: Path) -> None:
        """Test referenced spec files must exist."""
        assert "not found" in problems(inline_manifest(teacher_spec="nowhere.json"), tmp_path)

    def test_missing_generator_params(self, tmp_path: Path) -> None:
        """Test the generator's required parameters are checked."""
        data = inline_manifest(task={"generator": "tagging", "params": {"length": 8}})
        assert "needs ['num_tags']" in problems(data, tmp_path)

    def test_vocab_mismatch(self, tmp_path: Path) -> None:
        """Test the task vocabulary must match the specs."""
        data = inline_manifest(
            task={"generator": "classification", "params": {"num_classes": 2, "length": 8, "vocab_size": 100}}
        )
        assert "vocab_size 100 differs" in problems(data, tmp_path)

    def test_length_exceeds_positions(self, tmp_path: Path) -> None:
        """Test examples must fit the position table."""
        data = inline_manifest(task={"generator": "classification", "params": {"num_classes": 2, "length": 40}})
        assert "length 40 exceeds" in problems(data, tmp_path)

    def test_multi_task_needs_two_tasks(self, tmp_path: Path) -> None:
        """Test multi_task refuses a single task."""
        data = inline_manifest(distiller="multi_task", tasks=[inline_manifest()["task"]])
        del data["task"]
        assert "at least 2 tasks" in problems(data, tmp_path)

    def test_multi_task_duplicate_heads(self, tmp_path: Path) -> None:
        """Test head ids must be unique."""
        task = {**inline_manifest()["task"], "head_id": "a"}
        data = inline_manifest(distiller="multi_task", tasks=[task, task])
        del data["task"]
        assert "head_id values must be unique" in problems(data, tmp_path)

    def test_task_list_only_for_multi_task(self, tmp_path: Path) -> None:
        """Test single-task distillers refuse a task list."""
        data = inline_manifest(tasks=[inline_manifest()["task"]] * 2)
        assert "only the multi_task distiller" in problems(data, tmp_path)

    def test_num_teachers(self, tmp_path: Path) -> None:
        """Test only multi_teacher takes more than one teacher."""
        assert "only the multi_teacher distiller" in problems(inline_manifest(num_teachers=3), tmp_path)

    def test_teacher_weights_missing(self, tmp_path: Path) -> None:
        """Test teacher weight files must exist."""
        assert "'teacher.kdlw' not found" in problems(inline_manifest(teacher_weights="teacher.kdlw"), tmp_path)

    def test_teacher_weights_not_for_multi_teacher(self, tmp_path: Path) -> None:
        """Test multi_teacher always trains its teachers."""
        (tmp_path / "teacher.kdlw").write_bytes(b"")
        data = inline_manifest(distiller="multi_teacher", num_teachers=2, teacher_weights="teacher.kdlw")
        assert "not supported by the multi_teacher distiller" in problems(data, tmp_path)

    def test_matches_not_for_multi_teacher(self, tmp_path: Path) -> None:
        """Test multi_teacher refuses intermediate matches."""
        match = {"layer_T": 1, "layer_S": 1, "feature": "attention", "loss": "attention_mse", "weight": 1}
        data = inline_manifest(distiller="multi_teacher", distillation={"intermediate_matches": [match]})
        assert "intermediate_matches: not supported" in problems(data, tmp_path)

    def test_width_mismatch_needs_proj(self, tmp_path: Path) -> None:
        """Test the general distiller cross-validates matches against the specs."""
        match = {"layer_T": 2, "layer_S": 1, "feature": "hidden", "loss": "hidden_mse", "weight": 1}
        data = inline_manifest(distiller="general", distillation={"intermediate_matches": [match]})
        assert "needs proj" in problems(data, tmp_path)

    def test_collects_every_problem(self, tmp_path: Path) -> None:
        """Test independent problems are reported together."""
        data = inline_manifest(num_teachers=2, optimizer={"batch_size": 0}, distillation={"temperature": -1})
        with pytest.raises(ValidationError) as info:
            parse_manifest(data, tmp_path)
        assert len(info.value.errors) >= 3

    def test_to_dict_is_json(self, tmp_path: Path) -> None:
        """Test the resolved config serializes."""
        manifest = parse_manifest(inline_manifest(augmentation={"n": 10, "mix_ratio": 0.5}), tmp_path)
        resolved = json.loads(json.dumps(manifest.to_dict()))
        assert resolved["augmentation"] == {"n": 10, "mix_ratio": 0.5}
        assert "log_dir" not in resolved["training"]


@pytest.mark.unit
class TestLoadManifest:
    """Test reading manifest files and the exit codes of run."""

    def test_malformed_json(self, tmp_path: Path) -> None:
        """Test malformed JSON raises ConfigParseError."""
        path = tmp_path / "m.json"
        path.write_text('{\n  "distiller": "basic",\n  oops\n}')
        with pytest.raises(ConfigParseError):
            load_manifest(path)

    def test_unknown_loss_exits_2(self, tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
        """Test an unknown loss fails before training and lists the presets."""
        match = {"layer_T": 2, "layer_S": 1, "feature": "hidden", "loss": "hiden_mse", "weight": 1,
                 "proj": ["linear", 16, 24]}
        path = tmp_path / "m.json"
        data = inline_manifest(distiller="general", distillation={"intermediate_matches": [match]})
        path.write_text(json.dumps(data))
        out = tmp_path / "out"

        assert main(["run", str(path), "--out", str(out)]) == 2

        err = capsys.readouterr().err
        assert "Configuration invalid" in err
        assert "'hiden_mse'" in err
        assert "hidden_mse" in err and "nst" in err
        assert not out.exists()

    def test_missing_manifest_exits_2(self, tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
        """Test a missing manifest is a configuration error."""
        assert main(["run", str(tmp_path / "none.json"), "--out", str(tmp_path / "out")]) == 2
        assert "not found" in capsys.readouterr().err
