"""Distillation and augmentation benchmarks on the bundled desk-scale manifests.

Each benchmark trains full teachers and students for three seeds; expect
several minutes per class on one core.
"""

from dataclasses import replace
from pathlib import Path
from typing import Dict, List

import numpy as np
import pytest

from cli.manifest import ExperimentManifest, load_manifest
from cli.run import run_experiment

MANIFEST_DIR = Path(__file__).parents[2] / "configs" / "manifests"
SEEDS = (1, 2, 3)


def dev_accuracy(report: Dict) -> float:
    return report["final"]["main"]["accuracy"]


def run_seeds(manifest: ExperimentManifest, root: Path) -> List[Dict]:
    return [run_experiment(manifest, root / f"seed{seed}", seed=seed) for seed in SEEDS]


@pytest.fixture(scope="module")
def classification_runs(tmp_path_factory: pytest.TempPathFactory) -> Dict[str, List[Dict]]:
    """Distilled and hard-label-only students with identical budgets, per seed."""
    root = tmp_path_factory.mktemp("classification")
    return {
        "general": run_seeds(load_manifest(MANIFEST_DIR / "general.json"), root / "general"),
        "hard_label": run_seeds(load_manifest(MANIFEST_DIR / "hard_label.json"), root / "hard_label"),
    }


@pytest.fixture(scope="module")
def augmentation_runs(tmp_path_factory: pytest.TempPathFactory) -> Dict[str, List[Dict]]:
    """Distilled students on the small main set, with and without auxiliary examples."""
    root = tmp_path_factory.mktemp("augmentation")
    manifest = load_manifest(MANIFEST_DIR / "augmented.json")
    return {
        "augmented": run_seeds(manifest, root / "augmented"),
        "plain": run_seeds(replace(manifest, augmentation=None), root / "plain"),
    }


@pytest.mark.integration
@pytest.mark.slow
class TestDistillationBenefit:
    """Test a distilled student against its teacher and a hard-label-only student."""

    def test_budgets_match(self) -> None:
        """Test both students see the same data for the same number of epochs."""
        general = load_manifest(MANIFEST_DIR / "general.json")
        hard_label = load_manifest(MANIFEST_DIR / "hard_label.json")
        assert general.student_spec == hard_label.student_spec
        assert general.task == hard_label.task
        assert general.optimizer.num_epochs == hard_label.optimizer.num_epochs
        assert general.optimizer.batch_size == hard_label.optimizer.batch_size
        assert general.teacher_spec.num_layers == 4
        assert general.teacher_spec.hidden_size == 32
        assert general.student_spec.num_layers == 1
        assert general.student_spec.hidden_size == 16
        assert [m.loss for m in general.distillation.intermediate_matches] == ["hidden_mse", "nst"]

    def test_teacher_accuracy(self, classification_runs: Dict[str, List[Dict]]) -> None:
        """Test every seed's teacher reaches 90% dev accuracy."""
        for report in classification_runs["general"]:
            assert report["teachers"][0]["main"]["accuracy"] >= 0.9

    def test_distilled_beats_hard_label(self, classification_runs: Dict[str, List[Dict]]) -> None:
        """Test the mean distilled accuracy is at least the hard-label-only mean."""
        distilled = np.mean([dev_accuracy(r) for r in classification_runs["general"]])
        hard_label = np.mean([dev_accuracy(r) for r in classification_runs["hard_label"]])
        assert distilled >= hard_label

    def test_distilled_close_to_teacher(self, classification_runs: Dict[str, List[Dict]]) -> None:
        """Test the mean distilled accuracy keeps 95% of the mean teacher accuracy."""
        reports = classification_runs["general"]
        distilled = np.mean([dev_accuracy(r) for r in reports])
        teacher = np.mean([r["teachers"][0]["main"]["accuracy"] for r in reports])
        assert distilled >= 0.95 * teacher


@pytest.mark.integration
@pytest.mark.slow
class TestAugmentationEffect:
    """Test auxiliary unlabeled examples on a small main set."""

    def test_setup(self) -> None:
        """Test the main set has 500 examples and auxiliary examples mix in at ratio 1."""
        manifest = load_manifest(MANIFEST_DIR / "augmented.json")
        assert manifest.task.n_train == 500
        assert manifest.augmentation is not None
        assert manifest.augmentation.mix_ratio == 1.0

    def test_augmentation_does_not_hurt(self, augmentation_runs: Dict[str, List[Dict]]) -> None:
        """Test the mean augmented accuracy is at least the mean without augmentation."""
        augmented = np.mean([dev_accuracy(r) for r in augmentation_runs["augmented"]])
        plain = np.mean([dev_accuracy(r) for r in augmentation_runs["plain"]])
        assert augmented >= plain

    def test_auxiliary_examples_used(self, augmentation_runs: Dict[str, List[Dict]]) -> None:
        """Test the augmented runs take twice the steps of the plain runs."""
        for augmented, plain in zip(augmentation_runs["augmented"], augmentation_runs["plain"]):
            augmented_steps = augmented["loss_summary"]["total"]["steps"]
            plain_steps = plain["loss_summary"]["total"]["steps"]
            assert augmented_steps == 2 * plain_steps
