"""
End-to-end experiment runs.

A run generates the task data, trains or loads the teacher(s), distills
the student with the manifest's distiller while evaluating every
checkpoint on the dev split, and writes into the output directory:

    report.json          checkpoint and final metrics, resolved config, loss summary
    train.log            the student's per-step loss log
    checkpoints/gs{N}    student weights at each checkpoint
    teacher*/            teacher training logs, checkpoints and final weights
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from cli.manifest import ExperimentManifest, TaskSettings
from distillation import (
    LOSS_LOG_NAME,
    Adam,
    BasicDistiller,
    BasicTrainer,
    GeneralDistiller,
    LinearWarmupSchedule,
    MultiTaskDistiller,
    MultiTeacherDistiller,
    TaskSpec,
    TrainingAuditLogger,
    TrainingConfig,
    default_adaptor,
    loss_summary,
    read_loss_log,
)
from distillation.trainer import BaseTrainer
from models import Model, build_model, load_weights, save_weights
from tasks import DataLoader, Dataset, augment_dataset, evaluate, generate, generate_splits


logger = logging.getLogger(__name__)

REPORT_NAME = "report.json"
TEACHER_WEIGHTS_NAME = "teacher.kdlw"
AUXILIARY_SPLIT = 2


@dataclass
class TaskData:
    """Train and dev sets of one task, plus the set the student trains on."""

    settings: TaskSettings
    train: Dataset
    dev: Dataset
    student_train: Dataset


@dataclass
class CheckpointEvaluator:
    """
    Callback scoring the student on every dev set at each checkpoint.

    Attributes:
        tasks: Tasks to evaluate, each on its own head
        batch_size: Evaluation batch size
        records: {"step", "metrics"} per checkpoint, in order
    """

    tasks: List[TaskData]
    batch_size: int = 64
    records: List[Dict[str, Any]] = field(default_factory=list)

    def __call__(self, model: Model, global_step: int) -> None:
        metrics = score(model, self.tasks, self.batch_size, heads=True)
        logger.info(f"Step {global_step}: {metrics}")
        self.records.append({"step": global_step, "metrics": metrics})


def score(model: Model, tasks: List[TaskData], batch_size: int, heads: bool) -> Dict[str, Dict[str, float]]:
    """Dev metrics keyed by head_id; `heads=False` uses the model's default head."""
    return {
        t.settings.head_id: evaluate(model, t.dev, batch_size, head=t.settings.head_id if heads else None)
        for t in tasks
    }


def build_task_data(manifest: ExperimentManifest, seed: int) -> List[TaskData]:
    """Generate every task's splits and mix in auxiliary examples if configured."""
    vocab_size = manifest.student_spec.vocab_size
    data = []
    for task in manifest.tasks:
        params = task.generator_params(vocab_size)
        splits = generate_splits(task.generator, seed, task.n_train, task.n_dev, **params)
        student_train = splits["train"]
        if manifest.augmentation is not None:
            auxiliary = generate(
                task.generator, seed, manifest.augmentation.n, split=AUXILIARY_SPLIT, **params
            ).without_labels()
            student_train = augment_dataset(splits["train"], auxiliary, manifest.augmentation.mix_ratio, seed)
            logger.info(
                f"Task {task.head_id}: {len(splits['train'])} labeled + "
                f"{len(student_train) - len(splits['train'])} auxiliary examples"
            )
        data.append(TaskData(task, splits["train"], splits["dev"], student_train))
    return data


def train_teacher(
    manifest: ExperimentManifest,
    task: TaskData,
    directory: Path,
    seed: int,
    audit: TrainingAuditLogger,
    show_progress: bool = False,
) -> Model:
    """
    Train one teacher on a task's labeled train set with BasicTrainer.

    Only the final epoch is checkpointed; the final weights are also written
    to `directory/teacher.kdlw` for reuse as `teacher_weights`.
    """
    settings = manifest.optimizer
    spec = manifest.teacher_spec_for(task.settings)
    teacher = build_model(spec, seed=seed)
    config = TrainingConfig(
        log_dir=str(directory),
        output_dir=str(directory / "checkpoints"),
        ckpt_frequency=1,
        ckpt_epoch_frequency=settings.teacher_epochs,
        max_grad_norm=manifest.training.max_grad_norm,
        seed=seed,
    )
    loader = DataLoader(task.train, settings.batch_size, shuffle=True, seed=seed)
    optimizer = Adam(teacher.trainable_parameters(), learning_rate=settings.teacher_learning_rate)
    logger.info(f"Training teacher {directory.name} ({teacher.num_parameters()} parameters)")
    BasicTrainer(config, teacher, default_adaptor, audit=audit, show_progress=show_progress).train(
        optimizer, loader, settings.teacher_epochs
    )
    save_weights(teacher, directory / TEACHER_WEIGHTS_NAME)
    return teacher


def _teacher_dirs(manifest: ExperimentManifest, out_dir: Path) -> List[Path]:
    if manifest.distiller == "multi_teacher":
        return [out_dir / f"teacher{k}" for k in range(manifest.num_teachers)]
    if manifest.distiller == "multi_task":
        return [out_dir / f"teacher_{t.head_id}" for t in manifest.tasks]
    return [out_dir / "teacher"]


def prepare_teachers(
    manifest: ExperimentManifest,
    tasks: List[TaskData],
    out_dir: Path,
    seed: int,
    audit: TrainingAuditLogger,
    show_progress: bool = False,
) -> List[Model]:
    """
    Load or train every teacher the distiller needs.

    Teacher k is initialized and shuffled with seed + k + 1; multi-task runs
    train teacher k on task k.
    """
    if manifest.distiller == "basic_trainer":
        return []
    if manifest.teacher_weights is not None:
        logger.info(f"Loading teacher weights from {manifest.teacher_weights}")
        return [load_weights(manifest.teacher_spec, manifest.teacher_weights)]
    teachers = []
    for k, directory in enumerate(_teacher_dirs(manifest, out_dir)):
        task = tasks[k] if manifest.distiller == "multi_task" else tasks[0]
        teachers.append(train_teacher(manifest, task, directory, seed + k + 1, audit, show_progress))
    return teachers


def build_distiller(
    manifest: ExperimentManifest,
    training: TrainingConfig,
    teachers: List[Model],
    student: Model,
    tasks: List[TaskData],
    audit: TrainingAuditLogger,
    show_progress: bool = False,
) -> BaseTrainer:
    name = manifest.distiller
    if name == "basic_trainer":
        return BasicTrainer(training, student, default_adaptor, audit=audit, show_progress=show_progress)
    if name == "multi_teacher":
        return MultiTeacherDistiller(
            training, manifest.distillation, teachers, student, default_adaptor, default_adaptor,
            audit=audit, show_progress=show_progress,
        )
    if name == "multi_task":
        specs = [
            TaskSpec(
                head_id=t.settings.head_id,
                teacher=teacher,
                adaptor_T=default_adaptor,
                dataloader=DataLoader(
                    t.student_train, manifest.optimizer.batch_size, shuffle=True, seed=training.seed + k
                ),
            )
            for k, (t, teacher) in enumerate(zip(tasks, teachers))
        ]
        return MultiTaskDistiller(
            training, manifest.distillation, specs, student, audit=audit, show_progress=show_progress
        )
    distiller_class = GeneralDistiller if name == "general" else BasicDistiller
    return distiller_class(
        training, manifest.distillation, teachers[0], student, default_adaptor, default_adaptor,
        audit=audit, show_progress=show_progress,
    )


def run_experiment(
    manifest: ExperimentManifest,
    out_dir: Union[str, Path],
    seed: Optional[int] = None,
    show_progress: bool = False,
) -> Dict[str, Any]:
    """
    Run one experiment and write its outputs.

    Args:
        manifest: A loaded manifest
        out_dir: Output directory, created if missing
        seed: Overrides training.seed; drives data, initialization and shuffling
        show_progress: Show tqdm progress bars

    Returns:
        The report, as written to out_dir/report.json
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = manifest.training.seed if seed is None else seed
    training = replace(
        manifest.training, log_dir=str(out_dir), output_dir=str(out_dir / "checkpoints"), seed=seed
    )
    audit = TrainingAuditLogger()

    tasks = build_task_data(manifest, seed)
    teachers = prepare_teachers(manifest, tasks, out_dir, seed, audit, show_progress)
    teacher_metrics = [score(t, [task], 64, heads=False) for t, task in zip(teachers, _teacher_tasks(manifest, tasks))]
    for k, metrics in enumerate(teacher_metrics):
        logger.info(f"Teacher {k} dev metrics: {metrics}")

    student = build_model(manifest.student_spec, seed=seed)
    distiller = build_distiller(manifest, training, teachers, student, tasks, audit, show_progress)
    settings = manifest.optimizer
    optimizer = Adam(
        student.trainable_parameters(), learning_rate=settings.learning_rate, weight_decay=settings.weight_decay
    )
    loader = DataLoader(tasks[0].student_train, settings.batch_size, shuffle=True, seed=seed)
    total_steps = distiller.steps_per_epoch(loader) * settings.num_epochs
    evaluator = CheckpointEvaluator(tasks)
    distiller.train(
        optimizer,
        loader,
        settings.num_epochs,
        callback=evaluator,
        lr_schedule=LinearWarmupSchedule(total_steps, settings.warmup_proportion),
    )

    config = manifest.to_dict()
    config["training"]["seed"] = seed
    report = {
        "distiller": manifest.distiller,
        "seed": seed,
        "config": config,
        "parameters": _parameter_report(teachers, student, distiller),
        "teachers": teacher_metrics,
        "checkpoints": evaluator.records,
        "final": evaluator.records[-1]["metrics"],
        "loss_summary": loss_summary(read_loss_log(out_dir / LOSS_LOG_NAME)),
    }
    write_report(report, out_dir / REPORT_NAME)
    logger.info(f"Final dev metrics: {report['final']}")
    return report


def _teacher_tasks(manifest: ExperimentManifest, tasks: List[TaskData]) -> List[TaskData]:
    if manifest.distiller == "multi_task":
        return tasks
    return [tasks[0]] * max(manifest.num_teachers, 1)


def _parameter_report(teachers: List[Model], student: Model, distiller: BaseTrainer) -> Dict[str, Any]:
    projections = distiller.num_projection_parameters() if isinstance(distiller, GeneralDistiller) else 0
    report: Dict[str, Any] = {"student": student.num_parameters(), "projections": projections}
    if teachers:
        report["teacher"] = teachers[0].num_parameters()
        report["student_relative_size"] = student.num_parameters() / teachers[0].num_parameters()
    return report


def write_report(report: Dict[str, Any], path: Path) -> Path:
    """Sorted-key JSON, so identical runs write identical bytes."""
    path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path
