"""Audit logging and loss logs for training runs."""

import json
import logging
from pathlib import Path
from types import TracebackType
from typing import Any, Dict, IO, List, Optional, Type, Union

import pandas as pd


logger = logging.getLogger(__name__)

LOSS_LOG_NAME = "train.log"
LOSS_LOG_COLUMNS = ["step", "loss_name", "value"]


class TrainingAuditLogger:
    """
    Logs every training lifecycle event as one structured JSON record.

    Records carry an `event` key and the distiller's class name so runs can
    be reconstructed from the log alone.
    """

    def __init__(self, log_level: int = logging.INFO):
        """
        Initialize audit logger.

        Args:
            log_level: Logging level (default: INFO)
        """
        self.logger = logging.getLogger("distillation.audit")
        self.logger.setLevel(log_level)

    def log_training_started(
        self, distiller: str, total_steps: int, checkpoint_steps: List[int], details: Dict[str, Any]
    ) -> None:
        """
        Log the start of a run.

        Args:
            distiller: Distiller class name
            total_steps: Number of optimization steps
            checkpoint_steps: Steps that will save and call back
            details: Resolved configuration values
        """
        log_data = {
            "event": "TRAINING_STARTED",
            "distiller": distiller,
            "total_steps": total_steps,
            "checkpoint_steps": checkpoint_steps,
            **details,
        }
        self.logger.info(self._format_log_message(log_data))

    def log_checkpoint_saved(self, distiller: str, global_step: int, path: Path) -> None:
        log_data = {
            "event": "CHECKPOINT_SAVED",
            "distiller": distiller,
            "global_step": global_step,
            "path": path,
        }
        self.logger.info(self._format_log_message(log_data))

    def log_callback_invoked(self, distiller: str, global_step: int) -> None:
        log_data = {"event": "CALLBACK_INVOKED", "distiller": distiller, "global_step": global_step}
        self.logger.info(self._format_log_message(log_data))

    def log_epoch_finished(self, distiller: str, epoch: int, global_step: int, mean_loss: float) -> None:
        """
        Log the end of an epoch.

        Args:
            distiller: Distiller class name
            epoch: 1-based epoch number
            global_step: Last step of the epoch
            mean_loss: Mean total loss over the epoch
        """
        log_data = {
            "event": "EPOCH_FINISHED",
            "distiller": distiller,
            "epoch": epoch,
            "global_step": global_step,
            "mean_loss": mean_loss,
        }
        self.logger.info(self._format_log_message(log_data))

    def log_training_finished(self, distiller: str, global_step: int, final_loss: Optional[float]) -> None:
        log_data = {
            "event": "TRAINING_FINISHED",
            "distiller": distiller,
            "global_step": global_step,
            "final_loss": final_loss,
        }
        self.logger.info(self._format_log_message(log_data))

    def log_teacher_integrity(self, distiller: str, teacher: int, unchanged: bool, checksum: str) -> None:
        """
        Log the post-run teacher checksum comparison.

        Args:
            distiller: Distiller class name
            teacher: Teacher position in the distiller's teacher list
            unchanged: Whether the checksum matches the pre-run value
            checksum: SHA-256 of the teacher's parameters after the run
        """
        log_data = {
            "event": "TEACHER_INTEGRITY_CHECKED",
            "distiller": distiller,
            "teacher": teacher,
            "unchanged": unchanged,
            "checksum": checksum,
        }
        if unchanged:
            self.logger.info(self._format_log_message(log_data))
        else:
            self.logger.error(self._format_log_message(log_data))

    def _format_log_message(self, log_data: Dict[str, Any]) -> str:
        """
        Format log data as structured JSON string.

        Args:
            log_data: Dictionary of log data

        Returns:
            JSON formatted log message
        """
        return json.dumps(log_data, default=str)


class LossLog:
    """
    Append-only `step<TAB>loss_name<TAB>value` lines.

    Values are written with repr(float), which round-trips exactly, so two
    identical runs produce byte-identical logs.

    Examples:
        >>> with LossLog(Path("logs") / "train.log") as log:
        ...     log.write(1, "total", 0.6931471805599453)
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._handle: Optional[IO[str]] = None

    def open(self) -> "LossLog":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = self.path.open("w", encoding="utf-8", newline="\n")
        return self

    def write(self, step: int, loss_name: str, value: float) -> None:
        if self._handle is None:
            raise RuntimeError(f"loss log {self.path} is not open")
        self._handle.write(f"{step}\t{loss_name}\t{float(value)!r}\n")

    def flush(self) -> None:
        if self._handle is not None:
            self._handle.flush()

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def __enter__(self) -> "LossLog":
        return self.open()

    def __exit__(
        self,
        exc_type: Optional[Type[BaseException]],
        exc: Optional[BaseException],
        tb: Optional[TracebackType],
    ) -> None:
        self.close()


def read_loss_log(path: Union[str, Path]) -> pd.DataFrame:
    """
    Load a loss log.

    Returns:
        DataFrame with columns step (int), loss_name (str), value (float)
    """
    frame = pd.read_csv(
        path,
        sep="\t",
        header=None,
        names=LOSS_LOG_COLUMNS,
        dtype={"step": "int64", "loss_name": str, "value": "float64"},
        float_precision="round_trip",
    )
    return frame


def loss_series(frame: pd.DataFrame, loss_name: str = "total") -> pd.Series:
    """Values of one loss indexed by step."""
    rows = frame[frame["loss_name"] == loss_name]
    return rows.set_index("step")["value"]


def smoothed_trend(frame: pd.DataFrame, loss_name: str = "total", window: int = 10) -> pd.Series:
    """Rolling mean of one loss, used to judge whether training made progress."""
    series = loss_series(frame, loss_name)
    return series.rolling(window=min(window, max(len(series), 1)), min_periods=1).mean()


def loss_summary(frame: pd.DataFrame, window: int = 10) -> Dict[str, Dict[str, float]]:
    """
    Mean of the first and of the last `window` values, plus the minimum, of
    every logged loss.

    Returns:
        loss_name -> {"first", "last", "min", "steps"}
    """
    summary: Dict[str, Dict[str, float]] = {}
    for name in sorted(frame["loss_name"].unique()):
        trend = smoothed_trend(frame, name, window)
        raw = loss_series(frame, name)
        summary[name] = {
            "first": float(trend.iloc[min(window, len(trend)) - 1]),
            "last": float(trend.iloc[-1]),
            "min": float(raw.min()),
            "steps": int(len(raw)),
        }
    return summary
