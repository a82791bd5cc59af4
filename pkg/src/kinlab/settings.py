from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from platformdirs import user_data_dir

from kinlab.logs import Log, LogLevel, LogSource

# Where reports go when neither the scenario nor the command line names a
# directory.
_DEFAULT_OUTPUT_DIR = os.getenv("KINLAB_OUTPUT_DIR") or user_data_dir(
    "kinlab", "kinlab"
)

# Number of worker threads used for ensembles and pairwise sweeps.
MAX_WORKERS = int(os.getenv("KINLAB_MAX_WORKERS", 4))


@dataclass(frozen=True)
class LabSettings:
    output_dir: Path = Path(_DEFAULT_OUTPUT_DIR)
    samples: int = 100_000
    seed: int = 0
    max_workers: int = MAX_WORKERS
    log_hook: Callable[[Log], None] = print

    def log(self, log: Log) -> None:
        self.log_hook(log)

    def emit(
        self,
        message: str,
        *,
        source: LogSource,
        level: LogLevel = LogLevel.DEBUG,
        run_id: Optional[str] = None,
    ) -> None:
        """Build a structured record and pass it to the log hook."""
        self.log(Log(message, source=source, level=level, run_id=run_id))

    def report_dir_for(self, name: str) -> Path:
        """Return (and create) the directory in which the reports of the
        scenario called `name` are written."""
        path = self.output_dir / name
        path.mkdir(exist_ok=True, parents=True)
        return path


DEFAULT_SETTINGS = LabSettings()
