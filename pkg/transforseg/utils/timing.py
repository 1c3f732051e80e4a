import logging
import time

logger = logging.getLogger(__name__)


class FindTime:
    """Context manager that measures a block and logs the wall time.

    The measurement stays readable after the block as ``elapsed_ms`` and
    ``elapsed_s``, so callers can put it into reports.
    """

    def __init__(self, label: str, level: int = logging.DEBUG):
        self.label = label
        self.level = level
        self.start_time: float | None = None
        self.elapsed_ms = 0.0

    @property
    def elapsed_s(self) -> float:
        return self.elapsed_ms / 1000.0

    def __enter__(self) -> "FindTime":
        self.start_time = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_value, traceback) -> None:
        end_time = time.perf_counter()
        self.elapsed_ms = (end_time - (self.start_time or end_time)) * 1000
        outcome = "failed after" if exc_type is not None else "took"
        logger.log(self.level, f"{self.label} {outcome} {self.elapsed_ms:.1f} ms")
