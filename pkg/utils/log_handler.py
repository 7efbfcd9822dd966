import os
import logging
from contextlib import contextmanager

from config import LOG_DIR

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
RUN_HASH_CHARS = 12


def run_id(command: str, config_digest: str) -> str:
    """Log name for one command on one config: `{command}_{first 12 hex digits of the config hash}`.

    The hash covers the validated config after overrides, so `limit` and `sweep` on the same
    experiment get separate files, and a rerun with an identical config appends to the same one.
    """
    return f"{command}_{config_digest[:RUN_HASH_CHARS]}"


@contextmanager
def run_logger(run_id: str, log_dir: str = LOG_DIR):
    """Context manager that attaches a file handler to the root logger for one command.

    Everything logged by the pipeline, scoring, limits and simulator modules while
    inside this context lands in {log_dir}/{run_id}.log (see `run_id`). The handler is
    opened in append mode, so repeated runs of one config build up a single history.
    Logs stay out of the results directory so data files remain byte-identical across reruns.
    """
    os.makedirs(log_dir, exist_ok=True)
    log_path = os.path.join(log_dir, f"{run_id}.log")

    handler = logging.FileHandler(log_path)
    handler.setLevel(logging.INFO)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))

    root_logger = logging.getLogger()
    root_logger.addHandler(handler)
    try:
        yield log_path
    finally:
        handler.flush()
        handler.close()
        root_logger.removeHandler(handler)
