# pcsracing/utils/logging_setup.py
#
# Console plus optional file logging for the batch workers and the CLI. The file
# handler never crashes a run; without write access the run logs to stdout only.

import logging
import os
import sys
from typing import Optional


def setup_component_logging(component: str, log_dir: Optional[str] = None, level: int = logging.INFO,
                            logger_name: str = "pcsracing") -> logging.Logger:
    """Installs the handlers on the package logger once and tags every line with the component name."""
    logger = logging.getLogger(logger_name)
    logger.setLevel(level)
    logger.propagate = False

    formatter = logging.Formatter(f'%(asctime)s - %(levelname)s - [{component}] - %(message)s')

    # Handlers are replaced, not stacked, when several commands run in one process.
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    stream_handler = logging.StreamHandler(sys.stdout)
    stream_handler.setFormatter(formatter)
    logger.addHandler(stream_handler)

    if log_dir:
        try:
            os.makedirs(log_dir, exist_ok=True)
            file_handler = logging.FileHandler(os.path.join(log_dir, f"{component.lower()}_logs.txt"))
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)
            logger.debug("File logging is enabled.")
        except PermissionError:
            logger.warning(f"Permission denied to create '{log_dir}'. File logging is disabled for this session.")
        except Exception as e:
            logger.error(f"An unexpected error occurred while setting up file logging: {e}", exc_info=True)
    return logger
