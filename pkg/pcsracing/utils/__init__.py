from .csv_io import append_row, read_rows, write_rows
from .logging_setup import setup_component_logging
from .parallel import gather_in_pool, run_tasks, split_failures, worker_context

__all__ = [
    "append_row", "gather_in_pool", "read_rows", "run_tasks", "setup_component_logging", "split_failures",
    "worker_context", "write_rows",
]
