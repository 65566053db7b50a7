# pcsracing/plot_data.py
#
# CSV exports behind the figures: the policy sets scattered in PCS, the PCS path of
# both agents through a race, and the per-generation synthesis progress.

import logging
from typing import List

from .schemas import ACTION_LABELS, RaceResult
from .synthesis.subsets import PolicySets
from .utils import read_rows, write_rows

logger = logging.getLogger(__name__)

SCATTER_COLUMNS = ["set", "index", "agg", "res", "raw_agg", "raw_res"]
PCS_PATH_COLUMNS = ["step", "agent", "agg", "res", "action"]
PROGRESS_PLOT_COLUMNS = ["generation", "best_agg", "best_res", "hypervolume", "crash_rate", "overtake_rate"]


def export_collection_scatter(sets: PolicySets, path: str) -> int:
    rows: List[list] = []
    for name in ("all", "pareto", "near_optimal", "dpp_first", "dpp_second"):
        collection = getattr(sets, name)
        for i, (point, raw) in enumerate(zip(collection.points, collection.raw_points)):
            rows.append([name, i, point[0], point[1], raw[0], raw[1]])
    count = write_rows(path, SCATTER_COLUMNS, rows)
    logger.info(f"Wrote {count} scatter points to {path}")
    return count


def export_race_pcs_path(result: RaceResult, path: str) -> int:
    """Ego position after each decision and the opponent position it observed, one pair per step."""
    rows: List[list] = []
    for row in result.action_log:
        rows.append([row.step, "opp", row.opp_agg, row.opp_res, ""])
        rows.append([row.step, "ego", row.new_agg, row.new_res, ACTION_LABELS[row.action]])
    if not rows:
        logger.warning(f"Race has no decisions logged; {path} holds only the header")
    return write_rows(path, PCS_PATH_COLUMNS, rows)


def export_progress(progress_csv: str, path: str) -> int:
    rows = read_rows(progress_csv)
    return write_rows(path, PROGRESS_PLOT_COLUMNS, [[row[c] for c in PROGRESS_PLOT_COLUMNS] for row in rows])
