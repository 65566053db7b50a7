from pcsracing.enums import Winner
from pcsracing.plot_data import export_collection_scatter, export_progress, export_race_pcs_path
from pcsracing.schemas import ActionLogRow, RaceResult
from pcsracing.utils import read_rows, write_rows

from .factories import make_collection, make_sets


def test_scatter_lists_every_set(tmp_path):
    sets = make_sets(make_collection(6))
    path = str(tmp_path / "scatter.csv")
    assert export_collection_scatter(sets, path) == 6 + 6 + 6 + 3 + 3
    rows = read_rows(path)
    assert {row["set"] for row in rows} == {"all", "pareto", "near_optimal", "dpp_first", "dpp_second"}


def test_race_path_has_two_rows_per_decision(tmp_path):
    log = [ActionLogRow(step=2, opp_agg=0.1, opp_res=0.2, regrets=[0.0, 0.3, 0.0, 0.0], action=1, new_agg=0.4,
                        new_res=0.5)]
    result = RaceResult(winner=Winner.EGO, margin=1.0, action_log=log)
    path = str(tmp_path / "path.csv")
    assert export_race_pcs_path(result, path) == 2
    rows = read_rows(path)
    assert [row["agent"] for row in rows] == ["opp", "ego"]
    assert rows[1]["action"] == "agg-"


def test_progress_keeps_the_plotted_columns(tmp_path):
    source = str(tmp_path / "progress.csv")
    write_rows(source, ["generation", "best_agg", "best_res", "hypervolume", "crash_rate", "overtake_rate", "failed"],
               [[1, 0.5, -2.0, 0.3, 0.0, 0.5, 0]])
    target = str(tmp_path / "plot.csv")
    assert export_progress(source, target) == 1
    assert "failed" not in read_rows(target)[0]
