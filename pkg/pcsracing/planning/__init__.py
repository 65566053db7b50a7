from .clothoid import ClothoidPath, solve_clothoid, solve_clothoids
from .costs import CandidateTrajectory, CostContext, evaluate_costs, score_candidates
from .lattice import LatticeGoalSet, sample_goals
from .planner import LatticePlanner, RacelineFollower, select_trajectory
from .pure_pursuit import pure_pursuit

__all__ = [
    "CandidateTrajectory", "ClothoidPath", "CostContext", "LatticeGoalSet", "LatticePlanner",
    "RacelineFollower", "evaluate_costs", "pure_pursuit", "sample_goals", "score_candidates",
    "select_trajectory", "solve_clothoid", "solve_clothoids",
]
