from .evaluation import EvalPairing, PolicyEvaluation, eval_pairings, evaluate_policy, random_params
from .hypervolume import hypervolume_2d, hypervolume_loss, pareto_mask
from .mo_cmaes import (Archive, EsState, GenerationSummary, init_state, load_checkpoint, minimize_single_objective,
                       optimize_objectives, sample_generation, save_checkpoint, tell, update_distribution)
from .subsets import PolicySets, extract_sets, greedy_map_dpp, load_sets, near_optimal_mask, rbf_kernel, write_sets

__all__ = [
    "Archive", "EsState", "EvalPairing", "GenerationSummary", "PolicyEvaluation", "PolicySets", "eval_pairings",
    "evaluate_policy", "extract_sets", "greedy_map_dpp", "hypervolume_2d", "hypervolume_loss", "init_state",
    "load_checkpoint", "minimize_single_objective", "near_optimal_mask", "optimize_objectives", "pareto_mask",
    "random_params", "rbf_kernel", "sample_generation", "save_checkpoint", "tell", "update_distribution",
    "load_sets", "write_sets",
]
