# pcsracing/synthesis/evaluation.py
#
# Places a candidate policy in PCS by racing it against a frozen evaluation set of
# opponents and track sections. The evaluation set is drawn once per synthesis run
# and reused for every generation.

import logging
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from ..arena import Arena, StartLine
from ..errors import EvaluationError, PcsRacingError
from ..pcs_core import g_res, progress_gap
from ..schemas import PARAM_LOWER, PARAM_UPPER, PcsPoint, PolicyParams
from ..vehicle_sim import S, RolloutResult

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalPairing:
    """One opponent on one track section; the opponent starts opp_lead meters ahead."""
    start: StartLine
    opponent: PolicyParams


@dataclass(frozen=True)
class PolicyEvaluation:
    point: PcsPoint
    crashes: int
    overtakes: int
    pairings_used: int
    pairings_skipped: int

    @property
    def crash_rate(self) -> float:
        return self.crashes / self.pairings_used if self.pairings_used else 0.0

    @property
    def overtake_rate(self) -> float:
        return self.overtakes / self.pairings_used if self.pairings_used else 0.0


def random_params(rng: np.random.Generator) -> PolicyParams:
    """Uniform draw from the parameter box."""
    return PolicyParams.from_vector(rng.uniform(PARAM_LOWER, PARAM_UPPER))


def eval_pairings(arena: Arena, n: int, rng: np.random.Generator, opponent_lead_max: float = 0.0) -> List[EvalPairing]:
    """Random track sections, sides and opponents with randomized cost weights."""
    if n < 1:
        raise ValueError(f"Need at least one evaluation pairing, got {n}")
    pairings = []
    for start in arena.random_start_lines(n, rng):
        side = int(rng.integers(0, 2))
        lead = float(rng.uniform(0.0, opponent_lead_max)) if opponent_lead_max > 0 else 0.0
        pairings.append(EvalPairing(start=StartLine(start.s0, side, lead), opponent=random_params(rng)))
    logger.info(f"Drew {n} evaluation pairings (max opponent lead {opponent_lead_max} m)")
    return pairings


def _ego_caused_crash(result: RolloutResult) -> bool:
    if result.collision_step is None or not result.collided[0]:
        return False
    if result.env_collided and result.env_collided[0]:
        return True
    ego, opp = result.trajectories
    return bool(ego.states[-1, S] - ego.states[0, S] < opp.states[-1, S] - opp.states[0, S])


def _overtook(result: RolloutResult) -> bool:
    ego, opp = result.trajectories
    return bool(opp.states[0, S] > ego.states[0, S] and ego.states[-1, S] > opp.states[-1, S])


def evaluate_policy(params: PolicyParams, pairings: Sequence[EvalPairing], arena: Arena,
                    exploration_bonus: bool = False) -> PolicyEvaluation:
    """Runs one rollout per pairing and returns the mean aggressiveness and restraint.

    Aggressiveness per pairing is the progress gain over the opponent relative to the
    start offset. A failed pairing is logged and skipped.
    """
    es = arena.settings.es
    t_clamp = arena.settings.pcs.t_clamp
    gaps, restraints = [], []
    crashes = overtakes = skipped = 0
    for k, pairing in enumerate(pairings):
        try:
            states = arena.initial_states(pairing.start, es.start_lateral_offset)
            planners = [arena.lattice_planner(params), arena.lattice_planner(pairing.opponent)]
            result = arena.run(planners, states, es.rollout_duration)
            ego, opp = result.trajectories
            gap = progress_gap(ego, opp, relative=True)
            res = g_res([ego], t_clamp)
        except (PcsRacingError, ValueError) as e:
            skipped += 1
            logger.warning(f"Evaluation pairing {k} skipped: {e}")
            continue
        crashed = _ego_caused_crash(result)
        overtook = _overtook(result)
        crashes += crashed
        overtakes += overtook
        if exploration_bonus:
            if overtook or crashed:
                gap *= es.overtake_agg_factor
            if crashed:
                res += es.crash_res_bonus
        gaps.append(gap)
        restraints.append(res)

    if not gaps:
        raise EvaluationError(f"All {len(pairings)} evaluation pairings failed")
    point = PcsPoint(agg=float(np.mean(gaps)), res=float(np.mean(restraints)))
    logger.debug(f"Evaluated policy: agg={point.agg:.4f} res={point.res:.4f} crashes={crashes} overtakes={overtakes}")
    return PolicyEvaluation(point=point, crashes=crashes, overtakes=overtakes, pairings_used=len(gaps),
                            pairings_skipped=skipped)
