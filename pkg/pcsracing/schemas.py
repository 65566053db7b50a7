# pcsracing/schemas.py
#
# Pydantic records that cross module, process or file boundaries: policy
# parameters, PCS coordinates and actions, game outcomes, race results and
# experiment reports.

from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .enums import AgentKind, PcsAxis, ActionSign, StartSource, Winner

# --- Policy parameterization ---
PARAM_NAMES = ["gamma_v", "w_mc", "w_al", "w_hys", "w_do", "w_co", "w_v1", "w_v2"]
COST_NAMES = ["mc", "al", "hys", "do", "co", "v1", "v2"]
PARAM_LOWER = np.array([0.6] + [1.0] * 7)
PARAM_UPPER = np.array([1.0] + [10.0] * 7)


class PolicyParams(BaseModel):
    """Motion-planner parameterization: global velocity scale plus seven cost weights."""
    model_config = {'frozen': True}

    gamma_v: float = Field(1.0, ge=0.6, le=1.0, description="Global velocity scale")
    w_mc: float = Field(1.0, ge=1.0, le=10.0, description="Maximum curvature weight")
    w_al: float = Field(1.0, ge=1.0, le=10.0, description="Arc length weight")
    w_hys: float = Field(1.0, ge=1.0, le=10.0, description="Hysteresis weight")
    w_do: float = Field(1.0, ge=1.0, le=10.0, description="Raceline deviation weight")
    w_co: float = Field(1.0, ge=1.0, le=10.0, description="Opponent collision weight")
    w_v1: float = Field(1.0, ge=1.0, le=10.0, description="Speed reward weight")
    w_v2: float = Field(1.0, ge=1.0, le=10.0, description="Speed-curvature penalty weight")

    @property
    def weights(self) -> np.ndarray:
        return np.array([self.w_mc, self.w_al, self.w_hys, self.w_do, self.w_co, self.w_v1, self.w_v2])

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in PARAM_NAMES])

    @classmethod
    def from_vector(cls, vector: Sequence[float]) -> "PolicyParams":
        values = np.clip(np.asarray(vector, dtype=float), PARAM_LOWER, PARAM_UPPER)
        if values.shape != (len(PARAM_NAMES),):
            raise ValueError(f"Expected {len(PARAM_NAMES)} parameters, got shape {values.shape}")
        return cls(**{name: float(v) for name, v in zip(PARAM_NAMES, values)})


# --- Policy Characteristic Space ---
class PcsPoint(BaseModel):
    model_config = {'frozen': True}

    agg: float = Field(..., description="Aggressiveness coordinate")
    res: float = Field(..., description="Restraint coordinate")

    @model_validator(mode="after")
    def _finite(self):
        if not (np.isfinite(self.agg) and np.isfinite(self.res)):
            raise ValueError(f"PCS coordinates must be finite, got ({self.agg}, {self.res})")
        return self

    def as_array(self) -> np.ndarray:
        return np.array([self.agg, self.res])

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "PcsPoint":
        return cls(agg=float(values[0]), res=float(values[1]))


AXES = [PcsAxis.AGG, PcsAxis.RES]


class PcsAction(BaseModel):
    model_config = {'frozen': True}

    axis: PcsAxis
    sign: ActionSign
    eps: float = Field(0.1, gt=0)

    @property
    def index(self) -> int:
        return 2 * AXES.index(self.axis) + (0 if self.sign == ActionSign.PLUS else 1)

    @property
    def label(self) -> str:
        return f"{self.axis.value}{self.sign.value}"

    def direction(self) -> np.ndarray:
        vec = np.zeros(len(AXES))
        vec[AXES.index(self.axis)] = 1.0 if self.sign == ActionSign.PLUS else -1.0
        return vec

    @classmethod
    def from_index(cls, index: int, eps: float) -> "PcsAction":
        if not 0 <= index < 2 * len(AXES):
            raise ValueError(f"Action index {index} outside 0..{2 * len(AXES) - 1}")
        sign = ActionSign.PLUS if index % 2 == 0 else ActionSign.MINUS
        return cls(axis=AXES[index // 2], sign=sign, eps=eps)


def all_actions(eps: float) -> List[PcsAction]:
    """The 2|G| admissible actions, ordered agg+, agg-, res+, res-."""
    return [PcsAction.from_index(i, eps) for i in range(2 * len(AXES))]


ACTION_LABELS = [a.label for a in all_actions(1.0)]


class PolicyEntry(BaseModel):
    params: PolicyParams
    point: PcsPoint


# --- Game records ---
class GameHistory(BaseModel):
    """One agent's view of the game before its next decision."""
    ego_pcs: List[PcsPoint] = Field(default_factory=list, description="Own PCS point per past step")
    opp_pcs: List[PcsPoint] = Field(default_factory=list, description="Observed opponent PCS point per past step")
    ego_actions: List[int] = Field(default_factory=list, description="Own past action indices")

    @property
    def tau(self) -> int:
        return len(self.ego_pcs) + 1

    def extended(self, ego_point: PcsPoint, opp_point: PcsPoint, action: Optional[int] = None) -> "GameHistory":
        actions = self.ego_actions + ([action] if action is not None else [])
        return GameHistory(ego_pcs=self.ego_pcs + [ego_point], opp_pcs=self.opp_pcs + [opp_point], ego_actions=actions)


class TerminalOutcome(BaseModel):
    utility_ego: float
    utility_opp: float
    collision: bool = False
    final_s_ego: float = 0.0
    final_s_opp: float = 0.0

    @model_validator(mode="after")
    def _zero_sum(self):
        if self.utility_ego + self.utility_opp != 0.0:
            raise ValueError("Terminal utilities must sum to zero")
        if self.collision and self.utility_ego != 0.0:
            raise ValueError("Collision terminals carry zero utility")
        return self


# --- Race harness records ---
class AgentSpec(BaseModel):
    kind: AgentKind
    start_source: StartSource = StartSource.RANDOM_FROM_PARETO
    params: Optional[PolicyParams] = None
    model_path: Optional[str] = None
    seed: int = 0

    @model_validator(mode="after")
    def _check(self):
        if self.kind == AgentKind.GT and not self.model_path:
            raise ValueError("GT agents require a regret model path")
        if self.start_source == StartSource.EXPLICIT and self.params is None:
            raise ValueError("Explicit start source requires params")
        return self


class ActionLogRow(BaseModel):
    step: int
    opp_agg: float
    opp_res: float
    regrets: List[float] = Field(..., description="Clipped regret estimate per action, ordered agg+, agg-, res+, res-")
    action: int
    new_agg: float
    new_res: float
    default_used: bool = False


class RaceResult(BaseModel):
    winner: Winner
    margin: float = Field(..., ge=0)
    collision: bool = False
    valid: bool = True
    utility_ego: float = 0.0
    final_s_ego: float = 0.0
    final_s_opp: float = 0.0
    ego_kind: Optional[AgentKind] = None
    opp_kind: Optional[AgentKind] = None
    seed: int = 0
    side: int = 0
    action_log: List[ActionLogRow] = Field(default_factory=list)

    @model_validator(mode="after")
    def _draw_margin(self):
        if self.winner == Winner.DRAW and self.margin != 0.0:
            raise ValueError("A draw has zero margin")
        return self


class VariantWinRate(BaseModel):
    variant: int
    wins: float
    games: int
    draws: int

    @property
    def win_rate(self) -> float:
        return self.wins / self.games if self.games else 0.0


class ExperimentReport(BaseModel):
    ego_kind: AgentKind
    opp_kind: AgentKind
    variants: List[VariantWinRate]
    win_rate_mean: float = Field(..., ge=0, le=1)
    win_rate_std: float = Field(..., ge=0)
    games_planned: int
    games_played: int
    games_excluded: int
    draws: int

    def win_rates(self) -> np.ndarray:
        return np.array([v.win_rate for v in self.variants])


class TTestResult(BaseModel):
    t: Optional[float] = Field(None, description="None when the differences have zero variance")
    p: Optional[float] = Field(None, description="Two-sided p-value; None for the zero-variance sentinel")
    delta_mu: float
    n: int
    zero_variance: bool = False


class ComparisonRow(BaseModel):
    opponent: AgentKind
    baseline_mean: float
    baseline_std: float
    treatment_mean: float
    treatment_std: float
    delta_mu: float
    p: Optional[float]
    draws_baseline: int
    draws_treatment: int
