# pcsracing/config.py
#
# Typed settings for every stage of the pipeline. Each section mirrors one block of
# config/pcs_config.json; any field can be overridden from the environment with the
# PCS_ prefix and "__" as the section delimiter (e.g. PCS_GAME__M=2).

from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .enums import Activation


class TrackSettings(BaseModel):
    grid_file: str = "config/tracks/oval.pgm"
    centerline_file: str = "config/tracks/oval_centerline.csv"
    raceline_file: Optional[str] = None
    resolution: float = Field(0.05, gt=0, description="Meters per grid cell (F1TENTH convention)")
    origin: Tuple[float, float] = Field((0.0, 0.0), description="World coordinates of cell (0, 0)")
    centerline_spacing: Optional[float] = Field(0.1, description="Uniform resampling step in meters; None keeps the file points")
    closure_factor: float = Field(2.0, gt=0, description="Max closing gap as a multiple of the mean segment length")
    footprint_radius: float = Field(0.3, gt=0, description="Vehicle disc footprint radius in meters")
    raceline_speed: float = Field(5.0, gt=0, description="Constant speed of the centerline fallback raceline")


class VehicleParams(BaseModel):
    """Single-track model parameters; defaults are the F1TENTH scaled car."""
    mu: float = Field(1.0489, gt=0)
    C_Sf: float = Field(4.718, gt=0)
    C_Sr: float = Field(5.4562, gt=0)
    lf: float = Field(0.15875, gt=0)
    lr: float = Field(0.17145, gt=0)
    h: float = Field(0.074, gt=0)
    mass: float = Field(3.74, gt=0)
    I: float = Field(0.04712, gt=0)
    s_min: float = -0.4189
    s_max: float = 0.4189
    sv_max: float = Field(3.2, gt=0)
    a_max: float = Field(9.51, gt=0)
    v_max: float = Field(20.0, gt=0)
    v_switch: float = Field(0.5, gt=0, description="Below this speed the kinematic model is used")
    v_accel_switch: float = Field(7.319, gt=0, description="Speed above which acceleration is power limited")

    @property
    def wheelbase(self) -> float:
        return self.lf + self.lr


class SimSettings(BaseModel):
    dt: float = Field(0.01, gt=0)
    replan_period: float = Field(0.1, gt=0)
    lidar_beams: int = Field(108, ge=2)
    lidar_fov: float = Field(4.7, gt=0)
    lidar_max_range: float = Field(10.0, gt=0)


class PlannerSettings(BaseModel):
    n_long: int = Field(8, ge=1)
    n_lat: int = Field(9, ge=1)
    lateral_span: Optional[float] = Field(None, description="None derives local track width minus two footprints")
    lookahead: float = Field(3.0, gt=0)
    lookahead_time: float = Field(1.0, ge=0, description="Lookahead grows to speed times this horizon")
    lookahead_min_ratio: float = Field(0.5, gt=0, le=1)
    velocity_factors: List[float] = Field(default_factory=lambda: [0.8, 0.9, 1.0])
    kappa_max: float = Field(1.2, gt=0)
    v_max: float = Field(8.0, gt=0, description="Speed used to normalise the velocity and collision costs")
    v_min: float = Field(0.5, ge=0, description="Floor of every velocity profile")
    clothoid_samples: int = Field(64, ge=4)
    clothoid_max_iter: int = Field(50, ge=1)
    clothoid_tol: float = Field(1e-3, gt=0)
    hysteresis_points: int = Field(20, ge=2)
    collision_unit_cost: float = Field(1.0, gt=0)
    normalize_costs: bool = True
    freeze_gamma_v: bool = False
    pure_pursuit_lookahead: float = Field(0.8, gt=0)

    @field_validator("clothoid_samples")
    @classmethod
    def _even_samples(cls, value: int) -> int:
        if value % 2:
            raise ValueError("clothoid_samples must be even for Simpson integration")
        return value


class PcsSettings(BaseModel):
    eps: float = Field(0.1, gt=0, description="PCS action step in normalized units")
    t_clamp: float = Field(10.0, gt=0, description="Clamp for infinite time-to-collision in seconds")
    d_near: float = Field(0.3, gt=0)
    n_dpp: int = Field(20, ge=1)


class EsSettings(BaseModel):
    population: int = Field(100, ge=2)
    elite_ratio: float = Field(0.5, gt=0, le=1)
    sigma0: float = Field(0.3, gt=0, description="Initial step size as a fraction of the box span")
    generations: int = Field(50, ge=1)
    n_pairings: int = Field(120, ge=1)
    rollout_duration: float = Field(8.0, gt=0)
    opponent_lead_max: float = Field(2.0, ge=0)
    start_lateral_offset: float = Field(0.4, ge=0)
    exploration_bonus: bool = False
    overtake_agg_factor: float = 1.10
    crash_res_bonus: float = 1.0
    hv_ref_margin: float = Field(0.1, ge=0)
    eigen_floor: float = Field(1e-12, gt=0)


class GameConfig(BaseModel):
    """Extensive-form game settings.

    The first game step only observes the opponent; the remaining m - 1 steps each
    start with a simultaneous PCS action of both agents.
    """
    m: int = Field(4, ge=1, description="Game steps; decisions happen before steps 2..m")
    step_duration: float = Field(8.0, gt=0)
    n_init: int = Field(20, ge=1)
    n_axes: int = Field(2, ge=1)
    collection_passes: int = Field(1, ge=1)
    default_action: int = Field(0, ge=0, description="Action taken when all clipped regrets are zero")
    start_lateral_offset: float = Field(0.4, ge=0)

    @property
    def decision_count(self) -> int:
        return self.m - 1

    @property
    def action_count(self) -> int:
        return 2 * self.n_axes

    @property
    def branch_count(self) -> int:
        return self.action_count ** self.decision_count

    @model_validator(mode="after")
    def _default_action_in_range(self):
        if self.default_action >= self.action_count:
            raise ValueError(f"default_action {self.default_action} outside 0..{self.action_count - 1}")
        return self


class TrainConfig(BaseModel):
    hidden: int = Field(2048, ge=1)
    alpha: float = Field(0.01, gt=0, lt=1, description="Leaky-ReLU negative slope")
    activation: Activation = Activation.LEAKY_RELU
    batch: int = Field(1024, ge=1)
    epochs: int = Field(2000, ge=1)
    lr0: float = Field(0.005, ge=0)
    plateau_patience: int = Field(10, ge=1)
    plateau_factor: float = Field(0.5, gt=0, lt=1)
    plateau_threshold: float = Field(1e-4, ge=0)
    val_fraction: float = Field(0.1, gt=0, lt=1)
    seed: int = 0
    grad_check_h: float = Field(1e-6, gt=0)


class ExperimentSettings(BaseModel):
    n_ego_variants: int = Field(20, ge=1)
    n_opp_variants: int = Field(20, ge=1)
    n_starts: int = Field(5, ge=1)
    both_sides: bool = True
    ego_kinds: List[str] = Field(default_factory=lambda: ["non-gt", "gt"])
    opp_kinds: List[str] = Field(default_factory=lambda: ["non-gt", "random", "external-fixed"])
    external_lookahead: float = Field(1.2, gt=0)
    external_speed_scale: float = Field(0.9, gt=0)
    draw_value: float = Field(0.5, ge=0, le=1)


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="PCS_", env_nested_delimiter="__", extra="ignore")

    track: TrackSettings = Field(default_factory=TrackSettings)
    vehicle: VehicleParams = Field(default_factory=VehicleParams)
    sim: SimSettings = Field(default_factory=SimSettings)
    planner: PlannerSettings = Field(default_factory=PlannerSettings)
    pcs: PcsSettings = Field(default_factory=PcsSettings)
    es: EsSettings = Field(default_factory=EsSettings)
    game: GameConfig = Field(default_factory=GameConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    experiment: ExperimentSettings = Field(default_factory=ExperimentSettings)
    seed: int = 0
    threads: int = Field(1, ge=1)
    out_dir: str = "runs"
