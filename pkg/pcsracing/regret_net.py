# pcsracing/regret_net.py
#
# Counterfactual regret approximator: a fixed-length encoding of (history, action),
# a one-hidden-layer MLP with a scalar output, Adam training under L1 loss with a
# plateau learning-rate schedule, a finite-difference gradient check and a small
# versioned binary model format.

import logging
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import TrainConfig
from .enums import Activation
from .errors import ModelFormatError, TrainingDivergedError
from .pcs_core import PcsNormalizer
from .schemas import GameHistory, PcsPoint
from .utils import write_rows

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"PCSR"
MODEL_VERSION = 2
_MODEL_HEADER = "<IIId"
TRAIN_LOG_COLUMNS = ["epoch", "train_l1", "val_l1", "lr"]


# --- Feature encoding ---
def feature_length(m: int, action_count: int = 4) -> int:
    """Two PCS coordinates and two masks per agent and past step, past-action and candidate one-hots."""
    slots = m - 1
    return 8 * slots + action_count * slots + action_count


def _encode_points(points: List[PcsPoint], slots: int, normalizer: Optional[PcsNormalizer]) -> Tuple[np.ndarray, np.ndarray]:
    values = np.zeros(2 * slots)
    mask = np.zeros(2 * slots)
    for j, point in enumerate(points):
        raw = point.as_array()
        values[2 * j:2 * j + 2] = normalizer.apply(raw) if normalizer is not None else raw
        mask[2 * j:2 * j + 2] = 1.0
    return values, mask


def encode(history: GameHistory, action: int, m: int, action_count: int = 4,
           normalizer: Optional[PcsNormalizer] = None) -> np.ndarray:
    """Feature vector [ego PCS | opp PCS | ego mask | opp mask | past ego actions | candidate action].

    Histories recorded in a collection frame are encoded as-is; pass the collection's
    normalizer for raw observations.
    """
    slots = m - 1
    if history.tau > m:
        raise ValueError(f"History step {history.tau} exceeds the game length m={m}")
    if len(history.opp_pcs) != len(history.ego_pcs) or len(history.ego_actions) > slots:
        raise ValueError(f"Inconsistent history: {len(history.ego_pcs)} own points, {len(history.opp_pcs)} "
                         f"opponent points, {len(history.ego_actions)} actions")
    if not 0 <= action < action_count:
        raise ValueError(f"Action {action} outside 0..{action_count - 1}")
    ego_vals, ego_mask = _encode_points(history.ego_pcs, slots, normalizer)
    opp_vals, opp_mask = _encode_points(history.opp_pcs, slots, normalizer)
    past = np.zeros(action_count * slots)
    for j, a in enumerate(history.ego_actions):
        past[action_count * j + a] = 1.0
    candidate = np.zeros(action_count)
    candidate[action] = 1.0
    return np.concatenate([ego_vals, opp_vals, ego_mask, opp_mask, past, candidate])


def encode_all_actions(history: GameHistory, m: int, action_count: int = 4,
                       normalizer: Optional[PcsNormalizer] = None) -> np.ndarray:
    """(action_count, F) batch, one row per candidate action."""
    return np.stack([encode(history, a, m, action_count, normalizer) for a in range(action_count)])


# --- Model ---
@dataclass
class MlpModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    alpha: float = 0.01
    activation: Activation = Activation.LEAKY_RELU

    @property
    def feature_len(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    def parameters(self) -> Dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def astype(self, dtype) -> "MlpModel":
        return replace(self, **{k: v.astype(dtype) for k, v in self.parameters().items()})

    def copy(self) -> "MlpModel":
        return replace(self, **{k: v.copy() for k, v in self.parameters().items()})


def init_model(feature_len: int, hidden: int, alpha: float = 0.01, activation: Activation = Activation.LEAKY_RELU,
               seed: int = 0, dtype=np.float32) -> MlpModel:
    rng = np.random.default_rng(seed)
    W1 = rng.normal(0.0, math.sqrt(2.0 / feature_len), size=(hidden, feature_len))
    W2 = rng.normal(0.0, math.sqrt(1.0 / hidden), size=(1, hidden))
    return MlpModel(W1=W1.astype(dtype), b1=np.zeros(hidden, dtype=dtype), W2=W2.astype(dtype),
                    b2=np.zeros(1, dtype=dtype), alpha=alpha, activation=activation)


def _act(z: np.ndarray, model: MlpModel) -> np.ndarray:
    if model.activation == Activation.IDENTITY:
        return z
    slope = model.alpha if model.activation == Activation.LEAKY_RELU else 0.0
    return np.where(z > 0, z, slope * z)


def _act_grad(z: np.ndarray, model: MlpModel) -> np.ndarray:
    if model.activation == Activation.IDENTITY:
        return np.ones_like(z)
    slope = model.alpha if model.activation == Activation.LEAKY_RELU else 0.0
    return np.where(z > 0, 1.0, slope).astype(z.dtype)


def forward(model: MlpModel, x: np.ndarray, clip: bool = False):
    """y = W2 act(W1 x + b1) + b2 for one vector or a batch of rows; clip returns max(y, 0)."""
    x = np.asarray(x, dtype=model.W1.dtype)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != model.feature_len:
        raise ValueError(f"Model expects {model.feature_len} features, got {X.shape[1]}")
    y = _act(X @ model.W1.T + model.b1, model) @ model.W2[0] + model.b2[0]
    if clip:
        y = np.maximum(y, 0.0)
    return float(y[0]) if single else y


def l1_loss_and_grads(model: MlpModel, X: np.ndarray, target: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean absolute error and its (sub)gradient; the kink |y - t| = 0 gets gradient 0."""
    X = np.atleast_2d(np.asarray(X, dtype=model.W1.dtype))
    target = np.atleast_1d(np.asarray(target, dtype=model.W1.dtype))
    z = X @ model.W1.T + model.b1
    h = _act(z, model)
    y = h @ model.W2[0] + model.b2[0]
    diff = y - target
    loss = float(np.mean(np.abs(diff)))
    dy = np.sign(diff) / len(X)
    dz = np.outer(dy, model.W2[0]) * _act_grad(z, model)
    grads = {
        "W1": dz.T @ X,
        "b1": dz.sum(axis=0),
        "W2": (dy @ h)[None, :],
        "b2": np.array([dy.sum()], dtype=model.W1.dtype),
    }
    return loss, grads


# --- Training ---
@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        for name, p in params.items():
            g = grads[name]
            m = self.m.get(name, np.zeros_like(p))
            v = self.v.get(name, np.zeros_like(p))
            m = self.beta1 * m + (1 - self.beta1) * g
            v = self.beta2 * v + (1 - self.beta2) * g ** 2
            self.m[name], self.v[name] = m, v
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            p -= (lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype)


@dataclass
class TrainResult:
    model: MlpModel
    history: List[Tuple[int, float, float, float]]
    best_epoch: int
    best_val: float


def split_validation(n: int, val_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """(train_idx, val_idx) from one seeded permutation; at least one sample on each side."""
    perm = np.random.default_rng(seed).permutation(n)
    n_val = min(max(1, int(math.ceil(val_fraction * n))), n - 1)
    return perm[n_val:], perm[:n_val]


def train(X: np.ndarray, y: np.ndarray, cfg: TrainConfig, model: Optional[MlpModel] = None,
          epochs: Optional[int] = None, log_path: Optional[str] = None) -> TrainResult:
    """Adam on L1 with plateau LR decay; returns the best-validation checkpoint."""
    X = np.asarray(X)
    y = np.asarray(y)
    if len(X) != len(y):
        raise ValueError(f"{len(X)} feature rows but {len(y)} targets")
    if len(X) < 2 * cfg.batch:
        raise ValueError(f"Dataset of {len(X)} samples is smaller than two batches of {cfg.batch}")
    model = (model or init_model(X.shape[1], cfg.hidden, cfg.alpha, cfg.activation, cfg.seed)).copy()
    X = X.astype(model.W1.dtype)
    y = y.astype(model.W1.dtype)
    train_idx, val_idx = split_validation(len(X), cfg.val_fraction, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    adam = AdamState()
    lr = cfg.lr0
    epochs = epochs or cfg.epochs

    best = model.copy()
    best_val, _ = l1_loss_and_grads(model, X[val_idx], y[val_idx])
    best_epoch, bad_evals = 0, 0
    history = []
    for epoch in range(1, epochs + 1):
        order = train_idx[rng.permutation(len(train_idx))]
        for b in range(0, len(order), cfg.batch):
            batch = order[b:b + cfg.batch]
            loss, grads = l1_loss_and_grads(model, X[batch], y[batch])
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"Non-finite loss at epoch {epoch}, batch {b // cfg.batch}, lr {lr:g}; "
                                            f"max |W1| {float(np.max(np.abs(model.W1))):.3g}")
            adam.step(model.parameters(), grads, lr)
        train_l1 = l1_loss_and_grads(model, X[train_idx], y[train_idx])[0]
        val_l1 = l1_loss_and_grads(model, X[val_idx], y[val_idx])[0]
        if not (math.isfinite(train_l1) and math.isfinite(val_l1)):
            raise TrainingDivergedError(f"Non-finite evaluation loss at epoch {epoch}: train {train_l1}, val {val_l1}")
        history.append((epoch, train_l1, val_l1, lr))

        if val_l1 < best_val - cfg.plateau_threshold * abs(best_val):
            best, best_val, best_epoch, bad_evals = model.copy(), val_l1, epoch, 0
        else:
            bad_evals += 1
            if bad_evals >= cfg.plateau_patience:
                lr *= cfg.plateau_factor
                bad_evals = 0
                logger.debug(f"Validation plateau at epoch {epoch}; learning rate now {lr:g}")
        if epoch % 50 == 0 or epoch == epochs:
            logger.info(f"Epoch {epoch}/{epochs}: train L1 {train_l1:.5f}, val L1 {val_l1:.5f}, lr {lr:g}")

    if log_path:
        write_rows(log_path, TRAIN_LOG_COLUMNS, history)
    logger.info(f"Training done: best val L1 {best_val:.5f} at epoch {best_epoch}")
    return TrainResult(model=best, history=history, best_epoch=best_epoch, best_val=float(best_val))


# --- Gradient check ---
@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    checked: int
    skipped: bool


def grad_check(model: MlpModel, x: np.ndarray, target, h: float = 1e-6, kink_margin: float = 1e-4) -> GradCheckResult:
    """Compares the analytic L1 gradient with central differences over every parameter in 64-bit.

    Inputs whose output or hidden pre-activations sit within kink_margin of a kink are skipped.
    """
    model = model.astype(np.float64)
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    t = np.atleast_1d(np.asarray(target, dtype=np.float64))
    z = X @ model.W1.T + model.b1
    y = _act(z, model) @ model.W2[0] + model.b2[0]
    near_relu_kink = model.activation != Activation.IDENTITY and np.any(np.abs(z) < kink_margin)
    if np.any(np.abs(y - t) < kink_margin) or near_relu_kink:
        logger.info("Gradient check skipped: input sits at a kink of the loss or activation")
        return GradCheckResult(max_rel_error=0.0, checked=0, skipped=True)

    _, analytic = l1_loss_and_grads(model, X, t)
    worst, checked = 0.0, 0
    for name, param in model.parameters().items():
        for idx in np.ndindex(param.shape):
            old = param[idx]
            param[idx] = old + h
            plus = l1_loss_and_grads(model, X, t)[0]
            param[idx] = old - h
            minus = l1_loss_and_grads(model, X, t)[0]
            param[idx] = old
            numeric = (plus - minus) / (2 * h)
            a = analytic[name][idx]
            worst = max(worst, abs(a - numeric) / max(abs(a) + abs(numeric), 1e-4))
            checked += 1
    return GradCheckResult(max_rel_error=float(worst), checked=checked, skipped=False)


# --- Serialization ---
def save_model(model: MlpModel, path: str) -> None:
    """Magic, u32 version, u32 feature_len, u32 hidden, f64 alpha, then W1, b1, W2, b2 as little-endian f32."""
    if model.activation == Activation.IDENTITY:
        raise ValueError("Identity activation is a test mode and cannot be saved")
    alpha = model.alpha if model.activation == Activation.LEAKY_RELU else 0.0
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack(_MODEL_HEADER, MODEL_VERSION, model.feature_len, model.hidden, alpha))
        for arr in (model.W1, model.b1, model.W2, model.b2):
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    logger.info(f"Saved regret model ({model.feature_len} -> {model.hidden} -> 1) to {path}")


def load_model(path: str, expected_feature_len: Optional[int] = None) -> MlpModel:
    with open(path, "rb") as f:
        blob = f.read()
    header = len(MODEL_MAGIC) + struct.calcsize(_MODEL_HEADER)
    if len(blob) < header or blob[:4] != MODEL_MAGIC:
        raise ModelFormatError(f"{path} is not a regret model file")
    version, feature_len, hidden, alpha = struct.unpack(_MODEL_HEADER, blob[4:header])
    if version != MODEL_VERSION:
        raise ModelFormatError(f"Unsupported model version {version}, expected {MODEL_VERSION}")
    if expected_feature_len is not None and feature_len != expected_feature_len:
        raise ModelFormatError(f"Model has feature_len {feature_len}, expected {expected_feature_len}")
    sizes = [hidden * feature_len, hidden, hidden, 1]
    expected_bytes = 4 * sum(sizes)
    if len(blob) - header != expected_bytes:
        raise ModelFormatError(f"{path} holds {len(blob) - header} weight bytes, expected {expected_bytes} "
                               f"for feature_len {feature_len} and hidden {hidden}")
    data = np.frombuffer(blob[header:], dtype="<f4").astype(np.float32)
    W1, b1, W2, b2 = np.split(data, np.cumsum(sizes)[:-1])
    activation = Activation.LEAKY_RELU if alpha > 0 else Activation.RELU
    return MlpModel(W1=W1.reshape(hidden, feature_len).copy(), b1=b1.copy(), W2=W2.reshape(1, hidden).copy(),
                    b2=b2.copy(), alpha=float(alpha) if alpha > 0 else 0.01, activation=activation)


def predict_regrets(model: MlpModel, history: GameHistory, m: int, action_count: int = 4, clip: bool = True,
                    normalizer: Optional[PcsNormalizer] = None) -> np.ndarray:
    """Estimated regret of every action at a history, clipped at zero by default."""
    return forward(model, encode_all_actions(history, m, action_count, normalizer), clip=clip)
