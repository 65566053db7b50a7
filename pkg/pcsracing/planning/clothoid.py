# pcsracing/planning/clothoid.py
#
# Third-order clothoids: kappa(s) = a + b*s + c*s^2 + d*s^3 with a fixed to the start
# curvature. (b, c, d, sf) are found by damped Newton shooting so the curve ends at the
# goal position, heading and curvature. Every routine works on a batch of goals at
# once, expressed in the start frame.

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

logger = logging.getLogger(__name__)

# Newton stops well below the endpoint tolerance the caller asks for
_NEWTON_TOL = 1e-8
_LINE_SEARCH_HALVINGS = 10


@dataclass(frozen=True)
class ClothoidPath:
    """Sampled clothoid in world coordinates; row i is at arc length s[i]."""
    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    kappa: np.ndarray
    coefs: np.ndarray

    @property
    def arc_length(self) -> float:
        return float(self.s[-1])


def _wrap(angle):
    return np.pi - np.mod(np.pi - angle, 2.0 * np.pi)


def _profiles(a, p, u):
    """Curvature and heading at normalized arc u for coefficient batches p = (b, c, d, sf)."""
    b, c, d, sf = (p[:, i:i + 1] for i in range(4))
    s = sf * u
    kappa = a[:, None] + b * s + c * s ** 2 + d * s ** 3
    theta = a[:, None] * s + b * s ** 2 / 2 + c * s ** 3 / 3 + d * s ** 4 / 4
    return s, kappa, theta


def _residual_and_jacobian(a, p, goal, u):
    b, c, d, sf = p.T
    s, kappa, theta = _profiles(a, p, u)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    sf_col = sf[:, None]
    # d theta / d (b, c, d, sf), each (B, n + 1)
    dtheta = [sf_col ** 2 * u ** 2 / 2, sf_col ** 3 * u ** 3 / 3, sf_col ** 4 * u ** 4 / 4, u * kappa]

    int_cos = simpson(cos_t, x=u, axis=-1)
    int_sin = simpson(sin_t, x=u, axis=-1)
    res = np.empty((len(p), 4))
    res[:, 0] = sf * int_cos - goal[:, 0]
    res[:, 1] = sf * int_sin - goal[:, 1]
    res[:, 2] = _wrap(theta[:, -1] - goal[:, 2])
    res[:, 3] = kappa[:, -1] - goal[:, 3]

    jac = np.empty((len(p), 4, 4))
    for k in range(4):
        jac[:, 0, k] = -sf * simpson(sin_t * dtheta[k], x=u, axis=-1)
        jac[:, 1, k] = sf * simpson(cos_t * dtheta[k], x=u, axis=-1)
    jac[:, 0, 3] += int_cos
    jac[:, 1, 3] += int_sin
    jac[:, 2, :] = np.stack([sf ** 2 / 2, sf ** 3 / 3, sf ** 4 / 4, kappa[:, -1]], axis=1)
    jac[:, 3, :] = np.stack([sf, sf ** 2, sf ** 3, b + 2 * c * sf + 3 * d * sf ** 2], axis=1)
    return res, jac


def _initial_guess(a, goal):
    dist = np.hypot(goal[:, 0], goal[:, 1])
    dtheta = np.abs(goal[:, 2])
    sf = dist * (dtheta ** 2 / 5.0 + 1.0) + 0.4 * dtheta
    # b, c from heading and end curvature with d = 0
    rhs_theta = goal[:, 2] - a * sf
    rhs_kappa = goal[:, 3] - a
    det = sf ** 2 / 2 * sf ** 2 - sf ** 3 / 3 * sf
    b = (rhs_theta * sf ** 2 - sf ** 3 / 3 * rhs_kappa) / det
    c = (sf ** 2 / 2 * rhs_kappa - sf * rhs_theta) / det
    return np.column_stack([b, c, np.zeros_like(b), sf])


def _cost(res):
    return np.sum(res ** 2, axis=1)


def solve_clothoids(kappa0: np.ndarray, goals: np.ndarray, samples: int = 64, max_iter: int = 50,
                    tol: float = 1e-3, kappa_max: float = np.inf) -> Tuple[np.ndarray, np.ndarray]:
    """Shoots a batch of clothoids in the start frame.

    kappa0: (B,) start curvatures. goals: (B, 4) rows of (x, y, theta, kappa) relative to
    the start pose. Returns (coefs (B, 4) as (b, c, d, sf), feasible (B,)).
    """
    kappa0 = np.asarray(kappa0, dtype=float)
    goals = np.asarray(goals, dtype=float)
    u = np.linspace(0.0, 1.0, samples + 1)
    p = _initial_guess(kappa0, goals)
    # goals at or behind the start line are never planned to
    ahead = (goals[:, 0] > 0.0) & np.all(np.isfinite(p), axis=1)
    p[~ahead] = np.array([0.0, 0.0, 0.0, 1.0])
    active = ahead.copy()
    converged = np.zeros(len(goals), dtype=bool)

    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        res, jac = _residual_and_jacobian(kappa0[idx], p[idx], goals[idx], u)
        done = np.max(np.abs(res), axis=1) < _NEWTON_TOL
        converged[idx[done]] = True
        active[idx[done]] = False
        keep = ~done
        idx, res, jac = idx[keep], res[keep], jac[keep]
        if idx.size == 0:
            break
        singular = np.abs(np.linalg.det(jac)) < 1e-14
        active[idx[singular]] = False
        idx, res, jac = idx[~singular], res[~singular], jac[~singular]
        if idx.size == 0:
            break
        step = np.linalg.solve(jac, -res[..., None])[..., 0]

        alpha = np.ones(len(idx))
        base = _cost(res)
        accepted = np.zeros(len(idx), dtype=bool)
        trial = p[idx].copy()
        for _ in range(_LINE_SEARCH_HALVINGS):
            pending = ~accepted
            cand = p[idx[pending]] + alpha[pending, None] * step[pending]
            positive = cand[:, 3] > 0
            cand_res, _ = _residual_and_jacobian(kappa0[idx[pending]], np.where(positive[:, None], cand, p[idx[pending]]),
                                                 goals[idx[pending]], u)
            better = positive & (_cost(cand_res) < base[pending])
            sel = np.nonzero(pending)[0][better]
            trial[sel] = cand[better]
            accepted[sel] = True
            alpha[~accepted] *= 0.5
            if accepted.all():
                break
        stalled = idx[~accepted]
        active[stalled] = False
        p[idx[accepted]] = trial[accepted]

    # stalled line searches still count when the endpoint is within tol
    feasible = ahead & np.all(np.isfinite(p), axis=1) & (p[:, 3] > 0)
    logger.debug(f"Clothoid batch: {int(converged.sum())}/{len(goals)} reached Newton tolerance")
    if feasible.any():
        _, kappa, _ = _profiles(kappa0[feasible], p[feasible], u)
        within = np.max(np.abs(kappa), axis=1) <= kappa_max
        res, _ = _residual_and_jacobian(kappa0[feasible], p[feasible], goals[feasible], u)
        accurate = (np.hypot(res[:, 0], res[:, 1]) <= tol) & (np.abs(res[:, 2]) <= tol)
        feasible[np.nonzero(feasible)[0]] = within & accurate
    logger.debug(f"Clothoid batch: {int(feasible.sum())}/{len(goals)} feasible")
    return p, feasible


def sample_clothoids(start: np.ndarray, kappa0: np.ndarray, coefs: np.ndarray, samples: int = 64) -> np.ndarray:
    """World-frame samples (B, samples + 1, 4) of x, y, theta, kappa for solved coefficients.

    start: (B, 3) start poses (x, y, theta).
    """
    u = np.linspace(0.0, 1.0, samples + 1)
    s, kappa, theta = _profiles(np.asarray(kappa0, dtype=float), coefs, u)
    sf = coefs[:, 3:4]
    x_loc = sf * cumulative_simpson(np.cos(theta), x=u, axis=-1, initial=0.0)
    y_loc = sf * cumulative_simpson(np.sin(theta), x=u, axis=-1, initial=0.0)
    cos0, sin0 = np.cos(start[:, 2:3]), np.sin(start[:, 2:3])
    x = start[:, 0:1] + cos0 * x_loc - sin0 * y_loc
    y = start[:, 1:2] + sin0 * x_loc + cos0 * y_loc
    return np.stack([x, y, _wrap(theta + start[:, 2:3]), kappa], axis=-1)


def to_start_frame(start: np.ndarray, goals: np.ndarray) -> np.ndarray:
    """Expresses world goals (B, 4: x, y, theta, kappa) in the start pose's frame."""
    dx = goals[:, 0] - start[0]
    dy = goals[:, 1] - start[1]
    c, s = np.cos(start[2]), np.sin(start[2])
    return np.column_stack([c * dx + s * dy, -s * dx + c * dy, _wrap(goals[:, 2] - start[2]), goals[:, 3]])


def solve_clothoid(start: np.ndarray, goal: np.ndarray, kappa_goal: float = 0.0, samples: int = 64,
                   max_iter: int = 50, tol: float = 1e-3, kappa_max: float = np.inf) -> Optional[ClothoidPath]:
    """Single boundary-value solve.

    start: (x, y, theta, kappa); goal: (x, y, theta). Returns None when infeasible.
    """
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    if np.hypot(goal[0] - start[0], goal[1] - start[1]) == 0.0:
        raise ValueError("Start and goal positions coincide")
    local = to_start_frame(start[:3], np.array([[goal[0], goal[1], goal[2], kappa_goal]]))
    coefs, feasible = solve_clothoids(start[3:4], local, samples, max_iter, tol, kappa_max)
    if not feasible[0]:
        return None
    pts = sample_clothoids(start[None, :3], start[3:4], coefs, samples)[0]
    s = np.linspace(0.0, coefs[0, 3], samples + 1)
    return ClothoidPath(s=s, x=pts[:, 0], y=pts[:, 1], theta=pts[:, 2], kappa=pts[:, 3], coefs=coefs[0].copy())
