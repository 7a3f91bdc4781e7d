"""Episodic MDP over a variational objective.

The agent sees the last ``L`` finite differences ``(df, dbeta, dgamma)``,
most recent first, and acts with a step vector added to the parameters.
The reward is the resulting change in the objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import qsim


@dataclass(frozen=True)
class EnvConfig:
    p: int = 1
    L: int = 4
    T: int = 64
    init_range: tuple[float, float] = (-np.pi, np.pi)

    def __post_init__(self):
        if self.p < 1 or self.L < 1 or self.T < 1:
            raise ValueError(f"p, L and T must be >= 1, got p={self.p} L={self.L} T={self.T}")
        lo, hi = self.init_range
        if not lo < hi:
            raise ValueError(f"empty init range {self.init_range}")

    @property
    def obs_dim(self) -> int:
        return (2 * self.p + 1) * self.L

    @property
    def act_dim(self) -> int:
        return 2 * self.p


@dataclass
class Transition:
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool
    logp: float = 0.0


@dataclass
class Rollout:
    transitions: list[Transition] = field(default_factory=list)
    xs: list[np.ndarray] = field(default_factory=list)
    fs: list[float] = field(default_factory=list)
    best_x: np.ndarray | None = None
    best_f: float = -np.inf


class QaoaEnv:
    """One environment instance; ``objective`` maps a flat ``2p`` vector to f."""

    def __init__(self, cfg: EnvConfig, objective):
        self.cfg = cfg
        self.objective = objective
        self.x = None
        self.f = None
        self.t = 0
        self.done = True
        self.history = np.zeros((cfg.L, 2 * cfg.p + 1))

    @classmethod
    def for_diagonal(cls, cfg: EnvConfig, d: qsim.CostDiagonal, counter: qsim.EvalCounter | None = None) -> QaoaEnv:
        return cls(cfg, qsim.qaoa_objective(d, counter))

    def observation(self) -> np.ndarray:
        return self.history.ravel().copy()

    def reset(self, rng: np.random.Generator | None = None, x0=None) -> np.ndarray:
        if x0 is None:
            lo, hi = self.cfg.init_range
            x0 = rng.uniform(lo, hi, size=self.cfg.act_dim)
        x0 = np.array(x0, dtype=np.float64)
        if x0.shape != (self.cfg.act_dim,):
            raise ValueError(f"start point must have length {self.cfg.act_dim}, got {x0.shape}")
        self.x = x0
        self.f = float(self.objective(x0))
        self.t = 0
        self.done = False
        self.history[:] = 0.0
        return self.observation()

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        if self.done:
            raise RuntimeError("episode finished; call reset() first")
        a = np.asarray(action, dtype=np.float64)
        if a.shape != (self.cfg.act_dim,) or not np.all(np.isfinite(a)):
            raise ValueError(f"action must be a finite vector of length {self.cfg.act_dim}")
        x_new = self.x + a
        f_new = float(self.objective(x_new))
        reward = f_new - self.f
        self.history[1:] = self.history[:-1]
        self.history[0, 0] = reward
        self.history[0, 1:] = a
        self.x, self.f = x_new, f_new
        self.t += 1
        self.done = self.t >= self.cfg.T
        return self.observation(), reward, self.done


class BatchQaoaEnv:
    """``size`` independent episodes advanced in lockstep.

    Each slot follows exactly the dynamics of :class:`QaoaEnv`; the objective
    is called once per step on all rows, so a vectorised simulator can be used.
    """

    def __init__(self, cfg: EnvConfig, batch_objective, size: int):
        self.cfg = cfg
        self.batch_objective = batch_objective
        self.size = size
        self.history = np.zeros((size, cfg.L, 2 * cfg.p + 1))
        self.x = None
        self.f = None
        self.t = 0

    def observation(self) -> np.ndarray:
        return self.history.reshape(self.size, -1).copy()

    def reset(self, rngs) -> np.ndarray:
        lo, hi = self.cfg.init_range
        self.x = np.stack([r.uniform(lo, hi, size=self.cfg.act_dim) for r in rngs])
        self.f = np.asarray(self.batch_objective(self.x), dtype=np.float64)
        self.t = 0
        self.history[:] = 0.0
        return self.observation()

    def step(self, actions) -> tuple[np.ndarray, np.ndarray, bool]:
        if self.t >= self.cfg.T:
            raise RuntimeError("episodes finished; call reset() first")
        a = np.asarray(actions, dtype=np.float64)
        x_new = self.x + a
        f_new = np.asarray(self.batch_objective(x_new), dtype=np.float64)
        rewards = f_new - self.f
        self.history[:, 1:] = self.history[:, :-1]
        self.history[:, 0, 0] = rewards
        self.history[:, 0, 1:] = a
        self.x, self.f = x_new, f_new
        self.t += 1
        return self.observation(), rewards, self.t >= self.cfg.T


def rollout(policy, env: QaoaEnv, steps: int, rng=None, deterministic: bool = False, x0=None) -> Rollout:
    """Run ``policy`` for ``steps`` environment steps, restarting whenever an episode ends.

    ``policy.act(obs, rng, deterministic)`` must return ``(action, logp)``.
    The best point includes every reset point.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    out = Rollout()

    def visit(x, f):
        out.xs.append(x.copy())
        out.fs.append(f)
        if f > out.best_f:
            out.best_f, out.best_x = f, x.copy()

    obs = env.reset(rng, x0=x0)
    visit(env.x, env.f)
    for _ in range(steps):
        if env.done:
            obs = env.reset(rng)
            visit(env.x, env.f)
        action, logp = policy.act(obs, rng, deterministic)
        next_obs, reward, done = env.step(action)
        out.transitions.append(Transition(obs, np.asarray(action), reward, next_obs, done, logp))
        visit(env.x, env.f)
        obs = next_obs
    return out


def neg_sq_norm(x) -> np.ndarray:
    """Concave toy objective ``-||x||^2``; accepts one point or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    return -np.sum(x * x, axis=-1)
