"""Budgeted maximizers: Nelder-Mead, deterministic policy rollout, and RL then Nelder-Mead.

Every optimizer spends exactly its evaluation budget (the budget is the
only stopping rule) and returns the best point it ever queried.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import qsim
from .graphs import SplitMix64
from .ppo import PolicyCheckpoint
from .rlenv import EnvConfig, QaoaEnv, rollout


class _BudgetReached(Exception):
    pass


@dataclass
class OptRunRecord:
    optimizer: str
    x0: np.ndarray
    points: list[np.ndarray] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    best_x: np.ndarray | None = None
    best_f: float = -np.inf
    attempt: int = 0
    seed: int | None = None

    @property
    def evals(self) -> int:
        return len(self.values)

    def add(self, x, f: float) -> None:
        self.points.append(np.array(x, dtype=np.float64))
        self.values.append(float(f))
        if f > self.best_f:
            self.best_f = float(f)
            self.best_x = self.points[-1]

    def best_so_far(self) -> np.ndarray:
        return np.maximum.accumulate(np.asarray(self.values))

    def to_json(self) -> dict:
        return {
            "optimizer": self.optimizer,
            "attempt": self.attempt,
            "seed": self.seed,
            "evals": self.evals,
            "best_f": self.best_f,
            "best_params": None if self.best_x is None else self.best_x.tolist(),
            "trace": [{"f": f} for f in self.values],
        }


class _Tracked:
    """Objective wrapper that records queries and refuses to go past ``budget``."""

    def __init__(self, objective, budget: int, record: OptRunRecord):
        self.objective = objective
        self.budget = budget
        self.record = record

    def __call__(self, x) -> float:
        if self.record.evals >= self.budget:
            raise _BudgetReached
        x = np.array(x, dtype=np.float64)
        f = float(self.objective(x))
        self.record.add(x, f)
        return f


def nelder_mead(
    objective,
    x0,
    budget: int,
    step: float = 0.25,
    alpha: float = 1.0,
    gamma: float = 2.0,
    rho: float = 0.5,
    sigma: float = 0.5,
    label: str = "NM",
) -> OptRunRecord:
    """Maximize ``objective`` with the downhill simplex method until ``budget`` evaluations are spent.

    The initial simplex is ``x0`` plus ``x0 + step * e_i`` for every coordinate.
    """
    x0 = np.array(x0, dtype=np.float64)
    dim = x0.size
    if budget < dim + 1:
        raise ValueError(f"budget {budget} cannot build a simplex in {dim} dimensions (needs {dim + 1})")
    rec = OptRunRecord(label, x0.copy())
    f = _Tracked(objective, budget, rec)
    try:
        simplex = [x0.copy()] + [x0 + step * e for e in np.eye(dim)]
        fs = [f(v) for v in simplex]
        while True:
            order = np.argsort(-np.asarray(fs), kind="stable")
            simplex = [simplex[i] for i in order]
            fs = [fs[i] for i in order]
            centroid = np.mean(simplex[:-1], axis=0)
            worst = simplex[-1]
            xr = centroid + alpha * (centroid - worst)
            fr = f(xr)
            if fs[0] >= fr > fs[-2]:
                simplex[-1], fs[-1] = xr, fr
                continue
            if fr > fs[0]:
                xe = centroid + gamma * (xr - centroid)
                fe = f(xe)
                simplex[-1], fs[-1] = (xe, fe) if fe > fr else (xr, fr)
                continue
            if fr > fs[-1]:
                xc = centroid + rho * (xr - centroid)
                fc = f(xc)
                if fc >= fr:
                    simplex[-1], fs[-1] = xc, fc
                    continue
            else:
                xc = centroid + rho * (worst - centroid)
                fc = f(xc)
                if fc > fs[-1]:
                    simplex[-1], fs[-1] = xc, fc
                    continue
            for i in range(1, dim + 1):
                simplex[i] = simplex[0] + sigma * (simplex[i] - simplex[0])
                fs[i] = f(simplex[i])
    except _BudgetReached:
        pass
    return rec


def _check_policy(ck: PolicyCheckpoint, x0: np.ndarray, L: int | None):
    if x0.ndim != 1 or x0.size != 2 * ck.p:
        raise ValueError(f"checkpoint trained at p={ck.p} cannot drive a start point of length {x0.size}")
    if L is not None and L != ck.L:
        raise ValueError(f"checkpoint uses history L={ck.L}, requested L={L}")


def rl_rollout_opt(
    ck: PolicyCheckpoint,
    d: qsim.CostDiagonal,
    x0,
    budget: int,
    counter: qsim.EvalCounter | None = None,
    L: int | None = None,
) -> OptRunRecord:
    """Follow the noise-free policy mean from ``x0`` in one trajectory of ``budget`` evaluations."""
    x0 = np.array(x0, dtype=np.float64)
    _check_policy(ck, x0, L)
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    rec = OptRunRecord("RL", x0.copy())
    tracked = _Tracked(qsim.qaoa_objective(d, counter), budget, rec)
    env = QaoaEnv(EnvConfig(p=ck.p, L=ck.L, T=max(budget - 1, 1)), tracked)
    if budget == 1:
        env.reset(x0=x0)
    else:
        rollout(ck.policy(), env, budget - 1, deterministic=True, x0=x0)
    return rec


def rlnm(
    ck: PolicyCheckpoint,
    d: qsim.CostDiagonal,
    x0,
    budget: int,
    counter: qsim.EvalCounter | None = None,
) -> OptRunRecord:
    """Half the budget on the policy rollout, then Nelder-Mead from its best point."""
    x0 = np.array(x0, dtype=np.float64)
    half = budget // 2
    if budget % 2 or half < x0.size + 1:
        raise ValueError(f"budget must be even with budget/2 >= {x0.size + 1}, got {budget}")
    first = rl_rollout_opt(ck, d, x0, half, counter)
    second = nelder_mead(qsim.qaoa_objective(d, counter), first.best_x, half)
    rec = OptRunRecord("RLNM", x0.copy())
    for x, f in zip(first.points + second.points, first.values + second.values):
        rec.add(x, f)
    return rec


def start_points(p: int, attempts: int, seed: int) -> tuple[list[int], list[np.ndarray]]:
    """Per-attempt seeds and start points, uniform in ``[-pi, pi]^(2p)``."""
    root = SplitMix64(seed)
    seeds = [root.next_u64() for _ in range(attempts)]
    return seeds, [SplitMix64(s).uniform_range(-np.pi, np.pi, 2 * p) for s in seeds]


def make_optimizer(name: str, checkpoint: PolicyCheckpoint | None = None):
    """``(d, x0, budget, counter) -> OptRunRecord`` for ``"NM"``, ``"RL"`` or ``"RLNM"``."""
    if name == "NM":
        return lambda d, x0, budget, counter: nelder_mead(qsim.qaoa_objective(d, counter), x0, budget)
    if name in ("RL", "RLNM"):
        if checkpoint is None:
            raise ValueError(f"optimizer {name} needs a policy checkpoint")
        fn = rl_rollout_opt if name == "RL" else rlnm
        return lambda d, x0, budget, counter: fn(checkpoint, d, x0, budget, counter)
    raise ValueError(f"unknown optimizer {name!r}")


@dataclass
class MultiStartResult:
    records: list[OptRunRecord]

    @property
    def attempt_best(self) -> list[float]:
        return [r.best_f for r in self.records]

    @property
    def best_f(self) -> float:
        return max(self.attempt_best)


def multi_start(optimizer, d: qsim.CostDiagonal, p: int, attempts: int = 10, budget: int = 192, seed: int = 0,
                label: str | None = None) -> MultiStartResult:
    """Run ``optimizer`` from ``attempts`` seeded start points, each with a fresh budget."""
    if attempts < 1:
        raise ValueError(f"attempts must be >= 1, got {attempts}")
    if isinstance(optimizer, str):
        label = label or optimizer
        optimizer = make_optimizer(optimizer)
    seeds, x0s = start_points(p, attempts, seed)
    records = []
    for k, (s, x0) in enumerate(zip(seeds, x0s)):
        counter = qsim.EvalCounter(budget)
        rec = optimizer(d, x0, budget, counter)
        rec.attempt, rec.seed = k, s
        if label:
            rec.optimizer = label
        records.append(rec)
    return MultiStartResult(records)
