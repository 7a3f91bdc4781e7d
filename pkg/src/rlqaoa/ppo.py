"""Actor-critic PPO with a clipped surrogate and KL early stopping.

The policy is a diagonal Gaussian whose mean is an MLP of the observation
and whose variance is a fixed constant.  Training data comes from
:class:`rlqaoa.rlenv.BatchQaoaEnv`, one episode per slot, with a separate
random stream per episode so results do not depend on how episodes are
scheduled.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import qsim
from .graphs import Graph
from .neural import AdamState, Mlp, adam_init, adam_step, mlp_backward, mlp_forward, mlp_init
from .rlenv import BatchQaoaEnv, EnvConfig

log = logging.getLogger(__name__)

SIGMA2 = math.exp(-6.0)
SCHEMA_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


class GaussianPolicy:
    """``a ~ N(actor(obs), sigma2 * I)`` with ``sigma2`` held constant."""

    def __init__(self, actor: Mlp, sigma2: float = SIGMA2):
        self.actor = actor
        self.sigma2 = float(sigma2)

    @property
    def obs_dim(self) -> int:
        return self.actor.sizes[0]

    @property
    def act_dim(self) -> int:
        return self.actor.sizes[-1]

    def mean(self, obs) -> np.ndarray:
        return mlp_forward(self.actor, obs)

    def log_prob(self, obs, actions, mean=None) -> np.ndarray:
        mu = self.mean(obs) if mean is None else mean
        d = np.asarray(actions) - mu
        k = mu.shape[-1]
        return -0.5 * np.sum(d * d, axis=-1) / self.sigma2 - 0.5 * k * np.log(2 * np.pi * self.sigma2)

    def act(self, obs, rng=None, deterministic: bool = False):
        mu = self.mean(obs)
        if deterministic:
            a = mu
        else:
            a = mu + math.sqrt(self.sigma2) * rng.standard_normal(mu.shape)
        lp = self.log_prob(obs, a, mu)
        return a, (float(lp) if np.ndim(lp) == 0 else lp)


class Critic:
    def __init__(self, net: Mlp):
        if net.sizes[-1] != 1:
            raise ValueError(f"critic must have a scalar output, got {net.sizes[-1]}")
        self.net = net

    def value(self, obs) -> np.ndarray:
        return mlp_forward(self.net, obs)[..., 0]


def sample_action(policy: GaussianPolicy, obs, rng: np.random.Generator):
    """Draw ``mean + sigma * N(0, I)``; returns ``(action, log_prob)``."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape[-1] != policy.obs_dim:
        raise ValueError(f"observation length {obs.shape[-1]} != policy input {policy.obs_dim}")
    return policy.act(obs, rng, deterministic=False)


@dataclass
class TrainConfig:
    epochs: int = 750
    episodes_per_epoch: int = 128
    horizon: int = 64
    discount: float = 0.99
    gae_lambda: float = 0.97
    clip_ratio: float = 0.2
    target_kl: float = 0.015
    train_iters: int = 10
    minibatch_size: int = 256
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    hidden: tuple[int, ...] = (64, 64)
    history: int = 4
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)

    @property
    def sims_per_epoch(self) -> int:
        return self.episodes_per_epoch * self.horizon

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise CheckpointError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["hidden"] = list(self.hidden)
        return out


@dataclass
class Batch:
    """One epoch of experience, episode-major: row ``e * T + t``."""

    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray
    n_episodes: int
    horizon: int
    ep_returns: np.ndarray
    best_f: float
    best_x: np.ndarray
    evals: int
    values: np.ndarray | None = None
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def __len__(self):
        return self.obs.shape[0]


def collect_epoch(policy: GaussianPolicy, env: BatchQaoaEnv, rngs) -> Batch:
    """Run one full episode in every slot of ``env``; ``rngs[e]`` drives episode ``e``."""
    if len(rngs) != env.size:
        raise ValueError(f"need one generator per episode, got {len(rngs)} for {env.size}")
    T, B = env.cfg.T, env.size
    obs = env.reset(rngs)
    best = int(np.argmax(env.f))
    best_f, best_x = float(env.f[best]), env.x[best].copy()
    evals = B
    sd = math.sqrt(policy.sigma2)
    all_obs = np.empty((T, B, env.cfg.obs_dim))
    all_act = np.empty((T, B, env.cfg.act_dim))
    all_rew = np.empty((T, B))
    for t in range(T):
        mu = policy.mean(obs)
        noise = np.stack([r.standard_normal(env.cfg.act_dim) for r in rngs])
        act = mu + sd * noise
        all_obs[t] = obs
        all_act[t] = act
        obs, rew, _ = env.step(act)
        evals += B
        all_rew[t] = rew
        k = int(np.argmax(env.f))
        if env.f[k] > best_f:
            best_f, best_x = float(env.f[k]), env.x[k].copy()
    obs_flat = all_obs.transpose(1, 0, 2).reshape(B * T, -1)
    act_flat = all_act.transpose(1, 0, 2).reshape(B * T, -1)
    rew = all_rew.T.copy()
    return Batch(
        obs=obs_flat,
        actions=act_flat,
        logp=policy.log_prob(obs_flat, act_flat),
        rewards=rew.reshape(-1),
        n_episodes=B,
        horizon=T,
        ep_returns=rew.sum(axis=1),
        best_f=best_f,
        best_x=best_x,
        evals=evals,
    )


def gae(rewards: np.ndarray, values: np.ndarray, discount: float, lam: float) -> np.ndarray:
    """Generalised advantage estimates per episode row, value 0 after the last step."""
    adv = np.zeros_like(rewards, dtype=np.float64)
    acc = np.zeros(rewards.shape[0])
    next_v = np.zeros(rewards.shape[0])
    for t in range(rewards.shape[1] - 1, -1, -1):
        delta = rewards[:, t] + discount * next_v - values[:, t]
        acc = delta + discount * lam * acc
        adv[:, t] = acc
        next_v = values[:, t]
    return adv


def gae_advantages(batch: Batch, critic: Critic, discount: float, lam: float, normalize: bool = True):
    """Fill ``batch.values/advantages/returns``; returns ``(advantages, returns)``.

    Return targets use the raw advantages; the policy sees them normalised to
    zero mean and unit variance.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    shape = (batch.n_episodes, batch.horizon)
    values = critic.value(batch.obs)
    raw = gae(batch.rewards.reshape(shape), values.reshape(shape), discount, lam).reshape(-1)
    returns = raw + values
    adv = raw
    if normalize:
        std = raw.std()
        adv = (raw - raw.mean()) / (std if std > 0 else 1.0)
    batch.values, batch.advantages, batch.returns = values, adv, returns
    return adv, returns


def mean_kl(old_mean: np.ndarray, new_mean: np.ndarray, sigma2: float) -> float:
    """Mean KL between equal-variance diagonal Gaussians: ``||mu_new - mu_old||^2 / (2 sigma2)``."""
    return float(np.mean(np.sum((new_mean - old_mean) ** 2, axis=-1)) / (2.0 * sigma2))


@dataclass
class UpdateInfo:
    mean_kl: float = 0.0
    clip_fraction: float = 0.0
    actor_loss: float = 0.0
    critic_loss: float = 0.0
    grad_epochs: int = 0
    actor_steps: int = 0
    stopped_early: bool = False


def clipped_surrogate(ratio: np.ndarray, adv: np.ndarray, clip: float) -> np.ndarray:
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv)


def ppo_update(
    policy: GaussianPolicy,
    critic: Critic,
    batch: Batch,
    cfg: TrainConfig,
    actor_opt: AdamState,
    critic_opt: AdamState,
    rng: np.random.Generator,
) -> UpdateInfo:
    """Minibatch ascent on the clipped surrogate and critic regression.

    Actor steps stop for the rest of the update as soon as the mean KL to the
    pre-update policy exceeds ``cfg.target_kl``; the critic keeps training.
    """
    info = UpdateInfo()
    obs, act, adv, ret = batch.obs, batch.actions, batch.advantages, batch.returns
    n = len(batch)
    old_mean = policy.mean(obs)
    mb = min(cfg.minibatch_size, n)
    eps = cfg.clip_ratio
    actor_on = True
    clip_fracs = []
    for _ in range(cfg.train_iters):
        perm = rng.permutation(n)
        if actor_on:
            info.grad_epochs += 1
        for start in range(0, n, mb):
            idx = perm[start : start + mb]
            o = obs[idx]
            if actor_on:
                mu = policy.mean(o)
                ratio = np.exp(policy.log_prob(o, act[idx], mu) - batch.logp[idx])
                a = adv[idx]
                clip_fracs.append(float(np.mean(np.abs(ratio - 1.0) > eps)))
                active = ~(((a > 0) & (ratio > 1 + eps)) | ((a < 0) & (ratio < 1 - eps)))
                coef = -(active * a * ratio) / len(idx)
                up = coef[:, None] * (act[idx] - mu) / policy.sigma2
                g = mlp_backward(policy.actor, o, up)
                adam_step(actor_opt, policy.actor.params(), g.params())
                info.actor_steps += 1
                info.mean_kl = mean_kl(old_mean, policy.mean(obs), policy.sigma2)
                if info.mean_kl > cfg.target_kl:
                    actor_on = False
                    info.stopped_early = True
            v = critic.value(o)
            up = (2.0 / len(idx)) * (v - ret[idx])[:, None]
            g = mlp_backward(critic.net, o, up)
            adam_step(critic_opt, critic.net.params(), g.params())
    mu = policy.mean(obs)
    ratio = np.exp(policy.log_prob(obs, act, mu) - batch.logp)
    info.actor_loss = float(-np.mean(clipped_surrogate(ratio, adv, eps)))
    info.critic_loss = float(np.mean((critic.value(obs) - ret) ** 2))
    info.clip_fraction = float(np.mean(clip_fracs)) if clip_fracs else 0.0
    return info


@dataclass
class EpochMetrics:
    epoch: int
    mean_return: float
    best_f: float
    mean_kl: float
    clip_fraction: float
    actor_loss: float
    critic_loss: float
    evals: int = 0
    grad_epochs: int = 0

    CSV_FIELDS = ("epoch", "mean_return", "best_f", "mean_kl", "clip_fraction", "actor_loss", "critic_loss")

    def csv_row(self) -> str:
        vals = [str(self.epoch)] + [f"{getattr(self, k):.12g}" for k in self.CSV_FIELDS[1:]]
        return ",".join(vals)


@dataclass
class PolicyCheckpoint:
    actor: Mlp
    critic: Mlp
    config: TrainConfig
    p: int
    L: int
    sigma2: float = SIGMA2
    training_graph_label: str = ""
    epoch: int = 0
    reward_stats: dict = field(default_factory=dict)
    actor_opt: AdamState | None = None
    critic_opt: AdamState | None = None

    def policy(self) -> GaussianPolicy:
        return GaussianPolicy(self.actor, self.sigma2)


def _net_sizes(obs_dim: int, hidden, out: int) -> tuple[int, ...]:
    return (obs_dim,) + tuple(hidden) + (out,)


def init_checkpoint(cfg: TrainConfig, p: int, label: str = "") -> PolicyCheckpoint:
    env_cfg = EnvConfig(p=p, L=cfg.history, T=cfg.horizon)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    actor = mlp_init(_net_sizes(env_cfg.obs_dim, cfg.hidden, env_cfg.act_dim), rng)
    critic = mlp_init(_net_sizes(env_cfg.obs_dim, cfg.hidden, 1), rng)
    return PolicyCheckpoint(
        actor=actor,
        critic=critic,
        config=cfg,
        p=p,
        L=cfg.history,
        training_graph_label=label,
        actor_opt=adam_init(actor.params(), lr=cfg.actor_lr),
        critic_opt=adam_init(critic.params(), lr=cfg.critic_lr),
    )


def train_on_objective(
    cfg: TrainConfig,
    batch_objective,
    p: int,
    label: str = "",
    resume: PolicyCheckpoint | None = None,
    on_epoch=None,
) -> tuple[PolicyCheckpoint, list[EpochMetrics]]:
    """Train a policy on any vectorised objective ``(B, 2p) -> (B,)``.

    ``on_epoch(checkpoint, metrics)`` is called after every epoch.
    """
    ck = resume if resume is not None else init_checkpoint(cfg, p, label)
    if ck.p != p or ck.L != cfg.history:
        raise CheckpointError(f"checkpoint has p={ck.p}, L={ck.L}; requested p={p}, L={cfg.history}")
    if ck.actor_opt is None:
        ck.actor_opt = adam_init(ck.actor.params(), lr=cfg.actor_lr)
    if ck.critic_opt is None:
        ck.critic_opt = adam_init(ck.critic.params(), lr=cfg.critic_lr)
    env = BatchQaoaEnv(EnvConfig(p=p, L=cfg.history, T=cfg.horizon), batch_objective, cfg.episodes_per_epoch)
    policy, critic = ck.policy(), Critic(ck.critic)
    history = []
    for epoch in range(ck.epoch, cfg.epochs):
        seeds = np.random.SeedSequence(cfg.seed, spawn_key=(epoch,))
        ep_seeds, upd_seed = seeds.spawn(2)
        rngs = [np.random.default_rng(s) for s in ep_seeds.spawn(cfg.episodes_per_epoch)]
        batch = collect_epoch(policy, env, rngs)
        gae_advantages(batch, critic, cfg.discount, cfg.gae_lambda)
        info = ppo_update(policy, critic, batch, cfg, ck.actor_opt, ck.critic_opt, np.random.default_rng(upd_seed))
        m = EpochMetrics(
            epoch=epoch + 1,
            mean_return=float(batch.ep_returns.mean()),
            best_f=batch.best_f,
            mean_kl=info.mean_kl,
            clip_fraction=info.clip_fraction,
            actor_loss=info.actor_loss,
            critic_loss=info.critic_loss,
            evals=batch.evals,
            grad_epochs=info.grad_epochs,
        )
        diag = [m.mean_return, m.actor_loss, m.critic_loss, m.mean_kl]
        if not all(math.isfinite(v) for v in diag):
            raise TrainingDiverged(f"non-finite training state at epoch {epoch + 1}: {m}")
        ck.epoch = epoch + 1
        ck.reward_stats = {
            "mean_return": m.mean_return,
            "return_std": float(batch.ep_returns.std()),
            "best_f": max(m.best_f, ck.reward_stats.get("best_f", -math.inf)),
        }
        history.append(m)
        log.info(
            "epoch %d  return %.4f  best_f %.4f  kl %.4g  grad_epochs %d",
            m.epoch, m.mean_return, m.best_f, m.mean_kl, m.grad_epochs,
        )
        if on_epoch is not None:
            on_epoch(ck, m)
    return ck, history


def train(
    cfg: TrainConfig,
    graph: Graph,
    p: int,
    resume: PolicyCheckpoint | None = None,
    on_epoch=None,
    counter: qsim.EvalCounter | None = None,
) -> tuple[PolicyCheckpoint, list[EpochMetrics]]:
    """Train on the QAOA objective of ``graph`` at depth ``p``."""
    d = qsim.cost_diagonal(graph)
    objective = lambda x: qsim.evaluate_batch(d, x, counter)
    return train_on_objective(cfg, objective, p, graph.label, resume, on_epoch)


# --- serialization ----------------------------------------------------------------


def _net_to_json(net: Mlp) -> dict:
    return {"weights": [w.tolist() for w in net.weights], "biases": [b.tolist() for b in net.biases]}


def _net_from_json(d: dict, sizes) -> Mlp:
    try:
        net = Mlp([np.array(w, dtype=np.float64) for w in d["weights"]], [np.array(b, dtype=np.float64) for b in d["biases"]])
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"malformed network: {exc}") from exc
    if net.sizes != tuple(sizes):
        raise CheckpointError(f"network shape {net.sizes} does not match declared sizes {tuple(sizes)}")
    return net


def _adam_to_json(s: AdamState | None):
    if s is None:
        return None
    return {
        "lr": s.lr, "beta1": s.beta1, "beta2": s.beta2, "eps": s.eps, "t": s.t,
        "m": [a.tolist() for a in s.m], "v": [a.tolist() for a in s.v],
    }


def _adam_from_json(d, net: Mlp):
    if d is None:
        return None
    s = AdamState(d["lr"], d["beta1"], d["beta2"], d["eps"], int(d["t"]),
                  [np.array(a, dtype=np.float64) for a in d["m"]], [np.array(a, dtype=np.float64) for a in d["v"]])
    if [a.shape for a in s.m] != [a.shape for a in net.params()]:
        raise CheckpointError("optimizer state does not match network shapes")
    return s


def checkpoint_to_json(ck: PolicyCheckpoint) -> dict:
    # json writes floats with repr(), which round-trips doubles exactly
    return {
        "schema_version": SCHEMA_VERSION,
        "p": ck.p,
        "L": ck.L,
        "layer_sizes": list(ck.actor.sizes),
        "critic_layer_sizes": list(ck.critic.sizes),
        "actor": _net_to_json(ck.actor),
        "critic": _net_to_json(ck.critic),
        "sigma2": ck.sigma2,
        "train_config": ck.config.to_dict(),
        "epoch": ck.epoch,
        "training_graph_label": ck.training_graph_label,
        "reward_stats": ck.reward_stats,
        "optimizer": {"actor": _adam_to_json(ck.actor_opt), "critic": _adam_to_json(ck.critic_opt)},
    }


def checkpoint_from_json(d: dict, p: int | None = None, L: int | None = None) -> PolicyCheckpoint:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise CheckpointError(f"unsupported checkpoint schema version {d.get('schema_version')!r}")
    try:
        ck_p, ck_l = int(d["p"]), int(d["L"])
        if p is not None and p != ck_p:
            raise CheckpointError(f"shape mismatch: checkpoint trained at p={ck_p}, requested p={p}")
        if L is not None and L != ck_l:
            raise CheckpointError(f"shape mismatch: checkpoint trained with L={ck_l}, requested L={L}")
        sizes = d["layer_sizes"]
        if sizes[0] != (2 * ck_p + 1) * ck_l or sizes[-1] != 2 * ck_p:
            raise CheckpointError(f"shape mismatch: layer sizes {sizes} inconsistent with p={ck_p}, L={ck_l}")
        actor = _net_from_json(d["actor"], sizes)
        critic = _net_from_json(d["critic"], d.get("critic_layer_sizes", sizes[:-1] + [1]))
        opt = d.get("optimizer") or {}
        return PolicyCheckpoint(
            actor=actor,
            critic=critic,
            config=TrainConfig.from_dict(d["train_config"]),
            p=ck_p,
            L=ck_l,
            sigma2=float(d["sigma2"]),
            training_graph_label=d.get("training_graph_label", ""),
            epoch=int(d["epoch"]),
            reward_stats=d.get("reward_stats", {}),
            actor_opt=_adam_from_json(opt.get("actor"), actor),
            critic_opt=_adam_from_json(opt.get("critic"), critic),
        )
    except KeyError as exc:
        raise CheckpointError(f"checkpoint missing field {exc}") from exc


def save_checkpoint(ck: PolicyCheckpoint, path) -> None:
    with open(path, "w") as fh:
        json.dump(checkpoint_to_json(ck), fh)
        fh.write("\n")


def load_checkpoint(path, p: int | None = None, L: int | None = None) -> PolicyCheckpoint:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: not valid JSON ({exc})") from exc
    return checkpoint_from_json(d, p, L)
