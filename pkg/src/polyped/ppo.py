"""PPO training of per-embodiment expert policies.

Actor and critic are ELU MLPs with hidden sizes [512, 256, 128]; the actor
outputs per-joint action means (clipped to +-10) with a global learnable
log-std, the critic sees the actor observations plus privileged state (trunk
linear velocity, height, foot contacts and air times).  One hyperparameter
set is shared across a morphology class; desk-scale batch sizes are the
defaults and paper-scale values are reachable through the config.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import Tensor, grads_of, minimum, parameter, zero_grads
from .checkpoint import save_checkpoint
from .embodiment import Embodiment
from .env import SurrogateEnv
from .randomization import RandomizationRanges

__all__ = [
    "PPOConfig",
    "ExpertPolicy",
    "ShapeMismatch",
    "NonFiniteLoss",
    "gae",
    "ppo_update",
    "train_expert",
]


class ShapeMismatch(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass
class PPOConfig:
    # Desk-scale defaults; paper scale: batch 98304, minibatch 24576,
    # 17500 iterations (quadruped/hexapod) or 42500 (humanoid).
    num_envs: int = 64
    steps_per_env: int = 64
    minibatch_size: int = 2048
    epochs: int = 5
    iterations: int = 150
    learning_rate: float = 1e-3
    adaptive_lr: bool = True
    target_kl: float = 0.01
    # Desk-scale floor: with few iterations the KL throttle must not stall
    # learning outright (paper scale runs 17500+ iterations at the same target).
    lr_bounds: tuple[float, float] = (2e-4, 2e-3)
    clip_range: float = 0.2
    entropy_coef: float = 0.002
    value_coef: float = 0.5
    gamma: float = 0.99
    gae_lambda: float = 0.95
    max_grad_norm: float = 1.0
    init_action_std: float = 1.0
    action_mean_clip: float = 10.0
    hidden: tuple[int, ...] = (512, 256, 128)
    horizon: int = 300
    seed: int = 0
    dtype: str = "float64"  # float32 cuts update time roughly in half
    eval_every: int = 10
    eval_envs: int = 16
    eval_steps: int = 250

    def check(self) -> None:
        batch = self.num_envs * self.steps_per_env
        if batch % self.minibatch_size != 0:
            raise ValueError("batch size must be a multiple of the minibatch size")


@dataclass
class ExpertPolicy:
    obs_dim: int
    privileged_dim: int
    act_dim: int
    hidden: tuple[int, ...]
    action_mean_clip: float
    tensors: dict[str, Tensor]

    def numpy(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.tensors.items()}

    def load_numpy(self, arrays: dict[str, np.ndarray]) -> None:
        for k, t in self.tensors.items():
            t.data = arrays[k].astype(t.data.dtype)

    @property
    def log_std(self) -> np.ndarray:
        return self.tensors["log_std"].data

    def actor_mean(self, obs: np.ndarray) -> np.ndarray:
        """Plain-numpy actor forward (rollouts do not need the graph)."""
        x = obs
        n = len(self.hidden) + 1
        for i in range(n):
            x = x @ self.tensors[f"actor_w{i}"].data + self.tensors[f"actor_b{i}"].data
            if i < n - 1:
                x = np.where(x > 0, x, np.expm1(x))
        return np.clip(x, -self.action_mean_clip, self.action_mean_clip)

    def value(self, privileged_obs: np.ndarray) -> np.ndarray:
        x = privileged_obs
        n = len(self.hidden) + 1
        for i in range(n):
            x = x @ self.tensors[f"critic_w{i}"].data + self.tensors[f"critic_b{i}"].data
            if i < n - 1:
                x = np.where(x > 0, x, np.expm1(x))
        return x[:, 0]


def init_expert(
    obs_dim: int,
    privileged_dim: int,
    act_dim: int,
    seed: int,
    hidden: tuple[int, ...] = (512, 256, 128),
    init_std: float = 1.0,
    action_mean_clip: float = 10.0,
    dtype: str = "float64",
) -> ExpertPolicy:
    rng = np.random.default_rng(seed)
    np_dtype = np.dtype(dtype)
    tensors: dict[str, Tensor] = {}

    def mlp(prefix: str, in_dim: int, out_dim: int) -> None:
        dims = [in_dim, *hidden, out_dim]
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            bound = 1.0 / math.sqrt(a)
            tensors[f"{prefix}_w{i}"] = parameter(
                rng.uniform(-bound, bound, size=(a, b)).astype(np_dtype)
            )
            tensors[f"{prefix}_b{i}"] = parameter(
                rng.uniform(-bound, bound, size=(b,)).astype(np_dtype)
            )

    mlp("actor", obs_dim, act_dim)
    mlp("critic", privileged_dim, 1)
    tensors["log_std"] = parameter(np.full(act_dim, math.log(init_std), dtype=np_dtype))
    return ExpertPolicy(obs_dim, privileged_dim, act_dim, hidden, action_mean_clip, tensors)


def _mlp_graph(policy: ExpertPolicy, prefix: str, x: Tensor) -> Tensor:
    n = len(policy.hidden) + 1
    for i in range(n):
        x = x @ policy.tensors[f"{prefix}_w{i}"] + policy.tensors[f"{prefix}_b{i}"]
        if i < n - 1:
            x = x.elu()
    return x


def gaussian_log_prob(mean: np.ndarray, log_std: np.ndarray, actions: np.ndarray) -> np.ndarray:
    var = np.exp(2.0 * log_std)
    return -0.5 * np.sum(
        (actions - mean) ** 2 / var + 2.0 * log_std + math.log(2.0 * math.pi), axis=-1
    )


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    gamma: float = 0.99,
    lam: float = 0.95,
    bootstrap_value: np.ndarray | float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over (T,) or (T, N) arrays.

    ``bootstrap_value`` is the critic value of the state after the final step
    and is used when the rollout is truncated mid-episode.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones)
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise ShapeMismatch(
            f"rewards {rewards.shape}, values {values.shape}, dones {dones.shape}"
        )
    t_len = rewards.shape[0]
    advantages = np.zeros_like(rewards)
    next_value = np.broadcast_to(np.asarray(bootstrap_value, dtype=float), rewards[0].shape)
    next_advantage = np.zeros(rewards[0].shape) if rewards.ndim > 1 else 0.0
    for t in range(t_len - 1, -1, -1):
        not_done = 1.0 - dones[t].astype(float)
        delta = rewards[t] + gamma * next_value * not_done - values[t]
        next_advantage = delta + gamma * lam * not_done * next_advantage
        advantages[t] = next_advantage
        next_value = values[t]
    return advantages, advantages + values


def _global_grad_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.betas
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            p.data = p.data - self.lr * (self.m[k] / bias1) / (
                np.sqrt(self.v[k] / bias2) + self.eps
            )


@dataclass
class RolloutBuffer:
    obs: np.ndarray  # (T, N, obs_dim)
    privileged: np.ndarray
    actions: np.ndarray  # (T, N, act_dim)
    log_probs: np.ndarray  # (T, N)
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def flatten(self):
        t, n = self.rewards.shape
        return (
            self.obs.reshape(t * n, -1),
            self.privileged.reshape(t * n, -1),
            self.actions.reshape(t * n, -1),
            self.log_probs.reshape(t * n),
            self.advantages.reshape(t * n),
            self.returns.reshape(t * n),
        )


def ppo_update(
    policy: ExpertPolicy,
    buffer: RolloutBuffer,
    cfg: PPOConfig,
    optimizer: Adam,
    rng: np.random.Generator,
) -> dict[str, float]:
    """Clipped-surrogate update; adapts the learning rate toward the KL target."""
    obs, priv, actions, logp_old, adv, returns = buffer.flatten()
    adv_std = adv.std()
    adv_norm = (adv - adv.mean()) / (adv_std + 1e-8)
    batch = obs.shape[0]
    kls, losses = [], []
    for _ in range(cfg.epochs):
        order = rng.permutation(batch)
        for start in range(0, batch, cfg.minibatch_size):
            idx = order[start : start + cfg.minibatch_size]
            dt = policy.tensors["log_std"].data.dtype
            mb_obs = Tensor(obs[idx].astype(dt))
            mb_priv = Tensor(priv[idx].astype(dt))

            mean = _mlp_graph(policy, "actor", mb_obs).clip(
                -policy.action_mean_clip, policy.action_mean_clip
            )
            log_std = policy.tensors["log_std"]
            act = Tensor(actions[idx].astype(dt))
            inv_var = (log_std * -2.0).exp()
            diff = act - mean
            logp = (
                (diff * diff * inv_var + log_std * 2.0 + math.log(2.0 * math.pi)) * -0.5
            ).sum(axis=1)
            ratio = (logp - Tensor(logp_old[idx].astype(dt))).exp()
            mb_adv = Tensor(adv_norm[idx].astype(dt))
            surrogate = minimum(
                ratio * mb_adv,
                ratio.clip(1.0 - cfg.clip_range, 1.0 + cfg.clip_range) * mb_adv,
            )
            policy_loss = -surrogate.mean()

            value = _mlp_graph(policy, "critic", mb_priv).reshape(-1)
            value_err = value - Tensor(returns[idx].astype(dt))
            value_loss = (value_err * value_err).mean() * cfg.value_coef

            entropy = (log_std + 0.5 * math.log(2.0 * math.pi * math.e)).sum()
            loss = policy_loss + value_loss - entropy * cfg.entropy_coef

            if not np.isfinite(float(loss.data)):
                raise NonFiniteLoss(f"PPO loss {float(loss.data)}")
            zero_grads(policy.tensors)
            loss.backward()
            grads = grads_of(policy.tensors)
            norm = _global_grad_norm(grads)
            if norm > cfg.max_grad_norm:
                scale = cfg.max_grad_norm / norm
                grads = {k: g * scale for k, g in grads.items()}

            with np.errstate(over="ignore"):
                log_ratio = logp.data - logp_old[idx]
                kl = float(np.mean(np.expm1(log_ratio) - log_ratio))
            kls.append(kl)
            if cfg.adaptive_lr:
                if kl > 2.0 * cfg.target_kl:
                    optimizer.lr = max(cfg.lr_bounds[0], optimizer.lr * 0.5)
                elif kl < 0.5 * cfg.target_kl:
                    optimizer.lr = min(cfg.lr_bounds[1], optimizer.lr * 2.0)
            optimizer.step(grads)
            log_std_t = policy.tensors["log_std"]
            log_std_t.data = np.clip(log_std_t.data, -4.0, 1.0)
            losses.append(float(loss.data))
    return {
        "kl": float(np.mean(kls)),
        "loss": float(np.mean(losses)),
        "lr": optimizer.lr,
    }


@dataclass
class TrainingCurve:
    rows: list[dict] = field(default_factory=list)

    def append(self, **kwargs) -> None:
        self.rows.append(kwargs)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def to_csv(self, path: str | Path) -> None:
        if not self.rows:
            return
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(self.rows[0].keys()))
            writer.writeheader()
            writer.writerows(self.rows)


def evaluate_expert(
    policy: ExpertPolicy,
    embodiment: Embodiment,
    seed: int,
    num_envs: int = 16,
    steps: int = 250,
    horizon: int = 250,
) -> tuple[float, float]:
    """Deterministic (mean-action) evaluation in a clean environment.

    Returns (mean episode reward at full penalty curriculum, mean per-step
    tracking reward).
    """
    env = SurrogateEnv(
        embodiment,
        num_envs=num_envs,
        seed=seed,
        ranges=None,
        curriculum=1.0,
        horizon=horizon,
    )
    obs = env.reset()
    returns: list[float] = []
    tracking = 0.0
    for _ in range(steps):
        actions = policy.actor_mean(obs["expert"])
        obs, rewards, done, info = env.step(actions)
        tracking += float(info["tracking_reward"].mean())
        if done.any():
            returns.extend(info["episode_return"][done].tolist())
    mean_return = float(np.mean(returns)) if returns else float("nan")
    return mean_return, tracking / steps


def train_expert(
    embodiment: Embodiment,
    cfg: PPOConfig,
    ranges: RandomizationRanges | None = None,
    progress: bool = False,
) -> tuple[ExpertPolicy, TrainingCurve, int]:
    """Train one expert; returns the best checkpoint by evaluation reward.

    Every ``eval_every`` iterations the current policy is evaluated with mean
    actions in a clean environment; the checkpoint with the highest mean
    episode reward is returned.  The curve has one row per iteration (mean
    reward, tracking reward, KL, lr, curriculum, and the latest evaluation).
    """
    cfg.check()
    if ranges is None:
        ranges = RandomizationRanges()
    env = SurrogateEnv(
        embodiment,
        num_envs=cfg.num_envs,
        seed=cfg.seed + 1,
        ranges=ranges,
        curriculum="adaptive",
        horizon=cfg.horizon,
    )
    policy = init_expert(
        env.expert_obs_dim,
        env.privileged_obs_dim,
        embodiment.joint_count,
        seed=cfg.seed,
        hidden=cfg.hidden,
        init_std=cfg.init_action_std,
        action_mean_clip=cfg.action_mean_clip,
        dtype=cfg.dtype,
    )
    optimizer = Adam(policy.tensors, lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed + 2)
    curve = TrainingCurve()

    obs = env.reset()
    best_return = -np.inf
    best_iteration = 0
    best_weights = policy.numpy()
    episode_returns: list[float] = []

    t_steps, n = cfg.steps_per_env, cfg.num_envs
    for iteration in range(cfg.iterations):
        buf_obs = np.zeros((t_steps, n, env.expert_obs_dim))
        buf_priv = np.zeros((t_steps, n, env.privileged_obs_dim))
        buf_act = np.zeros((t_steps, n, policy.act_dim))
        buf_logp = np.zeros((t_steps, n))
        buf_rew = np.zeros((t_steps, n))
        buf_val = np.zeros((t_steps, n))
        buf_done = np.zeros((t_steps, n), dtype=bool)
        tracking_sum = 0.0
        episode_returns_iter: list[float] = []

        for t in range(t_steps):
            mean = policy.actor_mean(obs["expert"])
            std = np.exp(policy.log_std)
            actions = mean + std * rng.standard_normal(mean.shape)
            logp = gaussian_log_prob(mean, policy.log_std, actions)
            values = policy.value(obs["privileged"])

            buf_obs[t] = obs["expert"]
            buf_priv[t] = obs["privileged"]
            buf_act[t] = actions
            buf_logp[t] = logp
            buf_val[t] = values

            obs, rewards, done, info = env.step(actions)
            # Bootstrap value through timeouts: they truncate, not terminate.
            timeout = info["timeout"]
            if timeout.any():
                rewards = rewards + cfg.gamma * values * timeout
            buf_rew[t] = rewards
            buf_done[t] = done
            tracking_sum += float(info["tracking_reward"].mean())
            if done.any():
                episode_returns_iter.extend(info["episode_return"][done].tolist())

        bootstrap = policy.value(obs["privileged"])
        advantages, returns = gae(
            buf_rew, buf_val, buf_done, cfg.gamma, cfg.gae_lambda, bootstrap
        )
        buffer = RolloutBuffer(
            buf_obs, buf_priv, buf_act, buf_logp, buf_rew, buf_val, buf_done,
            advantages, returns,
        )
        stats = ppo_update(policy, buffer, cfg, optimizer, rng)

        episode_returns.extend(episode_returns_iter)
        mean_return = (
            float(np.mean(episode_returns_iter))
            if episode_returns_iter
            else float(buf_rew.mean()) * cfg.horizon
        )
        if iteration % cfg.eval_every == 0 or iteration == cfg.iterations - 1:
            eval_return, eval_tracking = evaluate_expert(
                policy,
                embodiment,
                seed=cfg.seed + 3,
                num_envs=cfg.eval_envs,
                steps=cfg.eval_steps,
                horizon=cfg.eval_steps,
            )
            if eval_return > best_return:
                best_return = eval_return
                best_iteration = iteration
                best_weights = policy.numpy()
        else:
            eval_return, eval_tracking = float("nan"), float("nan")
        row = {
            "iteration": iteration,
            "mean_reward": mean_return,
            "tracking_reward": tracking_sum / t_steps,
            "eval_reward": eval_return,
            "eval_tracking": eval_tracking,
            "kl": stats["kl"],
            "lr": stats["lr"],
            "curriculum_mean": float(env.curriculum_level.mean()) / 100.0,
        }
        curve.append(**row)
        if progress:
            print(
                f"iter {iteration:4d} reward {row['mean_reward']:9.2f} "
                f"tracking {row['tracking_reward']:6.3f} eval {row['eval_reward']:9.2f} "
                f"eval_track {row['eval_tracking']:6.3f} kl {row['kl']:.4f} "
                f"lr {row['lr']:.1e} curriculum {row['curriculum_mean']:.2f}"
            )

    policy.load_numpy(best_weights)
    return policy, curve, best_iteration


def save_expert(path: str | Path, policy: ExpertPolicy) -> None:
    config = {
        "kind": "expert",
        "obs_dim": policy.obs_dim,
        "privileged_dim": policy.privileged_dim,
        "act_dim": policy.act_dim,
        "hidden": list(policy.hidden),
        "action_mean_clip": policy.action_mean_clip,
    }
    save_checkpoint(path, config, policy.numpy())


def load_expert(path: str | Path) -> ExpertPolicy:
    from .checkpoint import load_checkpoint

    config, tensors = load_checkpoint(path)
    policy = init_expert(
        config["obs_dim"],
        config["privileged_dim"],
        config["act_dim"],
        seed=0,
        hidden=tuple(config["hidden"]),
        action_mean_clip=config["action_mean_clip"],
    )
    policy.load_numpy(tensors)
    return policy
