"""Clipped-surrogate policy optimization: Gaussian policy, GAE, minibatch updates.

The policy outputs a mean action from an MLP plus a state-independent learned
log-std per dimension; raw actions map to joint targets in the environment.
All losses and their gradients are hand-assembled on top of the nn module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import AdamState, Mlp, adam_step, clip_grads


class NumericalDivergence(RuntimeError):
    """Non-finite optimization loss; the run aborts with its checkpoint intact."""


@dataclass
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 5
    minibatches: int = 4
    horizon: int = 32               # steps per env per iteration
    n_envs: int = 64
    lr_policy: float = 3e-4
    lr_critic: float = 1e-3
    lr_disc: float = 1e-3
    entropy_coef: float = 5e-3
    value_coef: float = 0.5
    max_grad_norm: float = 1.0
    total_steps: int = 1_000_000    # environment steps of training budget
    policy_hidden: tuple[int, ...] = (256, 128, 64)
    critic_hidden: tuple[int, ...] = (128, 64)
    log_std_init: float = -1.0
    action_scale: float = 0.5       # rad of joint-target authority per unit action
    disc_updates: int = 2           # discriminator steps per iteration
    disc_batch: int = 256

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must be in [0, 1]")
        if self.clip_eps <= 0.0:
            raise ValueError("clip_eps must be > 0")

    @property
    def iterations(self) -> int:
        return max(1, self.total_steps // (self.horizon * self.n_envs))


LOG_2PI = math.log(2.0 * math.pi)


class GaussianPolicy:
    """MLP mean + learned state-independent log-std."""

    def __init__(self, obs_dim: int, act_dim: int, hidden, rng: np.random.Generator,
                 log_std_init: float = -1.0):
        self.mean_net = Mlp((obs_dim,) + tuple(hidden) + (act_dim,), rng=rng,
                            final_gain=0.01)
        self.log_std = np.full(act_dim, float(log_std_init))

    @property
    def act_dim(self) -> int:
        return len(self.log_std)

    def params(self) -> list[np.ndarray]:
        return self.mean_net.params() + [self.log_std]

    def mean(self, obs: np.ndarray) -> np.ndarray:
        return self.mean_net.forward(obs)

    def act(self, obs: np.ndarray, rng: np.random.Generator):
        """Sample actions; returns (action, log_prob, mean)."""
        mu = self.mean_net.forward(obs)
        std = np.exp(self.log_std)
        noise = rng.standard_normal(mu.shape)
        a = mu + std * noise
        logp = self.log_prob_given_mean(mu, a)
        return a, logp, mu

    def log_prob_given_mean(self, mu: np.ndarray, a: np.ndarray) -> np.ndarray:
        std = np.exp(self.log_std)
        z = (a - mu) / std
        return -0.5 * (z * z).sum(axis=-1) - self.log_std.sum() - 0.5 * self.act_dim * LOG_2PI

    def log_prob(self, obs: np.ndarray, a: np.ndarray) -> np.ndarray:
        return self.log_prob_given_mean(self.mean_net.forward(obs), a)

    def entropy(self) -> float:
        return float(self.log_std.sum() + 0.5 * self.act_dim * (1.0 + LOG_2PI))

    def copy(self) -> "GaussianPolicy":
        dup = GaussianPolicy.__new__(GaussianPolicy)
        dup.mean_net = self.mean_net.copy()
        dup.log_std = self.log_std.copy()
        return dup

    def to_dict(self) -> dict:
        return {"mean_net": self.mean_net.to_dict(), "log_std": self.log_std.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "GaussianPolicy":
        p = GaussianPolicy.__new__(GaussianPolicy)
        p.mean_net = Mlp.from_dict(d["mean_net"])
        p.log_std = np.array(d["log_std"], dtype=float)
        return p


class RolloutBuffer:
    """Fixed-capacity (horizon, n_envs) storage with GAE post-processing."""

    def __init__(self, horizon: int, n_envs: int, obs_dim: int, act_dim: int,
                 feat_dim: int):
        self.horizon, self.n_envs = horizon, n_envs
        T, N = horizon, n_envs
        self.obs = np.zeros((T, N, obs_dim))
        self.actions = np.zeros((T, N, act_dim))
        self.logp = np.zeros((T, N))
        self.values = np.zeros((T, N))
        self.rewards = np.zeros((T, N))
        self.dones = np.zeros((T, N))
        self.style = np.zeros((T, N))
        self.groups = np.zeros((T, N, 3))       # motion, task, safety per step
        self.feat_t = np.zeros((T, N, feat_dim))
        self.feat_t1 = np.zeros((T, N, feat_dim))
        self.bootstrap = np.zeros(N)
        self.advantages = np.zeros((T, N))
        self.returns = np.zeros((T, N))

    @property
    def size(self) -> int:
        return self.horizon * self.n_envs

    def flat(self, arr: np.ndarray) -> np.ndarray:
        return arr.reshape(self.size, *arr.shape[2:])


def gae_advantages(buffer: RolloutBuffer, gamma: float, lam: float) -> RolloutBuffer:
    """Standard GAE(lambda) respecting done boundaries; raw advantages.

    Timeout bootstrapping is folded into the reward at collection time, so a
    done step simply truncates the recursion here.
    """
    T = buffer.horizon
    next_value = buffer.bootstrap
    next_adv = np.zeros(buffer.n_envs)
    for t in range(T - 1, -1, -1):
        not_done = 1.0 - buffer.dones[t]
        delta = buffer.rewards[t] + gamma * next_value * not_done - buffer.values[t]
        next_adv = delta + gamma * lam * not_done * next_adv
        buffer.advantages[t] = next_adv
        next_value = buffer.values[t]
    buffer.returns = buffer.advantages + buffer.values
    return buffer


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def surrogate_and_grad(ratio: np.ndarray, adv: np.ndarray, clip_eps: float):
    """Clipped surrogate objective (to maximize) and d(objective)/d(log pi).

    The gradient is zero exactly on clipped samples, which is what makes the
    hand-built single-sample clipping test pass identically.
    """
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    surr = np.minimum(ratio * adv, clipped * adv)
    active = np.where(adv >= 0.0, ratio <= 1.0 + clip_eps, ratio >= 1.0 - clip_eps)
    dsurr_dlogp = np.where(active, ratio * adv, 0.0)
    return surr, dsurr_dlogp


def ppo_update(policy: GaussianPolicy, critic: Mlp, buffer: RolloutBuffer,
               cfg: PpoConfig, opt_policy: AdamState, opt_critic: AdamState,
               rng: np.random.Generator) -> dict:
    """Minibatched clipped-surrogate + value regression + entropy bonus."""
    obs = buffer.flat(buffer.obs)
    actions = buffer.flat(buffer.actions)
    logp_old = buffer.flat(buffer.logp)
    adv = normalize_advantages(buffer.flat(buffer.advantages))
    returns = buffer.flat(buffer.returns)
    n = len(obs)
    mb = max(1, n // cfg.minibatches)
    pol_losses, val_losses, clip_fracs = [], [], []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, mb):
            idx = perm[start:start + mb]
            o, a, lp0, ad, ret = obs[idx], actions[idx], logp_old[idx], adv[idx], returns[idx]
            B = len(idx)

            mu, cache = policy.mean_net.forward_cache(o)
            std = np.exp(policy.log_std)
            z = (a - mu) / std
            logp = -0.5 * (z * z).sum(axis=1) - policy.log_std.sum() \
                   - 0.5 * policy.act_dim * LOG_2PI
            ratio = np.exp(logp - lp0)
            surr, dsurr_dlogp = surrogate_and_grad(ratio, ad, cfg.clip_eps)
            pol_loss = -surr.mean()
            # d(-mean surr)/dlogp, then chain to mean-net outputs and log_std.
            dlogp = -dsurr_dlogp / B
            dmu = dlogp[:, None] * (z / std)
            grads_mu, _ = policy.mean_net.backward(cache, dmu)
            dlogstd = (dlogp[:, None] * (z * z - 1.0)).sum(axis=0)
            dlogstd -= cfg.entropy_coef * np.ones_like(policy.log_std)  # maximize entropy
            grads_pol = grads_mu + [dlogstd]
            grads_pol = clip_grads(grads_pol, cfg.max_grad_norm)
            if not all(np.all(np.isfinite(g)) for g in grads_pol):
                raise NumericalDivergence("non-finite policy gradient")
            adam_step(policy.params(), grads_pol, opt_policy)

            v, vcache = critic.forward_cache(o)
            verr = v[:, 0] - ret
            val_loss = 0.5 * float((verr * verr).mean())
            gv, _ = critic.backward(vcache, (cfg.value_coef * verr / B)[:, None])
            gv = clip_grads(gv, cfg.max_grad_norm)
            if not all(np.all(np.isfinite(g)) for g in gv):
                raise NumericalDivergence("non-finite critic gradient")
            adam_step(critic.params(), gv, opt_critic)

            pol_losses.append(float(pol_loss))
            val_losses.append(val_loss)
            clip_fracs.append(float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)))
    return {
        "policy_loss": float(np.mean(pol_losses)),
        "value_loss": float(np.mean(val_losses)),
        "clip_fraction": float(np.mean(clip_fracs)),
        "entropy": policy.entropy(),
    }
