"""Adversarial motion prior: discriminator training and style reward.

The discriminator is a scalar-logit MLP over motion features (transition
pairs by default, single states as a config fallback).  Training minimizes

    L = -E_policy[log(1 - D)] - E_ref[log D] + w_gp * E_ref[|grad_x logit|^2]

with D = sigmoid(logit).  The cross-entropy terms are computed on raw logits
via softplus for stability; the logit clip applies only when converting a
logit to a probability for the reward path.

The gradient penalty needs d/dtheta of an input-gradient norm, i.e. exact
double backprop through the MLP; it is implemented directly (forward tangent
propagation + reverse pass over the augmented graph) and pinned by
finite-difference tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import AdamState, Mlp, adam_step, clip_grads, elu, elu_prime, elu_second

REWARD_VARIANTS = ("neg_log_one_minus_d", "log_d", "neg_log_d")


class NumericalDivergence(RuntimeError):
    """Non-finite discriminator loss."""


@dataclass(frozen=True)
class DiscriminatorConfig:
    hidden: tuple[int, ...] = (128, 64)   # desk-scale; (256, 128) for fidelity runs
    grad_penalty_weight: float = 10.0
    logit_clip: float = 10.0
    reward_variant: str = "neg_log_one_minus_d"
    reward_max: float = 5.0
    pair_mode: str = "pair"               # "pair" (s_t, s_t+1) or "single" (s_t)
    learning_rate: float = 1e-3
    max_grad_norm: float = 2.0

    def __post_init__(self) -> None:
        if self.grad_penalty_weight < 0.0:
            raise ValueError("grad_penalty_weight must be >= 0")
        if self.reward_variant not in REWARD_VARIANTS:
            raise ValueError(f"reward_variant must be one of {REWARD_VARIANTS}")
        if self.pair_mode not in ("pair", "single"):
            raise ValueError("pair_mode must be 'pair' or 'single'")


class Discriminator:
    """Scalar-logit MLP plus the config that fixes its input convention."""

    def __init__(self, feature_dim: int, cfg: DiscriminatorConfig,
                 rng: np.random.Generator | None = None):
        self.cfg = cfg
        self.feature_dim = feature_dim
        in_dim = 2 * feature_dim if cfg.pair_mode == "pair" else feature_dim
        self.net = Mlp((in_dim,) + tuple(cfg.hidden) + (1,), rng=rng, final_gain=1.0)

    @property
    def input_dim(self) -> int:
        return self.net.sizes[0]

    def pair_input(self, feat_t: np.ndarray, feat_t1: np.ndarray) -> np.ndarray:
        if self.cfg.pair_mode == "pair":
            return np.concatenate([feat_t, feat_t1], axis=-1)
        return np.asarray(feat_t)

    def logits(self, x: np.ndarray) -> np.ndarray:
        y = self.net.forward(x)
        return y[..., 0] if y.ndim > 1 else y[0:1][0] if y.ndim == 1 else y

    def to_dict(self) -> dict:
        return {"feature_dim": self.feature_dim, "net": self.net.to_dict(),
                "cfg": {"hidden": list(self.cfg.hidden),
                        "grad_penalty_weight": self.cfg.grad_penalty_weight,
                        "logit_clip": self.cfg.logit_clip,
                        "reward_variant": self.cfg.reward_variant,
                        "reward_max": self.cfg.reward_max,
                        "pair_mode": self.cfg.pair_mode,
                        "learning_rate": self.cfg.learning_rate,
                        "max_grad_norm": self.cfg.max_grad_norm}}

    @staticmethod
    def from_dict(d: dict) -> "Discriminator":
        cfg = DiscriminatorConfig(hidden=tuple(d["cfg"]["hidden"]),
                                  grad_penalty_weight=d["cfg"]["grad_penalty_weight"],
                                  logit_clip=d["cfg"]["logit_clip"],
                                  reward_variant=d["cfg"]["reward_variant"],
                                  reward_max=d["cfg"]["reward_max"],
                                  pair_mode=d["cfg"]["pair_mode"],
                                  learning_rate=d["cfg"]["learning_rate"],
                                  max_grad_norm=d["cfg"]["max_grad_norm"])
        disc = Discriminator.__new__(Discriminator)
        disc.cfg = cfg
        disc.feature_dim = d["feature_dim"]
        disc.net = Mlp.from_dict(d["net"])
        return disc


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def disc_prob(disc: Discriminator, x: np.ndarray) -> np.ndarray:
    """D(x) in (0, 1): sigmoid of the logit, clipped to +/- logit_clip first."""
    l = disc.net.forward(np.asarray(x, dtype=float))
    l = np.clip(l[..., 0] if l.ndim > 1 else l[0], -disc.cfg.logit_clip,
                disc.cfg.logit_clip)
    return _sigmoid(l)


def grad_penalty(disc: Discriminator, x: np.ndarray):
    """Mean squared input-gradient norm of the logit on a batch, plus the
    exact parameter gradients of that penalty (double backprop)."""
    net = disc.net
    X = np.atleast_2d(np.asarray(x, dtype=float))
    B = X.shape[0]
    L = net.n_layers - 1  # index of the final linear layer

    # Forward with cache, then input gradients g (B, d).
    y, cache = net.forward_cache(X)
    acts, pre, _ = cache
    _, g = net.backward(cache, np.ones((B, 1)))
    gp_value = float((g * g).sum() / B)

    # Tangent forward pass along c = g.
    t = g
    s_list, t_list = [], [t]
    for k in range(L):
        s = t @ net.W[k].T
        s_list.append(s)
        t = elu_prime(pre[k]) * s
        t_list.append(t)
    # u_b = W_L . t_L,b ; total U = sum_b u_b, dGP/dtheta = (2/B) dU/dtheta.
    dW = [np.zeros_like(w) for w in net.W]
    db = [np.zeros_like(b) for b in net.b]
    dW[L] = t_list[L].sum(axis=0, keepdims=True)
    p = np.repeat(net.W[L], B, axis=0)       # (B, n_L)
    q = np.zeros_like(p)
    for k in range(L - 1, -1, -1):
        mk = elu_prime(pre[k]) * p
        rk = elu_second(pre[k]) * s_list[k] * p + elu_prime(pre[k]) * q
        dW[k] = mk.T @ t_list[k] + rk.T @ acts[k]
        db[k] = rk.sum(axis=0)
        p = mk @ net.W[k]
        q = rk @ net.W[k]
    scale = 2.0 / B
    grads = [scale * d for d in dW] + [scale * d for d in db]
    return gp_value, grads


def disc_loss(disc: Discriminator, policy_batch: np.ndarray, ref_batch: np.ndarray,
              with_grads: bool = False):
    """Cross-entropy on both batches plus the weighted gradient penalty.

    Returns (loss, report) or (loss, report, grads) when with_grads is set.
    """
    P = np.atleast_2d(np.asarray(policy_batch, dtype=float))
    R = np.atleast_2d(np.asarray(ref_batch, dtype=float))
    if P.shape[0] == 0 or R.shape[0] == 0:
        raise ValueError("batches must be non-empty")
    yp, cache_p = disc.net.forward_cache(P)
    yr, cache_r = disc.net.forward_cache(R)
    lp, lr = yp[:, 0], yr[:, 0]
    # -log(1 - sigmoid(l)) = softplus(l);  -log sigmoid(l) = softplus(-l)
    loss_policy = float(_softplus(lp).mean())
    loss_ref = float(_softplus(-lr).mean())
    w = disc.cfg.grad_penalty_weight
    gp_val, gp_grads = (0.0, None)
    if w > 0.0 or with_grads:
        gp_val, gp_grads = grad_penalty(disc, R)
    loss = loss_policy + loss_ref + w * gp_val
    dp = _sigmoid(lp)
    dr = _sigmoid(lr)
    report = {
        "loss": loss, "loss_policy": loss_policy, "loss_ref": loss_ref,
        "grad_penalty": gp_val,
        "mean_d_policy": float(dp.mean()), "mean_d_ref": float(dr.mean()),
        "accuracy": float(0.5 * ((dp < 0.5).mean() + (dr > 0.5).mean())),
    }
    if not with_grads:
        return loss, report
    up_p = (dp / P.shape[0])[:, None]
    up_r = (-_sigmoid(-lr) / R.shape[0])[:, None]
    grads_p, _ = disc.net.backward(cache_p, up_p)
    grads_r, _ = disc.net.backward(cache_r, up_r)
    grads = [a + b for a, b in zip(grads_p, grads_r)]
    if w > 0.0 and gp_grads is not None:
        grads = [a + w * b for a, b in zip(grads, gp_grads)]
    return loss, report, grads


def style_reward(d: float, variant: str = "neg_log_one_minus_d",
                 r_max: float = 5.0) -> float:
    """Map a discriminator probability to the per-step style reward."""
    d = float(d)
    if not 0.0 < d < 1.0:
        raise ValueError(f"d must be in (0, 1), got {d}")
    if variant == "neg_log_one_minus_d":
        return float(np.clip(-math.log1p(-d), 0.0, r_max))
    if variant == "log_d":
        return math.log(d)
    if variant == "neg_log_d":
        return -math.log(d)
    raise ValueError(f"unknown reward variant {variant!r}")


def style_reward_batch(disc: Discriminator, x: np.ndarray) -> np.ndarray:
    d = np.atleast_1d(disc_prob(disc, x))
    v = disc.cfg.reward_variant
    if v == "neg_log_one_minus_d":
        return np.clip(-np.log1p(-d), 0.0, disc.cfg.reward_max)
    if v == "log_d":
        return np.log(d)
    return -np.log(d)


def disc_update(disc: Discriminator, policy_batch: np.ndarray, ref_batch: np.ndarray,
                opt: AdamState) -> dict:
    """One Adam step on the discriminator loss; returns the loss report."""
    loss, report, grads = disc_loss(disc, policy_batch, ref_batch, with_grads=True)
    if not math.isfinite(loss):
        raise NumericalDivergence(f"discriminator loss is {loss}")
    grads = clip_grads(grads, disc.cfg.max_grad_norm)
    adam_step(disc.net.params(), grads, opt)
    return report
