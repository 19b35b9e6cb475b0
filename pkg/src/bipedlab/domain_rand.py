"""Domain randomization: per-episode physics draws, observation noise, pushes.

Ranges follow the published randomization table: friction [0.2, 1.1], base
mass +/-1.5 kg, PD gain multipliers [0.75, 1.13], a 4-control-step actuator
lag, and pushes of up to 0.5 m/s / 0.2 rad/s every 4 s.  All sampling is
uniform within the stated ranges and flows through explicit RNG handles so
parallel environments use independent streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .model import ObservationVector


@dataclass(frozen=True)
class ObsNoiseScales:
    """Per-block additive Gaussian noise std; the command block is never noised."""

    v_base: float = 0.05    # m/s
    w_base: float = 0.10    # rad/s
    q_rel: float = 0.01     # rad
    qd: float = 0.50        # rad/s
    g_proj: float = 0.02    # re-normalized after perturbation
    a_prev: float = 0.0     # internal signal, noiseless by default
    h_base: float = 0.01    # m

    def scaled(self, factor: float) -> "ObsNoiseScales":
        return ObsNoiseScales(*(factor * v for v in
                                (self.v_base, self.w_base, self.q_rel, self.qd,
                                 self.g_proj, self.a_prev, self.h_base)))


@dataclass(frozen=True)
class DomainRandConfig:
    friction_range: tuple[float, float] = (0.2, 1.1)
    base_mass_delta: float = 1.5            # +/- kg on the torso link
    pd_gain_mult_range: tuple[float, float] = (0.75, 1.13)
    actuator_lag_steps: int = 4             # control timesteps
    push_interval: float = 4.0              # s; math.inf disables pushes
    push_lin_max: float = 0.5               # m/s
    push_ang_max: float = 0.2               # rad/s
    obs_noise: ObsNoiseScales = field(default_factory=ObsNoiseScales)
    head_mass_jitter: float = 0.0           # optional extra head-mass range, off by default

    def __post_init__(self) -> None:
        for name, (lo, hi) in (("friction_range", self.friction_range),
                               ("pd_gain_mult_range", self.pd_gain_mult_range)):
            if not lo <= hi:
                raise ValueError(f"{name} must be ordered, got ({lo}, {hi})")
        if self.actuator_lag_steps < 0:
            raise ValueError("actuator_lag_steps must be >= 0")
        if self.push_interval <= 0.0:
            raise ValueError("push_interval must be > 0")


class LagBuffer:
    """FIFO of the last `lag` actions; push() returns the action from lag steps ago."""

    def __init__(self, lag: int, fill: np.ndarray):
        self.lag = int(lag)
        self.fill = np.asarray(fill, dtype=float).copy()
        self.buf: list[np.ndarray] = []

    def push(self, action: np.ndarray) -> np.ndarray:
        if self.lag == 0:
            return np.asarray(action, dtype=float)
        self.buf.append(np.asarray(action, dtype=float).copy())
        if len(self.buf) > self.lag:
            return self.buf.pop(0)
        return self.fill

    def to_dict(self) -> dict:
        return {"lag": self.lag, "fill": self.fill.tolist(),
                "buf": [a.tolist() for a in self.buf]}

    @staticmethod
    def from_dict(d: dict) -> "LagBuffer":
        lb = LagBuffer(d["lag"], np.array(d["fill"]))
        lb.buf = [np.array(a) for a in d["buf"]]
        return lb


@dataclass
class EpisodeRandomization:
    """One sampled draw of the randomization table, fixed for an episode."""

    friction: float
    base_mass_delta: float
    kp_mult: np.ndarray        # (n_j,)
    kd_mult: np.ndarray        # (n_j,)
    lag_steps: int
    lag_buffer: LagBuffer
    next_push_time: float
    head_mass_jitter: float = 0.0

    @staticmethod
    def nominal(n_j: int, fill: np.ndarray, friction: float = 0.8) -> "EpisodeRandomization":
        """Identity draw: nominal dynamics, no lag, no pushes."""
        return EpisodeRandomization(
            friction=friction, base_mass_delta=0.0,
            kp_mult=np.ones(n_j), kd_mult=np.ones(n_j),
            lag_steps=0, lag_buffer=LagBuffer(0, fill),
            next_push_time=math.inf,
        )

    def to_dict(self) -> dict:
        return {
            "friction": self.friction, "base_mass_delta": self.base_mass_delta,
            "kp_mult": self.kp_mult.tolist(), "kd_mult": self.kd_mult.tolist(),
            "lag_steps": self.lag_steps, "lag_buffer": self.lag_buffer.to_dict(),
            "next_push_time": self.next_push_time,
            "head_mass_jitter": self.head_mass_jitter,
        }

    @staticmethod
    def from_dict(d: dict) -> "EpisodeRandomization":
        return EpisodeRandomization(
            friction=d["friction"], base_mass_delta=d["base_mass_delta"],
            kp_mult=np.array(d["kp_mult"]), kd_mult=np.array(d["kd_mult"]),
            lag_steps=d["lag_steps"], lag_buffer=LagBuffer.from_dict(d["lag_buffer"]),
            next_push_time=d["next_push_time"],
            head_mass_jitter=d.get("head_mass_jitter", 0.0),
        )


def sample_randomization(cfg: DomainRandConfig, rng: np.random.Generator, n_j: int,
                         fill: np.ndarray, t0: float = 0.0) -> EpisodeRandomization:
    """Uniform draw within every configured range; deterministic under a seed.

    Gain multipliers are independent per joint.  The first push time is
    uniform in (t0, t0 + interval] so push phase varies across episodes.
    """
    flo, fhi = cfg.friction_range
    glo, ghi = cfg.pd_gain_mult_range
    friction = rng.uniform(flo, fhi)
    mass_delta = rng.uniform(-cfg.base_mass_delta, cfg.base_mass_delta)
    kp_mult = rng.uniform(glo, ghi, size=n_j)
    kd_mult = rng.uniform(glo, ghi, size=n_j)
    head_jitter = (rng.uniform(-cfg.head_mass_jitter, cfg.head_mass_jitter)
                   if cfg.head_mass_jitter > 0.0 else 0.0)
    if math.isinf(cfg.push_interval):
        next_push = math.inf
    else:
        next_push = t0 + rng.uniform(0.0, cfg.push_interval)
    return EpisodeRandomization(
        friction=friction, base_mass_delta=mass_delta,
        kp_mult=kp_mult, kd_mult=kd_mult,
        lag_steps=cfg.actuator_lag_steps,
        lag_buffer=LagBuffer(cfg.actuator_lag_steps, fill),
        next_push_time=next_push, head_mass_jitter=head_jitter,
    )


def noisy_observation(obs: ObservationVector, scales: ObsNoiseScales,
                      rng: np.random.Generator) -> ObservationVector:
    """Additive zero-mean Gaussian noise per block; g_proj is re-normalized.

    The command block is passed through untouched.
    """
    g = obs.g_proj + scales.g_proj * rng.standard_normal(3)
    norm = np.linalg.norm(g)
    g = g / norm if norm > 1e-12 else np.array([0.0, 0.0, -1.0])
    return ObservationVector(
        v_base=obs.v_base + scales.v_base * rng.standard_normal(3),
        w_base=obs.w_base + scales.w_base * rng.standard_normal(3),
        q_rel=obs.q_rel + scales.q_rel * rng.standard_normal(obs.q_rel.shape),
        qd=obs.qd + scales.qd * rng.standard_normal(obs.qd.shape),
        g_proj=g,
        a_prev=obs.a_prev + scales.a_prev * rng.standard_normal(obs.a_prev.shape),
        h_base=obs.h_base + scales.h_base * rng.standard_normal(),
        cmd=obs.cmd.copy(),
    )


def push_scheduler(state, rand: EpisodeRandomization, rng: np.random.Generator,
                   cfg: DomainRandConfig) -> Optional[tuple[np.ndarray, float]]:
    """Emit (dv, dw) whenever the clock crosses the next scheduled push.

    Direction is uniform on the planar circle, magnitude uniform up to the
    caps; dw is sign-and-magnitude uniform.  Advances the schedule in place.
    """
    if state.t + 1e-12 < rand.next_push_time:
        return None
    angle = rng.uniform(0.0, 2.0 * math.pi)
    mag = rng.uniform(0.0, cfg.push_lin_max)
    dv = mag * np.array([math.cos(angle), math.sin(angle)])
    dw = rng.uniform(-cfg.push_ang_max, cfg.push_ang_max)
    rand.next_push_time += cfg.push_interval
    return dv, dw
