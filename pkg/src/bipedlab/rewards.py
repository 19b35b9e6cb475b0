"""Grouped reward components and their aggregation.

Every component is an exponential kernel exp(-err^2 / sigma^2), so each lies
in (0, 1] and equals 1 at zero error.  Components are grouped as

    motion  = joint rate smoothness
    safety  = mean(foot stumble, foot orientation, foot height)
    task    = mean(linear velocity, angular velocity tracking)

and the total adds the adversarial style term:

    total = w_motion * motion + w_task * task + w_safety * safety + w_style * style

Group weights are ordered (motion, task, safety) to match the experiment
table layout.  In planar mode the lateral/yaw tracking terms are identically
1 because both commands and the corresponding velocities are zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sim import ContactState


@dataclass(frozen=True)
class RewardConfig:
    sigma_joint_rate: float = 2.0     # rad/s of target motion, after ctrl-freq scaling
    sigma_stumble: float = 150.0      # N
    sigma_foot_orient: float = 0.4    # dimensionless normal mismatch
    sigma_foot_height: float = 0.05   # m
    sigma_lin_vel: float = 0.25       # m/s
    sigma_ang_vel: float = 0.25       # rad/s
    w_motion: float = 0.35
    w_task: float = 0.35
    w_safety: float = 0.40
    w_style: float = 0.5
    f_max: float = 350.0              # N, contact force threshold
    h_ref: float = 0.05               # m, swing-foot reference height
    n_ref: tuple[float, float, float] = (0.0, 0.0, 1.0)
    stumble_variant: str = "one_sided"   # or "literal" for the published formula
    # Per-component enable mask for ablations; disabled components report 1.0.
    disable: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for name in ("sigma_joint_rate", "sigma_stumble", "sigma_foot_orient",
                     "sigma_foot_height", "sigma_lin_vel", "sigma_ang_vel"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")
        for name in ("w_motion", "w_task", "w_safety", "w_style"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if self.stumble_variant not in ("one_sided", "literal"):
            raise ValueError(f"unknown stumble_variant {self.stumble_variant!r}")

    @property
    def group_weights(self) -> tuple[float, float, float]:
        return (self.w_motion, self.w_task, self.w_safety)


COMPONENT_NAMES = ("joint_rate", "stumble", "foot_orient", "foot_height",
                   "lin_vel", "ang_vel")


@dataclass
class RewardBreakdown:
    components: dict            # name -> value in (0, 1]
    motion: float
    task: float
    safety: float
    style: float
    total: float

    @property
    def groups(self) -> tuple[float, float, float]:
        return (self.motion, self.task, self.safety)


def exp_kernel(err: float, sigma: float) -> float:
    """exp(-err^2 / sigma^2); the shared shape of every component."""
    return math.exp(-(err * err) / (sigma * sigma))


def joint_rate_reward(prev_targets: np.ndarray, targets: np.ndarray,
                      ctrl_freq: float, sigma: float) -> float:
    """Smoothness: L2 norm of consecutive target differences scaled by control rate."""
    prev_targets = np.asarray(prev_targets, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if prev_targets.shape != targets.shape:
        raise ValueError("target vectors must have equal length")
    err = float(np.linalg.norm(targets - prev_targets)) * ctrl_freq
    return exp_kernel(err, sigma)


def stumble_kernel(force: float, f_max: float, sigma: float,
                   variant: str = "one_sided") -> float:
    """Contact-force kernel.

    The one-sided default only penalizes force above f_max (an idle foot is
    fine); the literal variant keeps the published symmetric form, which
    peaks at exactly f_max.
    """
    if force < 0.0:
        raise ValueError("contact force must be >= 0")
    if variant == "literal":
        return exp_kernel(f_max - force, sigma)
    return exp_kernel(max(0.0, force - f_max), sigma)


def foot_stumble_reward(contact: ContactState, f_max: float, sigma: float,
                        variant: str = "one_sided") -> float:
    """Per-foot impact kernel on the peak contact force over the control step."""
    f = max(contact.peak_force, contact.force_magnitude)
    return stumble_kernel(f, f_max, sigma, variant)


def foot_orientation_reward(foot_normal: np.ndarray, n_ref: np.ndarray,
                            sigma: float) -> float:
    """Keeps the sole flat: squared mismatch of the foot normal vs reference."""
    d = np.asarray(foot_normal, dtype=float) - np.asarray(n_ref, dtype=float)
    err_sq = float(d @ d)
    return math.exp(-err_sq / (sigma * sigma))


def foot_height_reward(h_feet: float, h_ref: float, sigma: float) -> float:
    """Swing-foot height kernel around the reference clearance."""
    return exp_kernel(h_feet - h_ref, sigma)


def lin_vel_reward(v_cmd: float, v_base: float, sigma: float) -> float:
    return exp_kernel(v_cmd - v_base, sigma)


def ang_vel_reward(w_cmd: float, w_base: float, sigma: float) -> float:
    return exp_kernel(w_cmd - w_base, sigma)


def total_reward(components: dict, cfg: RewardConfig, r_style: float) -> RewardBreakdown:
    """Group aggregation; disabled components are reported as 1.0 (no signal)."""
    comp = dict(components)
    for name in COMPONENT_NAMES:
        if name not in comp:
            raise ValueError(f"missing component {name!r}")
        if name in cfg.disable:
            comp[name] = 1.0
    motion = comp["joint_rate"]
    safety = (comp["stumble"] + comp["foot_orient"] + comp["foot_height"]) / 3.0
    task = (comp["lin_vel"] + comp["ang_vel"]) / 2.0
    total = (cfg.w_motion * motion + cfg.w_task * task + cfg.w_safety * safety
             + cfg.w_style * r_style)
    return RewardBreakdown(components=comp, motion=motion, task=task,
                           safety=safety, style=r_style, total=total)


# ---------------------------------------------------------------------------
# Per-step assembly from simulator state
# ---------------------------------------------------------------------------


def foot_world_normal(base_pitch: float, q: np.ndarray, joint_slice: slice) -> np.ndarray:
    """World normal of a foot given its leg joint angles (flat foot => (0,0,1))."""
    a = base_pitch + float(np.sum(q[joint_slice]))
    return np.array([-math.sin(a), 0.0, math.cos(a)])


def step_components(state, prev_targets: np.ndarray, targets: np.ndarray,
                    cmd, cfg: RewardConfig, ctrl_freq: float,
                    foot_heights: dict | None = None) -> dict:
    """Assemble all six component values for one control step.

    `state` is the post-step SimState; foot_heights maps foot name to the
    height of its lowest contact point (used for the swing-height kernel; a
    foot in contact scores 1.0 since the ground pins it).
    """
    comp = {}
    comp["joint_rate"] = joint_rate_reward(prev_targets, targets, ctrl_freq,
                                           cfg.sigma_joint_rate)
    stumbles, orients, heights = [], [], []
    n_ref = np.asarray(cfg.n_ref, dtype=float)
    leg_slices = {"l_foot": slice(0, 3), "r_foot": slice(3, 6)}
    for foot in ("l_foot", "r_foot"):
        contact = state.contacts.get(foot)
        if contact is None:
            contact = ContactState(False, [], 0.0, 0.0)
        stumbles.append(foot_stumble_reward(contact, cfg.f_max, cfg.sigma_stumble,
                                            cfg.stumble_variant))
        orients.append(foot_orientation_reward(
            foot_world_normal(state.base_pitch, state.q, leg_slices[foot]),
            n_ref, cfg.sigma_foot_orient))
        if contact.in_contact:
            heights.append(1.0)
        else:
            h = 0.0 if foot_heights is None else foot_heights.get(foot, 0.0)
            heights.append(foot_height_reward(h, cfg.h_ref, cfg.sigma_foot_height))
    comp["stumble"] = float(np.mean(stumbles))
    comp["foot_orient"] = float(np.mean(orients))
    comp["foot_height"] = float(np.mean(heights))
    # Velocity tracking on the commanded planar components (body-frame forward).
    c, s = math.cos(state.base_pitch), math.sin(state.base_pitch)
    vx_body = c * state.base_vel[0] + s * state.base_vel[1]
    comp["lin_vel"] = lin_vel_reward(cmd.vx, vx_body, cfg.sigma_lin_vel)
    comp["ang_vel"] = ang_vel_reward(cmd.wz, 0.0, cfg.sigma_ang_vel)
    return comp
