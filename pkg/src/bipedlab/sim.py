"""Planar biped simulator: PD joint control, ground contact, pushes, termination.

The policy runs at the control rate (default 50 Hz); each control step
advances `decimation` physics substeps with the PD target held (the target
may be a lagged action when actuator delay randomization is active).  All
state lives in SimState; step() is a function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Optional

import numpy as np

from . import dynamics
from .model import ActionVector, RobotModel

if TYPE_CHECKING:
    from .domain_rand import EpisodeRandomization


class NumericalDivergence(RuntimeError):
    """Integrator blow-up: non-finite state or runaway base velocity."""


class PushLimitError(ValueError):
    """A requested push exceeds the configured velocity caps."""


@dataclass
class ContactState:
    """Per-foot ground contact summary at the end of a control step."""

    in_contact: bool
    points: list              # [(x, z), ...] of active contact points
    normal_force: float       # N, sum over the foot's points
    tangential_force: float   # N, signed sum
    peak_force: float = 0.0   # N, peak total force magnitude over the last control step

    def __post_init__(self) -> None:
        if self.normal_force < 0.0:
            raise ValueError("normal_force must be >= 0")
        if bool(self.points) != self.in_contact:
            raise ValueError("points must be empty iff not in contact")

    @property
    def force_magnitude(self) -> float:
        return math.hypot(self.normal_force, self.tangential_force)


@dataclass
class SimState:
    """Generalized coordinates/velocities, contact state and episode clock."""

    base_pos: np.ndarray        # (2,) x, z
    base_pitch: float
    q: np.ndarray               # (n_j,)
    base_vel: np.ndarray        # (2,)
    base_pitch_rate: float
    qd: np.ndarray              # (n_j,)
    t: float = 0.0
    contacts: dict = field(default_factory=dict)   # {"l_foot": ContactState, "r_foot": ...}
    tau: Optional[np.ndarray] = None               # applied torques at the last substep
    tau_abs_max: Optional[np.ndarray] = None       # per-joint |tau| high-water mark
    anchor_x: Optional[np.ndarray] = None          # stiction anchors, one per contact point
    anchor_on: Optional[np.ndarray] = None

    def qpos(self) -> np.ndarray:
        return np.concatenate([self.base_pos, [self.base_pitch], self.q])

    def qvel(self) -> np.ndarray:
        return np.concatenate([self.base_vel, [self.base_pitch_rate], self.qd])

    @staticmethod
    def from_arrays(qpos: np.ndarray, qvel: np.ndarray, t: float = 0.0) -> "SimState":
        return SimState(
            base_pos=qpos[:2].copy(), base_pitch=float(qpos[2]), q=qpos[3:].copy(),
            base_vel=qvel[:2].copy(), base_pitch_rate=float(qvel[2]), qd=qvel[3:].copy(),
            t=t,
        )

    def anchors(self, nc: int) -> tuple[np.ndarray, np.ndarray]:
        if self.anchor_x is None or len(self.anchor_x) != nc:
            return np.zeros(nc), np.zeros(nc, dtype=np.int64)
        return self.anchor_x, self.anchor_on

    def copy(self) -> "SimState":
        return replace(self, base_pos=self.base_pos.copy(), q=self.q.copy(),
                       base_vel=self.base_vel.copy(), qd=self.qd.copy(),
                       contacts=dict(self.contacts))


@dataclass(frozen=True)
class SimConfig:
    """Integrator, contact and episode parameters."""

    dt_sim: float = 1e-3
    decimation: int = 20            # physics substeps per policy step (0.02 s control period)
    ground_friction: float = 0.8    # nominal mu when randomization is off
    contact_stiffness: float = 5e4  # N/m per contact point
    contact_damping: float = 400.0  # N s/m
    tangential_stiffness: float = 2e4   # N/m stiction spring
    tangential_damping: float = 200.0
    gravity: float = 9.81
    armature: float = 0.05          # reflected rotor inertia added per joint, kg m^2
    episode_horizon: float = 20.0   # s
    fall_height_frac: float = 0.55  # Fall when base height < frac * standing height
    fall_pitch: float = 1.0         # rad
    push_lin_max: float = 0.5       # m/s, cap for apply_push
    push_ang_max: float = 0.2       # rad/s

    def __post_init__(self) -> None:
        if self.dt_sim <= 0.0:
            raise ValueError("dt_sim must be > 0")
        if self.decimation < 1:
            raise ValueError("decimation must be >= 1")

    @property
    def control_dt(self) -> float:
        return self.dt_sim * self.decimation

    @property
    def control_freq(self) -> float:
        return 1.0 / self.control_dt


class TerminationReason:
    FALL = "fall"
    TIMEOUT = "timeout"


def compute_pd_torque(q_target: float, q: float, qd_target: float, qd: float,
                      spec) -> float:
    """Torque-limited PD law: clamp(kp (q* - q) + kd (qd* - qd), +/- limit)."""
    tau = spec.kp * (q_target - q) + spec.kd * (qd_target - qd)
    return float(np.clip(tau, -spec.torque_limit, spec.torque_limit))


def standing_state(model: RobotModel, clearance: float = 0.0) -> SimState:
    """At-rest default pose with both soles touching the ground (plus clearance)."""
    nj = model.n_j
    return SimState(
        base_pos=np.array([0.0, model.standing_base_height() + clearance]),
        base_pitch=0.0, q=model.q_default.copy(),
        base_vel=np.zeros(2), base_pitch_rate=0.0, qd=np.zeros(nj),
    )


def _effective_gains(model: RobotModel, rand: "EpisodeRandomization | None"):
    kp = np.array([j.kp for j in model.joints])
    kd = np.array([j.kd for j in model.joints])
    if rand is not None:
        kp = kp * rand.kp_mult
        kd = kd * rand.kd_mult
    return kp, kd


def step(state: SimState, action: ActionVector, cfg: SimConfig, model: RobotModel,
         rand: "EpisodeRandomization | None" = None,
         chain: dynamics.Chain | None = None) -> SimState:
    """Advance one control period (decimation substeps) under a PD-held action.

    When `rand` is given, its actuator-lag buffer delays the effective target,
    and its friction / gain / mass draws replace the nominal values.  Passing
    a precompiled `chain` (already carrying any mass perturbation) skips the
    per-call compile; rollout code caches one per episode.
    """
    act = action.clamped(model)
    if rand is not None:
        effective = rand.lag_buffer.push(act.q_target)
    else:
        effective = act.q_target
    if chain is None:
        chain = chain_for_episode(model, rand)
    mu = cfg.ground_friction if rand is None else rand.friction
    kp, kd = _effective_gains(model, rand)
    tau_lim = np.array([j.torque_limit for j in model.joints])
    armature = np.full(model.n_j, cfg.armature)
    anchor_x, anchor_on = state.anchors(len(chain.cpt_link))

    (qp, qv, tau_max, tau_last, cp_pos, cp_f, cp_fn, fn_peak, link_f_peak,
     anchor_x, anchor_on, ok) = dynamics.step_kernel(
        state.qpos(), state.qvel(), cfg.decimation, cfg.dt_sim,
        chain.parent, chain.anchor, chain.com, chain.mass, chain.inertia,
        chain.cpt_link, chain.cpt_pos,
        effective, kp, kd, tau_lim, armature,
        cfg.contact_stiffness, cfg.contact_damping, mu,
        cfg.tangential_stiffness, cfg.tangential_damping,
        anchor_x, anchor_on,
        cfg.gravity, False,
    )
    if not ok:
        raise NumericalDivergence(f"integrator diverged at t={state.t:.3f}")
    # Torque safety: the PD clamp runs inside the kernel; make the bound auditable.
    assert np.all(tau_max <= tau_lim + 1e-9), "torque limit exceeded in integrator"

    new = SimState.from_arrays(qp, qv, t=state.t + cfg.control_dt)
    new.tau = tau_last
    new.tau_abs_max = tau_max
    new.anchor_x = anchor_x
    new.anchor_on = anchor_on
    new.contacts = _foot_contacts(model, chain, cp_pos, cp_f, cp_fn, link_f_peak)
    return new


def chain_for_episode(model: RobotModel,
                      rand: "EpisodeRandomization | None" = None) -> dynamics.Chain:
    """Compile the chain, applying the episode's base-mass perturbation."""
    chain = dynamics.chain_from_model(model)
    if rand is not None and rand.base_mass_delta != 0.0:
        mass = chain.mass.copy()
        mass[0] = max(0.1, mass[0] + rand.base_mass_delta)
        chain = replace(chain, mass=mass)
    return chain


def _foot_contacts(model: RobotModel, chain: dynamics.Chain, cp_pos, cp_f, cp_fn,
                   link_f_peak) -> dict:
    out = {}
    link_names = [l.name for l in model.links]
    for side in ("l", "r"):
        li = link_names.index(f"{side}_foot")
        pts, fn_sum, ft_sum = [], 0.0, 0.0
        for c, l in enumerate(chain.cpt_link):
            if l == li and cp_fn[c] > 0.0:
                pts.append((float(cp_pos[c, 0]), float(cp_pos[c, 1])))
                fn_sum += float(cp_fn[c])
                ft_sum += float(cp_f[c, 0])
        out[f"{side}_foot"] = ContactState(
            in_contact=bool(pts), points=pts, normal_force=fn_sum,
            tangential_force=ft_sum, peak_force=float(link_f_peak[li]),
        )
    return out


def apply_push(state: SimState, dv: np.ndarray, dw: float,
               lin_cap: float = 0.5, ang_cap: float = 0.2) -> SimState:
    """Instant velocity perturbation of the base; positions untouched."""
    dv = np.asarray(dv, dtype=float).reshape(2)
    if np.linalg.norm(dv) > lin_cap + 1e-12:
        raise PushLimitError(f"|dv|={np.linalg.norm(dv):.3f} exceeds cap {lin_cap}")
    if abs(dw) > ang_cap + 1e-12:
        raise PushLimitError(f"|dw|={abs(dw):.3f} exceeds cap {ang_cap}")
    new = state.copy()
    new.base_vel = state.base_vel + dv
    new.base_pitch_rate = state.base_pitch_rate + dw
    return new


def termination_check(state: SimState, model: RobotModel,
                      cfg: SimConfig | None = None) -> str | None:
    """Fall on collapsed height or excessive pitch; Timeout at the horizon."""
    cfg = cfg or SimConfig()
    if state.base_pos[1] < cfg.fall_height_frac * model.standing_base_height():
        return TerminationReason.FALL
    if abs(state.base_pitch) > cfg.fall_pitch:
        return TerminationReason.FALL
    if state.t >= cfg.episode_horizon - 1e-9:
        return TerminationReason.TIMEOUT
    return None


# ---------------------------------------------------------------------------
# Trace recording (golden-trace regression pinning and plot data export)
# ---------------------------------------------------------------------------


def trace_header(model: RobotModel) -> list[str]:
    cols = ["t", "base_x", "base_z", "base_pitch"]
    cols += [f"q_{j.name}" for j in model.joints]
    cols += [f"qd_{j.name}" for j in model.joints]
    cols += [f"tau_{j.name}" for j in model.joints]
    cols += ["fn_l", "ft_l", "fn_r", "ft_r"]
    return cols


def trace_row(state: SimState, model: RobotModel) -> list[float]:
    tau = state.tau if state.tau is not None else np.zeros(model.n_j)
    cl = state.contacts.get("l_foot")
    cr = state.contacts.get("r_foot")
    return (
        [state.t, float(state.base_pos[0]), float(state.base_pos[1]), state.base_pitch]
        + list(map(float, state.q)) + list(map(float, state.qd)) + list(map(float, tau))
        + [cl.normal_force if cl else 0.0, cl.tangential_force if cl else 0.0,
           cr.normal_force if cr else 0.0, cr.tangential_force if cr else 0.0]
    )


def write_trace_csv(path, header: list[str], rows: list[list[float]]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
