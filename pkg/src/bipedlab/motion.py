"""Reference-motion library: clips, retargeting, synthetic gait, RSI, features.

Clips are stored as JSON (fps, joint-name header, frame rows of base height,
base pitch, forward velocity and joint angles) and resampled to the 50 Hz
control rate on load; frame velocities come from central differences.  The
synthetic gait oracle replaces the mocap/whole-body-controller pipeline: a
kinematically consistent sinusoidal walk cycle with stance/swing phasing,
tick-aligned so every cycle spans a whole number of control steps.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dynamics
from .model import JOINT_ORDER, RobotModel
from .sim import SimState

CONTROL_RATE = 50.0
STYLE_TAGS = ("stand", "model_based_walk", "swagger")
FEATURIZER_VERSION = 1


class SchemaError(ValueError):
    """Malformed clip file."""


class LimitViolation(ValueError):
    """Clip joint angle beyond model limits by more than the clamp tolerance."""


class MissingJoint(ValueError):
    """Required planar joint absent from a source clip."""


@dataclass
class MotionClip:
    """Reference trajectory at the control rate, with derived velocities."""

    fps: float
    style_tag: str
    weight: float
    joint_names: tuple[str, ...]
    base_height: np.ndarray      # (T,)
    base_pitch: np.ndarray       # (T,)
    vx: np.ndarray               # (T,) forward velocity
    q: np.ndarray                # (T, n_j)
    base_height_rate: np.ndarray = field(default=None)  # filled by finalize()
    base_pitch_rate: np.ndarray = field(default=None)
    qd: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        if self.fps <= 0:
            raise SchemaError("fps must be > 0")
        if self.style_tag not in STYLE_TAGS:
            raise SchemaError(f"style_tag must be one of {STYLE_TAGS}")
        if len(self.base_height) < 2:
            raise SchemaError("clip needs at least 2 frames")
        if self.qd is None:
            self._finalize()

    def _finalize(self) -> None:
        self.base_height_rate = _central_diff(self.base_height, self.fps)
        self.base_pitch_rate = _central_diff(self.base_pitch, self.fps)
        self.qd = _central_diff(self.q, self.fps)

    @property
    def n_frames(self) -> int:
        return len(self.base_height)

    @property
    def duration(self) -> float:
        return (self.n_frames - 1) / self.fps

    def copy(self) -> "MotionClip":
        return MotionClip(self.fps, self.style_tag, self.weight, self.joint_names,
                          self.base_height.copy(), self.base_pitch.copy(),
                          self.vx.copy(), self.q.copy())


@dataclass(frozen=True)
class TransitionPair:
    """Consecutive-frame feature pair for discriminator training."""

    feat_t: np.ndarray
    feat_t1: np.ndarray
    version: int = FEATURIZER_VERSION


def _central_diff(x: np.ndarray, fps: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    d = np.empty_like(x)
    d[1:-1] = (x[2:] - x[:-2]) * (fps / 2.0)
    d[0] = (x[1] - x[0]) * fps
    d[-1] = (x[-1] - x[-2]) * fps
    return d


# ---------------------------------------------------------------------------
# Clip files
# ---------------------------------------------------------------------------


def clip_to_dict(clip: MotionClip) -> dict:
    return {
        "fps": clip.fps, "style": clip.style_tag, "weight": clip.weight,
        "joint_names": list(clip.joint_names),
        "frames": [
            {"h": float(clip.base_height[i]), "pitch": float(clip.base_pitch[i]),
             "vx": float(clip.vx[i]), "q": [float(v) for v in clip.q[i]]}
            for i in range(clip.n_frames)
        ],
    }


def save_clip(clip: MotionClip, path) -> None:
    with open(path, "w") as fh:
        json.dump(clip_to_dict(clip), fh, indent=1)
        fh.write("\n")


def load_clip(path, model: RobotModel, clamp_tol: float = 0.05) -> MotionClip:
    """Parse, validate against the model, resample to 50 Hz, differentiate.

    Joint values outside the model limits are clamped; beyond clamp_tol rad
    past a limit the clip is rejected with LimitViolation.
    """
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read clip {path}: {exc}") from exc
    try:
        fps = float(data["fps"])
        style = data["style"]
        weight = float(data.get("weight", 1.0))
        names = tuple(data["joint_names"])
        frames = data["frames"]
        h = np.array([f["h"] for f in frames], dtype=float)
        pitch = np.array([f["pitch"] for f in frames], dtype=float)
        vx = np.array([f.get("vx", 0.0) for f in frames], dtype=float)
        q = np.array([f["q"] for f in frames], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed clip {path}: {exc}") from exc
    if fps <= 0 or len(frames) < 2:
        raise SchemaError(f"clip {path}: need fps > 0 and >= 2 frames")
    if q.shape[1] != len(names):
        raise SchemaError(f"clip {path}: frame width != joint header")
    clip = MotionClip(fps, style, weight, names, h, pitch, vx, q)
    clip = resample_clip(clip, CONTROL_RATE)
    # Map columns to the model's joint order (clips may permute).
    if set(JOINT_ORDER) - set(clip.joint_names):
        raise MissingJoint(
            f"clip {path} missing joints {sorted(set(JOINT_ORDER) - set(clip.joint_names))}")
    perm = [clip.joint_names.index(n) for n in JOINT_ORDER]
    q = clip.q[:, perm]
    lo, hi = model.q_lo, model.q_hi
    if np.any(q < lo - clamp_tol) or np.any(q > hi + clamp_tol):
        worst = max(float((lo - q).max()), float((q - hi).max()))
        raise LimitViolation(f"clip {path}: joint exceeds limits by {worst:.3f} rad")
    q = np.clip(q, lo, hi)
    return MotionClip(CONTROL_RATE, clip.style_tag, clip.weight, tuple(JOINT_ORDER),
                      clip.base_height, clip.base_pitch, clip.vx, q)


def resample_clip(clip: MotionClip, fps: float) -> MotionClip:
    """Linear-interpolation resample; identity when rates already match."""
    if abs(clip.fps - fps) < 1e-12:
        return clip
    t_src = np.arange(clip.n_frames) / clip.fps
    n_out = int(round(t_src[-1] * fps)) + 1
    t_out = np.arange(n_out) / fps
    t_out = np.minimum(t_out, t_src[-1])
    h = np.interp(t_out, t_src, clip.base_height)
    pitch = np.interp(t_out, t_src, clip.base_pitch)
    vx = np.interp(t_out, t_src, clip.vx)
    q = np.stack([np.interp(t_out, t_src, clip.q[:, j])
                  for j in range(clip.q.shape[1])], axis=1)
    return MotionClip(fps, clip.style_tag, clip.weight, clip.joint_names,
                      h, pitch, vx, q)


# ---------------------------------------------------------------------------
# Retargeting
# ---------------------------------------------------------------------------


def retarget_proportional(clip: MotionClip, src_limb_lengths: dict,
                          dst_model: RobotModel) -> tuple[MotionClip, float]:
    """Joint-name copy with leg-length height scaling and limit clamping.

    src_limb_lengths supplies the source 'thigh' and 'shank' lengths; base
    heights scale by the destination/source leg ratio.  Returns the clip and
    the fraction of (frame, joint) entries that had to be clamped.
    """
    for key in ("thigh", "shank"):
        if key not in src_limb_lengths:
            raise ValueError(f"src_limb_lengths missing {key!r}")
    missing = set(JOINT_ORDER) - set(clip.joint_names)
    if missing:
        raise MissingJoint(f"source clip missing joints {sorted(missing)}")
    src_leg = float(src_limb_lengths["thigh"]) + float(src_limb_lengths["shank"])
    dst_leg = dst_model.link("l_thigh").length + dst_model.link("l_shank").length
    ratio = dst_leg / src_leg
    perm = [clip.joint_names.index(n) for n in JOINT_ORDER]
    q = clip.q[:, perm]
    lo, hi = dst_model.q_lo, dst_model.q_hi
    clamped = np.logical_or(q < lo, q > hi)
    frac = float(clamped.mean())
    q = np.clip(q, lo, hi)
    out = MotionClip(clip.fps, clip.style_tag, clip.weight, tuple(JOINT_ORDER),
                     clip.base_height * ratio, clip.base_pitch.copy(),
                     clip.vx * ratio, q)
    return out, frac


# ---------------------------------------------------------------------------
# Synthetic gait oracle
# ---------------------------------------------------------------------------


def gait_frequency(v: float) -> float:
    """Cycle frequency in Hz, tick-aligned so a cycle is integer control steps."""
    f = 1.4 + 0.6 * min(abs(v), 0.9) / 0.9
    ticks = max(1, int(round(CONTROL_RATE / f)))
    return CONTROL_RATE / ticks


def synth_gait_oracle(v: float, duration: float, model: RobotModel,
                      style_tag: str = "model_based_walk",
                      pitch_sway: float = 0.0, arm_gain: float = 1.0,
                      bounce_gain: float = 1.0, weight: float = 1.0) -> MotionClip:
    """Scripted kinematic walk cycle (standing clip at v = 0).

    Left/right joints are phase-shifted by half a cycle; the ankle keeps the
    foot parallel to the ground; shoulders counter-swing.  pitch_sway and the
    gain knobs exist for the exaggerated 'swagger' variant.
    """
    if not 0.0 <= v <= 0.9:
        raise ValueError(f"v={v} outside the command range [0, 0.9]")
    n = max(2, int(round(duration * CONTROL_RATE)) + 1)
    qdef = model.q_default
    names = tuple(JOINT_ORDER)
    h0 = model.standing_base_height()
    if v == 0.0:
        h = np.full(n, h0)
        pitch = np.zeros(n)
        vx = np.zeros(n)
        q = np.tile(qdef, (n, 1))
        return MotionClip(CONTROL_RATE, style_tag if style_tag == "swagger" else "stand",
                          weight, names, h, pitch, vx, q)

    f = gait_frequency(v)
    stride = v / f
    leg = model.link("l_thigh").length + model.link("l_shank").length
    amp_hip = math.asin(min(0.95, stride / (2.0 * leg)))
    amp_knee = 0.25 + 0.9 * amp_hip
    amp_arm = arm_gain * min(0.6, 0.8 * amp_hip + 0.15)
    bounce = bounce_gain * 0.012 * (0.3 + amp_hip)
    t = np.arange(n) / CONTROL_RATE
    phase = 2.0 * math.pi * f * t

    def leg_traj(ph):
        hip = qdef[0] + amp_hip * np.sin(ph)
        # Swing-phase knee flexion (knee values are negative when bent).
        swing = np.clip(np.sin(ph + 0.5 * math.pi), 0.0, None)
        knee = qdef[1] - amp_knee * swing
        ankle = qdef[2] - (hip - qdef[0]) - (knee - qdef[1])  # keep foot flat
        return hip, knee, ankle

    hip_l, knee_l, ankle_l = leg_traj(phase)
    hip_r, knee_r, ankle_r = leg_traj(phase - math.pi)
    sh_l = qdef[6] + amp_arm * np.sin(phase - math.pi)
    sh_r = qdef[7] + amp_arm * np.sin(phase)
    q = np.stack([hip_l, knee_l, ankle_l, hip_r, knee_r, ankle_r, sh_l, sh_r], axis=1)
    q = np.clip(q, model.q_lo, model.q_hi)
    h = h0 - bounce * (1.0 - np.cos(2.0 * phase)) * 0.5
    pitch = pitch_sway * np.sin(phase)
    vx = np.full(n, float(v))
    return MotionClip(CONTROL_RATE, style_tag, weight, names, h, pitch, vx, q)


def swagger_clip(v: float, duration: float, model: RobotModel,
                 weight: float = 1.0) -> MotionClip:
    """Walk with superimposed torso sway and exaggerated arm swing."""
    return synth_gait_oracle(v, duration, model, style_tag="swagger",
                             pitch_sway=0.08, arm_gain=2.5, bounce_gain=1.8,
                             weight=weight)


# ---------------------------------------------------------------------------
# Library, features, sampling
# ---------------------------------------------------------------------------


class MotionLibrary:
    """Immutable set of clips with normalized sampling weights."""

    def __init__(self, clips: list[MotionClip]):
        if not clips:
            raise ValueError("library needs at least one clip")
        self.clips = list(clips)
        w = np.array([max(0.0, c.weight) for c in clips], dtype=float)
        if w.sum() <= 0:
            raise ValueError("at least one clip must have positive weight")
        self.weights = w / w.sum()

    def __len__(self) -> int:
        return len(self.clips)

    def pick(self, rng: np.random.Generator) -> int:
        return int(rng.choice(len(self.clips), p=self.weights))


def feature_dim(model: RobotModel) -> int:
    return 2 * model.n_j + 4


def amp_features_from_state(state: SimState, model: RobotModel) -> np.ndarray:
    """[q - q_default; qd; base height; world vx, vz; pitch rate]."""
    return np.concatenate([
        state.q - model.q_default,
        state.qd,
        [state.base_pos[1], state.base_vel[0], state.base_vel[1],
         state.base_pitch_rate],
    ])


def amp_features_from_frame(clip: MotionClip, i: int, model: RobotModel) -> np.ndarray:
    return np.concatenate([
        clip.q[i] - model.q_default,
        clip.qd[i],
        [clip.base_height[i], clip.vx[i], clip.base_height_rate[i],
         clip.base_pitch_rate[i]],
    ])


def state_from_frame(clip: MotionClip, i: int, model: RobotModel,
                     chain: dynamics.Chain | None = None) -> SimState:
    """SimState matching a clip frame, feet placed exactly on the ground."""
    chain = chain or dynamics.chain_from_model(model)
    q = np.clip(clip.q[i], model.q_lo, model.q_hi)
    qpos = np.concatenate([[0.0, 0.0, clip.base_pitch[i]], q])
    cw = dynamics.contact_point_world(chain, qpos)
    base_z = -float(cw[:, 1].min())
    return SimState(
        base_pos=np.array([0.0, base_z]), base_pitch=float(clip.base_pitch[i]),
        q=q.copy(),
        base_vel=np.array([float(clip.vx[i]), float(clip.base_height_rate[i])]),
        base_pitch_rate=float(clip.base_pitch_rate[i]),
        qd=clip.qd[i].copy(), t=0.0,
    )


def sample_rsi(library: MotionLibrary, rng: np.random.Generator, model: RobotModel,
               chain: dynamics.Chain | None = None) -> tuple[SimState, tuple[int, int]]:
    """Random state initialization: weighted clip, uniform frame, grounded feet."""
    ci = library.pick(rng)
    clip = library.clips[ci]
    fi = int(rng.integers(0, clip.n_frames))
    return state_from_frame(clip, fi, model, chain), (ci, fi)


def sample_transition_batch(library: MotionLibrary, batch: int,
                            rng: np.random.Generator, model: RobotModel) -> list[TransitionPair]:
    """Consecutive-frame pairs, clip-weighted, deterministic under a seed."""
    out = []
    for _ in range(batch):
        ci = library.pick(rng)
        clip = library.clips[ci]
        fi = int(rng.integers(0, clip.n_frames - 1))
        out.append(TransitionPair(
            feat_t=amp_features_from_frame(clip, fi, model),
            feat_t1=amp_features_from_frame(clip, fi + 1, model),
        ))
    return out


def transition_matrix(pairs: list[TransitionPair]) -> np.ndarray:
    """Stack pairs into the (B, 2*feat) discriminator input block."""
    if not pairs:
        return np.zeros((0, 0))
    versions = {p.version for p in pairs}
    if len(versions) != 1:
        raise ValueError(f"mixed featurizer versions in batch: {versions}")
    return np.stack([np.concatenate([p.feat_t, p.feat_t1]) for p in pairs])
