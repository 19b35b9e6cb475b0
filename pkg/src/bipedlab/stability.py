"""Quasi-static pose stability: support polygon, CoM tracking, joint sweeps.

A pose is a set of joint angles with the base placed by foot-ground contact.
The sweep traverses each scheduled joint through its range while the rest of
the pose holds, re-planting the feet and recomputing the center of mass at
every sample.

Pure kinematics alone cannot distinguish mass distributions that share a
total mass, so the sweep adds a single quasi-static compliance: the body may
lean about the support center against a rotational stiffness (the effective
ankle/controller stiffness).  The equilibrium lean solves

    k_lean * theta = -M g * x_com(theta)

which amplifies CoM excursions by k/(k - M g h); a taller mass column sits
closer to the critical stiffness and deviates further, which is exactly the
top-heavy effect the analysis is meant to expose.  If no equilibrium exists
(k_lean <= M g h locally, or the lean exceeds the cap) the sample counts as
a stability violation, as does the gravity-projected CoM leaving the support
polygon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .model import RobotModel


class EmptyInput(ValueError):
    """convex_hull called with no points."""


@dataclass(frozen=True)
class Pose:
    """Joint angles; base pose follows from foot-ground contact."""

    q: np.ndarray
    name: str = ""

    def validated(self, model: RobotModel) -> "Pose":
        q = np.asarray(self.q, dtype=float)
        if q.shape != (model.n_j,):
            raise ValueError(f"pose has {q.shape} angles, expected ({model.n_j},)")
        if np.any(q < model.q_lo - 1e-9) or np.any(q > model.q_hi + 1e-9):
            raise ValueError(f"pose {self.name!r} outside joint limits")
        return Pose(q=q, name=self.name)


@dataclass(frozen=True)
class SupportPolygon:
    """Convex hull of contact points, counter-clockwise, degenerate-safe."""

    vertices: np.ndarray  # (k, 2)

    @property
    def x_interval(self) -> tuple[float, float]:
        xs = self.vertices[:, 0]
        return float(xs.min()), float(xs.max())


@dataclass
class StabilityConfig:
    resolution_deg: float = 1.0
    lean_stiffness: float = 245.0   # N m / rad, effective whole-body compliance
    lean_cap: float = 0.6           # rad, beyond this the pose counts as fallen
    boundary_tol: float = 1e-9      # m, hull boundary counts as stable


@dataclass
class SweepSample:
    joint: int            # index of the actively swept joint (-1 for the initial sample)
    angle: float
    com: np.ndarray       # (2,) leaned CoM
    deviation: float
    stable: bool
    lean: float


@dataclass
class StabilityReport:
    samples: list[SweepSample]

    @property
    def max_deviation(self) -> float:
        return max(s.deviation for s in self.samples)

    @property
    def fraction_stable(self) -> float:
        return sum(1 for s in self.samples if s.stable) / len(self.samples)

    def rows(self) -> list[list]:
        return [[i, s.joint, s.angle, s.com[0], s.com[1], s.deviation, int(s.stable)]
                for i, s in enumerate(self.samples)]

    HEADER = ["sample", "joint", "angle", "com_x", "com_z", "deviation", "stable"]


def convex_hull(points) -> SupportPolygon:
    """Andrew's monotone chain; collinear points collapsed, CCW order."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise EmptyInput("convex_hull needs at least one point")
    uniq = sorted({(float(x), float(z)) for x, z in pts})
    if len(uniq) == 1:
        return SupportPolygon(np.array(uniq))
    def cross(o, a, b):
        return (a[0]-o[0])*(b[1]-o[1]) - (a[1]-o[1])*(b[0]-o[0])
    lower: list = []
    for p in uniq:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(uniq):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 2:   # all collinear: keep the two extreme points
        hull = [uniq[0], uniq[-1]]
    return SupportPolygon(np.array(hull))


def is_stable(com, polygon: SupportPolygon, tol: float = 1e-9) -> bool:
    """Gravity-projected CoM inside or on the hull (segment/interval safe)."""
    x = float(np.asarray(com).reshape(-1)[0])
    verts = polygon.vertices
    if len(verts) <= 2 or np.ptp(verts[:, 1]) < 1e-12:
        lo, hi = polygon.x_interval
        return lo - tol <= x <= hi + tol
    # General polygon: point-in-convex-polygon for the ground projection.
    p = np.array([x, 0.0])
    n = len(verts)
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        if (b[0]-a[0])*(p[1]-a[1]) - (b[1]-a[1])*(p[0]-a[0]) < -tol:
            return False
    return True


# ---------------------------------------------------------------------------
# Kinematics helpers
# ---------------------------------------------------------------------------


def _planted_qpos(model: RobotModel, chain: dynamics.Chain, q: np.ndarray) -> np.ndarray:
    """Base placement with x = 0, pitch = 0, lowest contact point on the ground."""
    qpos = np.concatenate([[0.0, 0.0, 0.0], q])
    cw = dynamics.contact_point_world(chain, qpos)
    qpos[1] = -float(cw[:, 1].min())
    return qpos


def com_position(model: RobotModel, pose: Pose,
                 chain: dynamics.Chain | None = None) -> np.ndarray:
    """Mass-weighted CoM via forward kinematics, feet planted."""
    pose = pose.validated(model)
    chain = chain or dynamics.chain_from_model(model)
    qpos = _planted_qpos(model, chain, pose.q)
    _, _, cw = dynamics.link_frames(chain, qpos)
    return (chain.mass[:, None] * cw).sum(axis=0) / chain.mass.sum()


def support_interval(model: RobotModel, q: np.ndarray,
                     chain: dynamics.Chain | None = None) -> tuple[float, float]:
    chain = chain or dynamics.chain_from_model(model)
    qpos = _planted_qpos(model, chain, q)
    cw = dynamics.contact_point_world(chain, qpos)
    grounded = cw[cw[:, 1] < 1e-6]
    pts = grounded if len(grounded) else cw
    hull = convex_hull(np.stack([pts[:, 0], np.zeros(len(pts))], axis=1))
    return hull.x_interval


def _solve_lean(com: np.ndarray, pivot_x: float, total_mass: float, gravity: float,
                k_lean: float, cap: float) -> tuple[float, bool]:
    """Equilibrium lean angle about (pivot_x, 0); ok=False when it falls."""
    cx = com[0] - pivot_x
    cz = com[1]
    mg = total_mass * gravity
    th = 0.0
    for _ in range(60):
        g = k_lean * th + mg * (cx * math.cos(th) - cz * math.sin(th))
        dg = k_lean + mg * (-cx * math.sin(th) - cz * math.cos(th))
        if dg <= 1e-9:
            return th, False
        step = -g / dg
        th += np.clip(step, -0.2, 0.2)
        if abs(th) > cap:
            return th, False
        if abs(step) < 1e-12:
            break
    else:
        return th, False
    return th, True


def _leaned_com(com: np.ndarray, pivot_x: float, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    dx, dz = com[0] - pivot_x, com[1]
    return np.array([pivot_x + c * dx - s * dz, s * dx + c * dz])


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def make_schedule(model: RobotModel, joints=None, resolution_deg: float = 1.0):
    """Per-joint min -> max -> default traversal at fixed angular resolution.

    Returns a list of (joint_index, angle) samples.
    """
    if joints is None:
        joints = list(range(model.n_j))
    step = math.radians(resolution_deg)
    samples = []
    for j in joints:
        lo, hi = model.q_lo[j], model.q_hi[j]
        dflt = model.q_default[j]
        down = np.arange(dflt, lo - 1e-12, -step)
        up = np.arange(lo, hi + 1e-12, step)
        back = np.arange(hi, dflt - 1e-12, -step)
        for a in np.concatenate([down, [lo], up, [hi], back, [dflt]]):
            samples.append((j, float(np.clip(a, lo, hi))))
    return samples


def arm_sweep_schedule(model: RobotModel, resolution_deg: float = 1.0):
    """The shoulder-only schedule used for the morphology comparison."""
    return make_schedule(model, joints=[6, 7], resolution_deg=resolution_deg)


def sweep_joints(model: RobotModel, pose0: Pose, schedule,
                 cfg: StabilityConfig | None = None) -> StabilityReport:
    """Quasi-static traversal; violations are recorded, never raised."""
    cfg = cfg or StabilityConfig()
    pose0 = pose0.validated(model)
    chain = dynamics.chain_from_model(model)
    total_mass = float(chain.mass.sum())
    sup0 = support_interval(model, pose0.q, chain)
    pivot_x = 0.5 * (sup0[0] + sup0[1])

    def eval_sample(joint: int, angle: float, q: np.ndarray):
        com0 = com_position(model, Pose(q), chain)
        theta, ok = _solve_lean(com0, pivot_x, total_mass, model.gravity,
                                cfg.lean_stiffness, cfg.lean_cap)
        com = _leaned_com(com0, pivot_x, theta)
        lo, hi = support_interval(model, q, chain)
        stable = ok and (lo - cfg.boundary_tol <= com[0] <= hi + cfg.boundary_tol)
        return SweepSample(joint=joint, angle=angle, com=com, deviation=0.0,
                           stable=stable, lean=theta)

    first = eval_sample(-1, float("nan"), pose0.q)
    samples = [first]
    ref_com = first.com
    for joint, angle in schedule:
        q = pose0.q.copy()
        q[joint] = angle
        s = eval_sample(joint, angle, q)
        s.deviation = float(np.linalg.norm(s.com - ref_com))
        samples.append(s)
    return StabilityReport(samples=samples)


def rank_poses(model: RobotModel, poses: list[Pose], schedule,
               cfg: StabilityConfig | None = None):
    """Order poses by fraction-stable, then smaller max deviation, then input order.

    Returns [(pose, report), ...] best first.
    """
    if not poses:
        raise ValueError("need at least one candidate pose")
    reports = [sweep_joints(model, p, schedule, cfg) for p in poses]
    order = sorted(range(len(poses)),
                   key=lambda i: (-reports[i].fraction_stable,
                                  reports[i].max_deviation, i))
    return [(poses[i], reports[i]) for i in order]
