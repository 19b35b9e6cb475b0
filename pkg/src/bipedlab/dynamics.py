"""Planar articulated rigid-body dynamics in generalized coordinates.

A kinematic tree of links, each attached to its parent by a pitch joint, with
a floating (or optionally pinned) base.  Generalized coordinates are
[x, z, pitch, q_0 .. q_{n-1}]; link i (i >= 1) is driven by joint i-1.

The equations of motion are assembled from link CoM Jacobians:

    M(q) qdd = Q - k(q, qd)
    M = sum_i  m_i Jc_i^T Jc_i + I_i jw_i jw_i^T
    k = sum_i  m_i Jc_i^T (gamma_i - g)

where gamma_i is the CoM acceleration at zero generalized acceleration (the
planar Coriolis/centrifugal term; the angular Jacobians are constant so they
contribute no bias).  Ground contact is a penalty spring-damper at explicit
contact points with a Coulomb-clamped viscous tangential force.  Integration
is kick-drift-kick (velocity Verlet): second order, with good long-horizon
energy behavior on the passive conservative cases used as oracles.

All kernels are numba-compiled and cache to disk; the first import in a fresh
environment pays a one-time JIT cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import RobotModel


@dataclass(frozen=True)
class Chain:
    """Compiled tree description consumed by the kernels (root is link 0)."""

    parent: np.ndarray    # (nl,) int64, -1 for root
    anchor: np.ndarray    # (nl, 2) joint anchor in the parent frame
    com: np.ndarray       # (nl, 2) CoM in the link frame
    mass: np.ndarray      # (nl,)
    inertia: np.ndarray   # (nl,)
    cpt_link: np.ndarray  # (nc,) int64 link index of each contact point
    cpt_pos: np.ndarray   # (nc, 2) contact point in the link frame

    @property
    def n_links(self) -> int:
        return len(self.mass)

    @property
    def nv(self) -> int:
        return 3 + self.n_links - 1


def chain_from_model(model: RobotModel) -> Chain:
    """Compile a RobotModel into the array form used by the dynamics kernels.

    Link frames: the torso frame sits at the pelvis with its axis up; thigh,
    shank and arm frames sit at their proximal joints with the axis hanging
    down; the foot frame sits at the ankle with its axis along +x (flat foot
    at zero joint angle).  Contact points are the heel and toe of each foot.
    """
    idx = {l.name: i for i, l in enumerate(model.links)}
    nl = len(model.links)
    parent = np.full(nl, -1, dtype=np.int64)
    anchor = np.zeros((nl, 2))
    com = np.zeros((nl, 2))
    mass = np.array([l.mass for l in model.links])
    inertia = np.array([l.inertia for l in model.links])

    torso = model.link("torso")
    com[idx["torso"]] = (0.0, torso.com_offset)
    for side in ("l", "r"):
        thigh, shank, foot = (model.link(f"{side}_{n}") for n in ("thigh", "shank", "foot"))
        arm = model.link(f"{side}_arm")
        i_th, i_sh, i_ft, i_ar = (idx[f"{side}_{n}"] for n in ("thigh", "shank", "foot", "arm"))
        parent[i_th] = idx["torso"]
        anchor[i_th] = (0.0, 0.0)                       # hips at the pelvis origin
        com[i_th] = (0.0, -thigh.com_offset)
        parent[i_sh] = i_th
        anchor[i_sh] = (0.0, -thigh.length)
        com[i_sh] = (0.0, -shank.com_offset)
        parent[i_ft] = i_sh
        anchor[i_ft] = (0.0, -shank.length)
        com[i_ft] = (foot.com_offset, -model.ankle_height * 0.5)
        parent[i_ar] = idx["torso"]
        anchor[i_ar] = (0.0, model.shoulder_height)
        com[i_ar] = (0.0, -arm.com_offset)

    cpt_link, cpt_pos = [], []
    for side in ("l", "r"):
        foot = model.link(f"{side}_foot")
        heel_x = -model.heel_ratio * foot.length
        toe_x = (1.0 - model.heel_ratio) * foot.length
        for px in (heel_x, toe_x):
            cpt_link.append(idx[f"{side}_foot"])
            cpt_pos.append((px, -model.ankle_height))

    return Chain(
        parent=parent, anchor=anchor, com=com, mass=mass, inertia=inertia,
        cpt_link=np.array(cpt_link, dtype=np.int64), cpt_pos=np.array(cpt_pos),
    )


def make_pendulum_chain(masses, lengths, com_offsets=None, inertias=None) -> Chain:
    """Serial chain of hanging rods on a pinned base; used by the energy oracles."""
    n = len(masses)
    masses = np.asarray(masses, dtype=float)
    lengths = np.asarray(lengths, dtype=float)
    if com_offsets is None:
        com_offsets = lengths / 2.0
    if inertias is None:
        inertias = masses * lengths ** 2 / 12.0
    nl = n + 1  # link 0 is a near-massless root stub (the base is pinned)
    par = np.full(nl, -1, dtype=np.int64)
    anchor = np.zeros((nl, 2))
    com = np.zeros((nl, 2))
    mass = np.zeros(nl)
    inertia = np.zeros(nl)
    mass[0] = 1e-9   # root stub carries no meaningful mass (base is pinned)
    inertia[0] = 1e-9
    for i in range(n):
        par[i + 1] = i
        anchor[i + 1] = (0.0, 0.0) if i == 0 else (0.0, -lengths[i - 1])
        com[i + 1] = (0.0, -com_offsets[i])
        mass[i + 1] = masses[i]
        inertia[i + 1] = inertias[i]
    return Chain(parent=par, anchor=anchor, com=com, mass=mass, inertia=inertia,
                 cpt_link=np.zeros(0, dtype=np.int64), cpt_pos=np.zeros((0, 2)))


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _fk(parent, anchor, com, qpos):
    """World angles, frame origins and CoM positions for all links."""
    nl = parent.shape[0]
    ang = np.zeros(nl)
    org = np.zeros((nl, 2))
    cw = np.zeros((nl, 2))
    ang[0] = qpos[2]
    org[0, 0] = qpos[0]
    org[0, 1] = qpos[1]
    for i in range(nl):
        if i > 0:
            p = parent[i]
            ca, sa = np.cos(ang[p]), np.sin(ang[p])
            ang[i] = ang[p] + qpos[3 + i - 1]
            org[i, 0] = org[p, 0] + ca * anchor[i, 0] - sa * anchor[i, 1]
            org[i, 1] = org[p, 1] + sa * anchor[i, 0] + ca * anchor[i, 1]
        ci, si = np.cos(ang[i]), np.sin(ang[i])
        cw[i, 0] = org[i, 0] + ci * com[i, 0] - si * com[i, 1]
        cw[i, 1] = org[i, 1] + si * com[i, 0] + ci * com[i, 1]
    return ang, org, cw


@njit(cache=True)
def _link_rates(parent, anchor, com, qpos, qvel, ang, org):
    """Angular rates, origin velocities and zero-qdd origin accelerations."""
    nl = parent.shape[0]
    om = np.zeros(nl)
    vo = np.zeros((nl, 2))
    ao = np.zeros((nl, 2))      # origin acceleration with qdd = 0
    om[0] = qvel[2]
    vo[0, 0] = qvel[0]
    vo[0, 1] = qvel[1]
    for i in range(1, nl):
        p = parent[i]
        om[i] = om[p] + qvel[3 + i - 1]
        ca, sa = np.cos(ang[p]), np.sin(ang[p])
        rx = ca * anchor[i, 0] - sa * anchor[i, 1]
        rz = sa * anchor[i, 0] + ca * anchor[i, 1]
        vo[i, 0] = vo[p, 0] - om[p] * rz
        vo[i, 1] = vo[p, 1] + om[p] * rx
        ao[i, 0] = ao[p, 0] - om[p] * om[p] * rx
        ao[i, 1] = ao[p, 1] - om[p] * om[p] * rz
    return om, vo, ao


@njit(cache=True)
def _ancestors(parent, i, out):
    """Fill out with 1 for every link on the path root..i; returns nothing."""
    j = i
    while j >= 0:
        out[j] = 1
        j = parent[j]


@njit(cache=True)
def _point_jacobian_col(px, pz, ax, az):
    # d(point)/d(angle at axis) = perp(point - axis)
    return -(pz - az), (px - ax)


@njit(cache=True)
def _mass_and_bias(parent, anchor, com, mass, inertia, qpos, qvel,
                   ang, org, cw, om, ao, gravity, armature):
    """Assemble M(q) and the bias k(q, qd) (Coriolis + gravity)."""
    nl = parent.shape[0]
    nv = 3 + nl - 1
    M = np.zeros((nv, nv))
    k = np.zeros(nv)
    onpath = np.zeros(nl, dtype=np.int64)
    Jc = np.zeros((2, nv))
    jw = np.zeros(nv)
    for i in range(nl):
        for j in range(nl):
            onpath[j] = 0
        _ancestors(parent, i, onpath)
        for j in range(nv):
            Jc[0, j] = 0.0
            Jc[1, j] = 0.0
            jw[j] = 0.0
        Jc[0, 0] = 1.0
        Jc[1, 1] = 1.0
        jw[2] = 1.0
        gx, gz = _point_jacobian_col(cw[i, 0], cw[i, 1], org[0, 0], org[0, 1])
        Jc[0, 2] = gx
        Jc[1, 2] = gz
        for l in range(1, nl):
            if onpath[l] == 1:
                jx, jz = _point_jacobian_col(cw[i, 0], cw[i, 1], org[l, 0], org[l, 1])
                Jc[0, 3 + l - 1] = jx
                Jc[1, 3 + l - 1] = jz
                jw[3 + l - 1] = 1.0
        # CoM acceleration at qdd = 0: origin part plus own-spin part.
        ci, si = np.cos(ang[i]), np.sin(ang[i])
        rcx = ci * com[i, 0] - si * com[i, 1]
        rcz = si * com[i, 0] + ci * com[i, 1]
        gam_x = ao[i, 0] - om[i] * om[i] * rcx
        gam_z = ao[i, 1] - om[i] * om[i] * rcz
        mi = mass[i]
        Ii = inertia[i]
        for a in range(nv):
            ja0 = Jc[0, a]
            ja1 = Jc[1, a]
            jwa = jw[a]
            if ja0 != 0.0 or ja1 != 0.0 or jwa != 0.0:
                k[a] += mi * (ja0 * gam_x + ja1 * (gam_z + gravity))
                for b in range(a, nv):
                    M[a, b] += mi * (ja0 * Jc[0, b] + ja1 * Jc[1, b]) + Ii * jwa * jw[b]
    for a in range(nv):
        for b in range(a):
            M[a, b] = M[b, a]
    for j in range(nv - 3):
        M[3 + j, 3 + j] += armature[j]
    return M, k


@njit(cache=True)
def _chol_solve(A, b):
    """Cholesky solve for the small SPD mass matrix; returns (x, ok)."""
    n = A.shape[0]
    L = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            s = A[i, j]
            for m in range(j):
                s -= L[i, m] * L[j, m]
            if i == j:
                if s <= 0.0:
                    return np.zeros(n), False
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    y = np.zeros(n)
    for i in range(n):
        s = b[i]
        for m in range(i):
            s -= L[i, m] * y[m]
        y[i] = s / L[i, i]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for m in range(i + 1, n):
            s -= L[m, i] * x[m]
        x[i] = s / L[i, i]
    return x, True


@njit(cache=True)
def _contact_forces(cpt_link, cpt_pos, ang, org, om, vo,
                    ground_k, ground_c, mu, tangent_k, tangent_c,
                    anchor_x, anchor_on):
    """Penalty normal force + stiction-anchored tangential force per point.

    The tangential force is a spring to a per-point anchor plus damping,
    clamped to the Coulomb cone; anchor bookkeeping (attachment and slip)
    happens in the substep loop.  Returns per-point world positions,
    velocities and forces (fx, fz signed, fn normal magnitude).
    """
    nc = cpt_link.shape[0]
    pw = np.zeros((nc, 2))
    vw = np.zeros((nc, 2))
    f = np.zeros((nc, 2))
    fn = np.zeros(nc)
    for c in range(nc):
        l = cpt_link[c]
        ca, sa = np.cos(ang[l]), np.sin(ang[l])
        rx = ca * cpt_pos[c, 0] - sa * cpt_pos[c, 1]
        rz = sa * cpt_pos[c, 0] + ca * cpt_pos[c, 1]
        px = org[l, 0] + rx
        pz = org[l, 1] + rz
        vx = vo[l, 0] - om[l] * rz
        vz = vo[l, 1] + om[l] * rx
        pw[c, 0] = px
        pw[c, 1] = pz
        vw[c, 0] = vx
        vw[c, 1] = vz
        if pz < 0.0:
            depth = -pz
            fnc = ground_k * depth - ground_c * vz
            if fnc < 0.0:
                fnc = 0.0
            ax = px if anchor_on[c] == 0 else anchor_x[c]
            ftc = -tangent_k * (px - ax) - tangent_c * vx
            lim = mu * fnc
            if ftc > lim:
                ftc = lim
            elif ftc < -lim:
                ftc = -lim
            f[c, 0] = ftc
            f[c, 1] = fnc
            fn[c] = fnc
    return pw, vw, f, fn


@njit(cache=True)
def _eval_accel(qp, qv, parent, anchor, com, mass, inertia,
                cpt_link, cpt_pos, q_target, kp, kd, tau_lim, armature,
                ground_k, ground_c, mu, tangent_k, tangent_c,
                anchor_x, anchor_on, gravity, fixed_base):
    """One dynamics evaluation: qdd plus applied torques and contact snapshot."""
    nl = parent.shape[0]
    nj = nl - 1
    nv = 3 + nj
    nc = cpt_link.shape[0]
    ang, org, cw = _fk(parent, anchor, com, qp)
    om, vo, ao = _link_rates(parent, anchor, com, qp, qv, ang, org)
    M, bias = _mass_and_bias(parent, anchor, com, mass, inertia, qp, qv,
                             ang, org, cw, om, ao, gravity, armature)
    Q = np.zeros(nv)
    tau = np.zeros(nj)
    for j in range(nj):
        tj = kp[j] * (q_target[j] - qp[3 + j]) - kd[j] * qv[3 + j]
        if tj > tau_lim[j]:
            tj = tau_lim[j]
        elif tj < -tau_lim[j]:
            tj = -tau_lim[j]
        tau[j] = tj
        Q[3 + j] += tj
    pw = np.zeros((nc, 2))
    vwc = np.zeros((nc, 2))
    f = np.zeros((nc, 2))
    fn = np.zeros(nc)
    if nc > 0:
        pw, vwc, f, fn = _contact_forces(cpt_link, cpt_pos, ang, org, om, vo,
                                         ground_k, ground_c, mu, tangent_k,
                                         tangent_c, anchor_x, anchor_on)
        for c in range(nc):
            if fn[c] > 0.0:
                # J^T f for the contact point: base translation, then every
                # joint on the path (including base rotation).
                Q[0] += f[c, 0]
                Q[1] += f[c, 1]
                jx, jz = _point_jacobian_col(pw[c, 0], pw[c, 1], org[0, 0], org[0, 1])
                Q[2] += jx * f[c, 0] + jz * f[c, 1]
                node = cpt_link[c]
                while node > 0:
                    jx, jz = _point_jacobian_col(pw[c, 0], pw[c, 1],
                                                 org[node, 0], org[node, 1])
                    Q[3 + node - 1] += jx * f[c, 0] + jz * f[c, 1]
                    node = parent[node]
    rhs = Q - bias
    qdd = np.zeros(nv)
    good = True
    if fixed_base:
        Mj = M[3:, 3:].copy()
        rj = rhs[3:].copy()
        qdd_j, good = _chol_solve(Mj, rj)
        for j in range(nj):
            qdd[3 + j] = qdd_j[j]
    else:
        qdd, good = _chol_solve(M, rhs)
    return qdd, tau, pw, vwc, f, fn, good


@njit(cache=True)
def step_kernel(qpos, qvel, n_sub, dt,
                parent, anchor, com, mass, inertia,
                cpt_link, cpt_pos,
                q_target, kp, kd, tau_lim, armature,
                ground_k, ground_c, mu, tangent_k, tangent_c,
                anchor_x0, anchor_on0,
                gravity, fixed_base):
    """Advance n_sub substeps under a held PD target.

    Kick-drift-kick (velocity Verlet) integration: second-order in the
    conservative dynamics, with velocity-dependent forces evaluated at the
    half-step velocity.  Stiction anchors attach where a point first
    penetrates and slip along the Coulomb cone.  Returns (qpos, qvel,
    tau_abs_max, applied torques at last substep, contact snapshot
    (pos, force, fn) at last substep, per-point peak normal force and
    per-link peak contact force magnitude over the window, updated anchors,
    ok flag).
    """
    nl = parent.shape[0]
    nj = nl - 1
    nv = 3 + nj
    nc = cpt_link.shape[0]
    qp = qpos.copy()
    qv = qvel.copy()
    anchor_x = anchor_x0.copy()
    anchor_on = anchor_on0.copy()
    tau_max = np.zeros(nj)
    tau_last = np.zeros(nj)
    fn_peak = np.zeros(nc)
    link_f_peak = np.zeros(nl)  # peak per-substep total contact force magnitude per link
    cp_pos = np.zeros((nc, 2))
    cp_f = np.zeros((nc, 2))
    cp_fn = np.zeros(nc)
    ok = True
    half = 0.5 * dt
    for s in range(n_sub):
        qdd, tau, pw, vw, f, fn, good = _eval_accel(
            qp, qv, parent, anchor, com, mass, inertia, cpt_link, cpt_pos,
            q_target, kp, kd, tau_lim, armature,
            ground_k, ground_c, mu, tangent_k, tangent_c,
            anchor_x, anchor_on, gravity, fixed_base)
        if not good:
            ok = False
            break
        for a in range(nv):
            qv[a] += half * qdd[a]
        for a in range(nv):
            qp[a] += dt * qv[a]
        qdd, tau, pw, vw, f, fn, good = _eval_accel(
            qp, qv, parent, anchor, com, mass, inertia, cpt_link, cpt_pos,
            q_target, kp, kd, tau_lim, armature,
            ground_k, ground_c, mu, tangent_k, tangent_c,
            anchor_x, anchor_on, gravity, fixed_base)
        if not good:
            ok = False
            break
        for a in range(nv):
            qv[a] += half * qdd[a]
        # Anchor bookkeeping: attach on first penetration, slip when clamped.
        for c in range(nc):
            if pw[c, 1] >= 0.0:
                anchor_on[c] = 0
            else:
                if anchor_on[c] == 0:
                    anchor_x[c] = pw[c, 0]
                    anchor_on[c] = 1
                else:
                    raw = -tangent_k * (pw[c, 0] - anchor_x[c]) - tangent_c * vw[c, 0]
                    lim = mu * fn[c]
                    if raw > lim:
                        anchor_x[c] = pw[c, 0] + (lim + tangent_c * vw[c, 0]) / tangent_k
                    elif raw < -lim:
                        anchor_x[c] = pw[c, 0] + (-lim + tangent_c * vw[c, 0]) / tangent_k
        for j in range(nj):
            at = abs(tau[j])
            if at > tau_max[j]:
                tau_max[j] = at
            tau_last[j] = tau[j]
        if nc > 0:
            link_fx = np.zeros(nl)
            link_fz = np.zeros(nl)
            for c in range(nc):
                link_fx[cpt_link[c]] += f[c, 0]
                link_fz[cpt_link[c]] += f[c, 1]
                if fn[c] > fn_peak[c]:
                    fn_peak[c] = fn[c]
            for l in range(nl):
                mag = np.sqrt(link_fx[l] * link_fx[l] + link_fz[l] * link_fz[l])
                if mag > link_f_peak[l]:
                    link_f_peak[l] = mag
            if s == n_sub - 1:
                for c in range(nc):
                    cp_pos[c, 0] = pw[c, 0]
                    cp_pos[c, 1] = pw[c, 1]
                    cp_f[c, 0] = f[c, 0]
                    cp_f[c, 1] = f[c, 1]
                    cp_fn[c] = fn[c]
        for a in range(nv):
            if not np.isfinite(qp[a]) or not np.isfinite(qv[a]):
                ok = False
        if not ok:
            break
        if abs(qv[0]) > 50.0 or abs(qv[1]) > 50.0:
            ok = False
            break
    return (qp, qv, tau_max, tau_last, cp_pos, cp_f, cp_fn, fn_peak, link_f_peak,
            anchor_x, anchor_on, ok)


def mass_matrix(chain: Chain, qpos: np.ndarray, armature: np.ndarray | None = None) -> np.ndarray:
    """M(q) for analysis and the engine-side kinetic energy."""
    if armature is None:
        armature = np.zeros(chain.nv - 3)
    ang, org, cw = _fk(chain.parent, chain.anchor, chain.com, qpos)
    om, vo, ao = _link_rates(chain.parent, chain.anchor, chain.com, qpos,
                             np.zeros(chain.nv), ang, org)
    M, _ = _mass_and_bias(chain.parent, chain.anchor, chain.com, chain.mass,
                          chain.inertia, qpos, np.zeros(chain.nv),
                          ang, org, cw, om, ao, 0.0, armature)
    return M


def mechanical_energy(chain: Chain, qpos: np.ndarray, qvel: np.ndarray,
                      gravity: float) -> float:
    """Engine-side KE + PE (the oracle tests recompute this independently)."""
    M = mass_matrix(chain, qpos)
    ke = 0.5 * float(qvel @ M @ qvel)
    _, _, cw = _fk(chain.parent, chain.anchor, chain.com, qpos)
    pe = float(np.sum(chain.mass * gravity * cw[:, 1]))
    return ke + pe


def link_frames(chain: Chain, qpos: np.ndarray):
    """World (angles, origins, coms) — thin wrapper for analysis code."""
    return _fk(chain.parent, chain.anchor, chain.com, qpos)


def contact_point_world(chain: Chain, qpos: np.ndarray) -> np.ndarray:
    """World positions of the declared contact points."""
    ang, org, _ = _fk(chain.parent, chain.anchor, chain.com, qpos)
    out = np.zeros((len(chain.cpt_link), 2))
    for c, l in enumerate(chain.cpt_link):
        ca, sa = np.cos(ang[l]), np.sin(ang[l])
        out[c, 0] = org[l, 0] + ca * chain.cpt_pos[c, 0] - sa * chain.cpt_pos[c, 1]
        out[c, 1] = org[l, 1] + sa * chain.cpt_pos[c, 0] + ca * chain.cpt_pos[c, 1]
    return out
