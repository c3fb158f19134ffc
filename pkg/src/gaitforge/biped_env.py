"""Planar torque-driven biped with penalty-based box-foot contact.

Generalized coordinates (9)::

    0 pelvis x   1 pelvis z   2 pelvis pitch
    3 hip L      4 knee L     5 ankle L
    6 hip R      7 knee R     8 ankle R

Angles are counter-clockwise with x forward and z up. Hip flexion, knee
flexion and ankle dorsiflexion are positive, so the absolute thigh angle is
``pitch + hip``, the shank is ``thigh - knee`` and the foot ``shank - ankle``.
The pelvis point is the hip joint; the trunk is lumped with the pelvis.

Dynamics use the planar kinematic tree directly: every body point has a
2x9 Jacobian built from its ancestors, which gives the mass matrix
``sum m J^T J + I C^T C`` and the velocity-product terms exactly. Integration
is semi-implicit Euler at 1 kHz. After each substep the base velocity is
corrected so that the centre-of-mass velocity changes by exactly
``dt * F_external / m``.
"""
from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numba
import numpy as np

from .errors import NumericalBlowup
from .synth_model import SyntheticCycle, periodic_interp

N_Q = 9
N_JOINTS = 6
OBS_DIM = 18
JOINT_NAMES = ("hip_l", "knee_l", "ankle_l", "hip_r", "knee_r", "ankle_r")
CONTROL_DT = 0.01
PHYS_DT = 0.001
SUBSTEPS = 10
BLOWUP_LIMIT = 1e6

# observation layout
OBS_TARGET = 0
OBS_Z = 1
OBS_PITCH = 2
OBS_VX = 3
OBS_VZ = 4
OBS_PITCH_RATE = 5
OBS_ANGLES = slice(6, 12)
OBS_VELS = slice(12, 18)


@dataclass(frozen=True)
class BipedModel:
    total_mass: float = 86.62
    mass_fraction_trunk: float = 0.678
    mass_fraction_thigh: float = 0.10
    mass_fraction_shank: float = 0.0465
    mass_fraction_foot: float = 0.0145
    trunk_length: float = 0.80
    trunk_com_height: float = 0.30
    thigh_length: float = 0.42
    shank_length: float = 0.43
    thigh_com_ratio: float = 0.433
    shank_com_ratio: float = 0.433
    foot_length: float = 0.26
    foot_height: float = 0.06
    ankle_from_heel: float = 0.13
    gravity: float = 9.81
    k_contact: float = 3.0e4
    d_contact: float = 1.0e3
    d_tangent: float = 1.0e3
    friction: float = 0.9
    torque_limits: tuple = (150.0, 150.0, 100.0)
    joint_lower: tuple = (-0.8, 0.0, -0.9)
    joint_upper: tuple = (1.8, 2.6, 0.7)
    fall_height_ratio: float = 0.6
    fall_pitch: float = 1.0

    def __post_init__(self):
        fr = (self.mass_fraction_trunk + 2 * self.mass_fraction_thigh
              + 2 * self.mass_fraction_shank + 2 * self.mass_fraction_foot)
        if abs(fr - 1.0) > 1e-9:
            raise ValueError(f"mass fractions sum to {fr}, expected 1")
        for name in ("trunk_length", "thigh_length", "shank_length", "foot_length", "foot_height"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def standing_height(self) -> float:
        return self.thigh_length + self.shank_length + self.foot_height

    @property
    def torque_limit_vector(self) -> np.ndarray:
        return np.array(self.torque_limits * 2, dtype=float)

    @cached_property
    def arrays(self) -> dict:
        """Flat parameter arrays consumed by the compiled kernels."""
        m = self.total_mass
        mt, mth, msh, mf = (m * self.mass_fraction_trunk, m * self.mass_fraction_thigh,
                            m * self.mass_fraction_shank, m * self.mass_fraction_foot)
        rod = lambda mass, length: mass * length ** 2 / 12.0  # noqa: E731
        i_foot = mf * (self.foot_length ** 2 + self.foot_height ** 2) / 12.0
        foot_com_x = 0.5 * self.foot_length - self.ankle_from_heel
        seg = {
            "parent": np.array([-1, 0, 1, 2, 0, 4, 5], dtype=np.int64),
            "qidx": np.array([2, 3, 4, 5, 6, 7, 8], dtype=np.int64),
            "sign": np.array([1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]),
            "joint": np.array([[0, 0], [0, 0], [0, -self.thigh_length], [0, -self.shank_length],
                               [0, 0], [0, -self.thigh_length], [0, -self.shank_length]], dtype=float),
            "com": np.array([[0, self.trunk_com_height],
                             [0, -self.thigh_com_ratio * self.thigh_length],
                             [0, -self.shank_com_ratio * self.shank_length],
                             [foot_com_x, -0.5 * self.foot_height],
                             [0, -self.thigh_com_ratio * self.thigh_length],
                             [0, -self.shank_com_ratio * self.shank_length],
                             [foot_com_x, -0.5 * self.foot_height]], dtype=float),
            "mass": np.array([mt, mth, msh, mf, mth, msh, mf]),
            "inertia": np.array([rod(mt, self.trunk_length), rod(mth, self.thigh_length),
                                 rod(msh, self.shank_length), i_foot,
                                 rod(mth, self.thigh_length), rod(msh, self.shank_length), i_foot]),
        }
        heel = (-self.ankle_from_heel, -self.foot_height)
        toe = (self.foot_length - self.ankle_from_heel, -self.foot_height)
        seg["corner_seg"] = np.array([3, 3, 6, 6], dtype=np.int64)
        seg["corner_pos"] = np.array([heel, toe, heel, toe], dtype=float)
        seg["contact"] = np.array([self.k_contact, self.d_contact, self.d_tangent,
                                   self.friction, self.gravity])
        seg["lower"] = np.array(self.joint_lower * 2, dtype=float)
        seg["upper"] = np.array(self.joint_upper * 2, dtype=float)
        return seg

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "BipedModel":
        doc = json.loads(text)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown model parameters: {sorted(unknown)}")
        for key in ("torque_limits", "joint_lower", "joint_upper"):
            if key in doc:
                doc[key] = tuple(float(v) for v in doc[key])
        return cls(**doc)


@dataclass
class BipedState:
    q: np.ndarray
    qdot: np.ndarray
    t: float = 0.0

    def copy(self) -> "BipedState":
        return BipedState(self.q.copy(), self.qdot.copy(), self.t)


# --------------------------------------------------------------------------
# compiled kernels

@numba.njit(cache=True)
def _tree(q, qd, parent, qidx, sign, joint):
    n = parent.shape[0]
    theta = np.zeros(n)
    omega = np.zeros(n)
    C = np.zeros((n, N_Q))
    O = np.zeros((n, 2))
    OJ = np.zeros((n, 2, N_Q))
    Ob = np.zeros((n, 2))
    for s in range(n):
        p = parent[s]
        if p < 0:
            theta[s] = q[qidx[s]]
            C[s, qidx[s]] = 1.0
            O[s, 0] = q[0]
            O[s, 1] = q[1]
            OJ[s, 0, 0] = 1.0
            OJ[s, 1, 1] = 1.0
        else:
            theta[s] = theta[p] + sign[s] * q[qidx[s]]
            C[s, :] = C[p, :]
            C[s, qidx[s]] += sign[s]
            c = np.cos(theta[p])
            sn = np.sin(theta[p])
            rx = c * joint[s, 0] - sn * joint[s, 1]
            rz = sn * joint[s, 0] + c * joint[s, 1]
            O[s, 0] = O[p, 0] + rx
            O[s, 1] = O[p, 1] + rz
            for k in range(N_Q):
                OJ[s, 0, k] = OJ[p, 0, k] - rz * C[p, k]
                OJ[s, 1, k] = OJ[p, 1, k] + rx * C[p, k]
            w2 = omega[p] * omega[p]
            Ob[s, 0] = Ob[p, 0] - w2 * rx
            Ob[s, 1] = Ob[p, 1] - w2 * rz
        w = 0.0
        for k in range(N_Q):
            w += C[s, k] * qd[k]
        omega[s] = w
    return theta, omega, C, O, OJ, Ob


@numba.njit(cache=True)
def _point(s, local, theta, omega, C, O, OJ, Ob):
    """World position, 2x9 Jacobian and velocity-product acceleration of a body point."""
    c = np.cos(theta[s])
    sn = np.sin(theta[s])
    rx = c * local[0] - sn * local[1]
    rz = sn * local[0] + c * local[1]
    pos = np.empty(2)
    pos[0] = O[s, 0] + rx
    pos[1] = O[s, 1] + rz
    J = np.empty((2, N_Q))
    for k in range(N_Q):
        J[0, k] = OJ[s, 0, k] - rz * C[s, k]
        J[1, k] = OJ[s, 1, k] + rx * C[s, k]
    w2 = omega[s] * omega[s]
    bias = np.empty(2)
    bias[0] = Ob[s, 0] - w2 * rx
    bias[1] = Ob[s, 1] - w2 * rz
    return pos, J, bias


@numba.njit(cache=True)
def _com_jacobian(q, qd, parent, qidx, sign, joint, com, mass):
    theta, omega, C, O, OJ, Ob = _tree(q, qd, parent, qidx, sign, joint)
    Jc = np.zeros((2, N_Q))
    pc = np.zeros(2)
    mt = 0.0
    for s in range(parent.shape[0]):
        pos, J, _ = _point(s, com[s], theta, omega, C, O, OJ, Ob)
        Jc += mass[s] * J
        pc += mass[s] * pos
        mt += mass[s]
    return pc / mt, Jc / mt


@numba.njit(cache=True)
def _dynamics(q, qd, tau, parent, qidx, sign, joint, com, mass, inertia,
              corner_seg, corner_pos, contact):
    """Mass matrix, generalized force and total external force at (q, qd)."""
    k_c, d_c, d_t, mu, g = contact[0], contact[1], contact[2], contact[3], contact[4]
    theta, omega, C, O, OJ, Ob = _tree(q, qd, parent, qidx, sign, joint)
    M = np.zeros((N_Q, N_Q))
    Q = np.zeros(N_Q)
    fext = np.zeros(2)
    for s in range(parent.shape[0]):
        pos, J, bias = _point(s, com[s], theta, omega, C, O, OJ, Ob)
        m = mass[s]
        for i in range(N_Q):
            Q[i] += -m * g * J[1, i] - m * (J[0, i] * bias[0] + J[1, i] * bias[1])
            for j in range(N_Q):
                M[i, j] += m * (J[0, i] * J[0, j] + J[1, i] * J[1, j]) + inertia[s] * C[s, i] * C[s, j]
        fext[1] -= m * g
    for c in range(corner_seg.shape[0]):
        pos, J, _ = _point(corner_seg[c], corner_pos[c], theta, omega, C, O, OJ, Ob)
        if pos[1] < 0.0:
            vx = 0.0
            vz = 0.0
            for k in range(N_Q):
                vx += J[0, k] * qd[k]
                vz += J[1, k] * qd[k]
            fn = -k_c * pos[1] - d_c * vz
            if fn < 0.0:
                fn = 0.0
            ft = -d_t * vx
            cap = mu * fn
            if ft > cap:
                ft = cap
            elif ft < -cap:
                ft = -cap
            for k in range(N_Q):
                Q[k] += J[0, k] * ft + J[1, k] * fn
            fext[0] += ft
            fext[1] += fn
    for j in range(N_Q - 3):
        Q[3 + j] += tau[j]
    return M, Q, fext


@numba.njit(cache=True)
def _integrate(q, qd, tau, n_sub, dt, parent, qidx, sign, joint, com, mass, inertia,
               corner_seg, corner_pos, contact, lower, upper, limit):
    q = q.copy()
    qd = qd.copy()
    m_tot = 0.0
    for s in range(mass.shape[0]):
        m_tot += mass[s]
    for _ in range(n_sub):
        M, Q, fext = _dynamics(q, qd, tau, parent, qidx, sign, joint, com, mass, inertia,
                               corner_seg, corner_pos, contact)
        qdd = np.linalg.solve(M, Q)
        _, Jc = _com_jacobian(q, qd, parent, qidx, sign, joint, com, mass)
        vt = Jc @ qd + dt * fext / m_tot
        qd = qd + dt * qdd
        q = q + dt * qd
        for j in range(N_Q - 3):
            if q[3 + j] > upper[j]:
                q[3 + j] = upper[j]
                if qd[3 + j] > 0.0:
                    qd[3 + j] = 0.0
            elif q[3 + j] < lower[j]:
                q[3 + j] = lower[j]
                if qd[3 + j] < 0.0:
                    qd[3 + j] = 0.0
        _, Jc = _com_jacobian(q, qd, parent, qidx, sign, joint, com, mass)
        vn = Jc @ qd
        qd[0] += vt[0] - vn[0]
        qd[1] += vt[1] - vn[1]
        for k in range(N_Q):
            if not (abs(q[k]) <= limit and abs(qd[k]) <= limit):
                return q, qd, True
    return q, qd, False


@numba.njit(cache=True)
def _points(q, parent, qidx, sign, joint, which_seg, local):
    qd = np.zeros(N_Q)
    theta, omega, C, O, OJ, Ob = _tree(q, qd, parent, qidx, sign, joint)
    out = np.empty((which_seg.shape[0], 2))
    for i in range(which_seg.shape[0]):
        pos, _, _ = _point(which_seg[i], local[i], theta, omega, C, O, OJ, Ob)
        out[i] = pos
    return out


# --------------------------------------------------------------------------
# python API

def _tree_args(model: BipedModel):
    a = model.arrays
    return a["parent"], a["qidx"], a["sign"], a["joint"]


def mass_matrix(model: BipedModel, state: BipedState) -> np.ndarray:
    a = model.arrays
    M, _, _ = _dynamics(state.q, state.qdot, np.zeros(N_JOINTS), *_tree_args(model), a["com"],
                        a["mass"], a["inertia"], a["corner_seg"], a["corner_pos"], a["contact"])
    return M


def generalized_forces(model: BipedModel, state: BipedState, torques=None):
    """Right-hand side ``Q`` of ``M qdd = Q`` and the net external force."""
    a = model.arrays
    tau = np.zeros(N_JOINTS) if torques is None else np.asarray(torques, dtype=float)
    _, Q, fext = _dynamics(state.q, state.qdot, tau, *_tree_args(model), a["com"], a["mass"],
                           a["inertia"], a["corner_seg"], a["corner_pos"], a["contact"])
    return Q, fext


def com_position(model: BipedModel, state: BipedState) -> np.ndarray:
    a = model.arrays
    pc, _ = _com_jacobian(state.q, state.qdot, *_tree_args(model), a["com"], a["mass"])
    return pc


def com_velocity_vector(model: BipedModel, state: BipedState) -> np.ndarray:
    a = model.arrays
    _, Jc = _com_jacobian(state.q, state.qdot, *_tree_args(model), a["com"], a["mass"])
    return Jc @ state.qdot


def com_velocity(model: BipedModel, state: BipedState) -> float:
    """Forward (x) velocity of the whole-body centre of mass."""
    return float(com_velocity_vector(model, state)[0])


def segment_coms(model: BipedModel, q) -> np.ndarray:
    a = model.arrays
    seg = np.arange(a["mass"].size, dtype=np.int64)
    return _points(np.asarray(q, dtype=float), *_tree_args(model), seg, a["com"])


def foot_corners(model: BipedModel, q) -> np.ndarray:
    """World positions of heel/toe corners, rows: heel L, toe L, heel R, toe R."""
    a = model.arrays
    return _points(np.asarray(q, dtype=float), *_tree_args(model), a["corner_seg"], a["corner_pos"])


def mechanical_energy(model: BipedModel, state: BipedState) -> float:
    a = model.arrays
    kinetic = 0.5 * state.qdot @ mass_matrix(model, state) @ state.qdot
    potential = model.gravity * float(a["mass"] @ segment_coms(model, state.q)[:, 1])
    return float(kinetic + potential)


def clamp_torques(model: BipedModel, action) -> np.ndarray:
    lim = model.torque_limit_vector
    return np.clip(np.asarray(action, dtype=float), -lim, lim)


def observe(model: BipedModel, state: BipedState, target_speed: float) -> np.ndarray:
    q, qd = state.q, state.qdot
    obs = np.empty(OBS_DIM)
    obs[OBS_TARGET] = target_speed
    obs[OBS_Z] = q[1]
    obs[OBS_PITCH] = q[2]
    obs[OBS_VX] = qd[0]
    obs[OBS_VZ] = qd[1]
    obs[OBS_PITCH_RATE] = qd[2]
    obs[OBS_ANGLES] = q[3:]
    obs[OBS_VELS] = qd[3:]
    return obs


def has_fallen(model: BipedModel, state: BipedState) -> bool:
    return bool(state.q[1] < model.fall_height_ratio * model.standing_height
                or abs(state.q[2]) > model.fall_pitch)


def step(model: BipedModel, state: BipedState, action, n_substeps: int = SUBSTEPS,
         target_speed: float = 0.0, dt: float = PHYS_DT):
    """Advance ``n_substeps`` physics steps under constant joint torques.

    Returns ``(state, observation, fell)``. A numerical blow-up is reported
    as a fall with the last finite state kept.
    """
    a = model.arrays
    tau = clamp_torques(model, action)
    if not np.all(np.isfinite(tau)):
        raise ValueError("non-finite action")
    q, qd, blown = _integrate(state.q, state.qdot, tau, int(n_substeps), float(dt),
                              *_tree_args(model), a["com"], a["mass"], a["inertia"],
                              a["corner_seg"], a["corner_pos"], a["contact"],
                              a["lower"], a["upper"], BLOWUP_LIMIT)
    if blown:
        new = state.copy()
        return new, observe(model, new, target_speed), True
    new = BipedState(q, qd, state.t + n_substeps * dt)
    return new, observe(model, new, target_speed), has_fallen(model, new)


def step_checked(model: BipedModel, state: BipedState, action, n_substeps: int = SUBSTEPS,
                 dt: float = PHYS_DT) -> BipedState:
    """Like :func:`step` but raises :class:`NumericalBlowup` instead of flagging."""
    a = model.arrays
    q, qd, blown = _integrate(state.q, state.qdot, clamp_torques(model, action), int(n_substeps),
                              float(dt), *_tree_args(model), a["com"], a["mass"], a["inertia"],
                              a["corner_seg"], a["corner_pos"], a["contact"],
                              a["lower"], a["upper"], BLOWUP_LIMIT)
    if blown:
        raise NumericalBlowup("state magnitude exceeded 1e6")
    return BipedState(q, qd, state.t + n_substeps * dt)


def clamp_joints(model: BipedModel, joints) -> np.ndarray:
    a = model.arrays
    return np.clip(joints, a["lower"], a["upper"])


def pose_from_cycle(synth: SyntheticCycle, phase: float):
    """Six joint angles and rates at ``phase``; the right leg leads by half a cycle."""
    ang_l = periodic_interp(synth.angles, phase)
    ang_r = periodic_interp(synth.angles, phase + 0.5)
    vel_l = periodic_interp(synth.velocities, phase)
    vel_r = periodic_interp(synth.velocities, phase + 0.5)
    return np.concatenate([ang_l, ang_r]), np.concatenate([vel_l, vel_r])


def sample_pose(synth: SyntheticCycle, index: int):
    """Exact samples of the cycle at integer ``index`` (right leg offset T/2)."""
    T = synth.n_samples
    i_l = index % T
    if T % 2 == 0:
        i_r = (index + T // 2) % T
        ang = np.concatenate([synth.angles[:, i_l], synth.angles[:, i_r]])
        vel = np.concatenate([synth.velocities[:, i_l], synth.velocities[:, i_r]])
        return ang, vel
    return pose_from_cycle(synth, i_l / T)


def place_on_ground(model: BipedModel, q) -> np.ndarray:
    """Shift pelvis height so the lowest foot corner sits at z = 0."""
    q = np.array(q, dtype=float)
    q[1] = 0.0
    q[1] = -foot_corners(model, q)[:, 1].min()
    return q


def reset(model: BipedModel, target_speed: float, synth: SyntheticCycle,
          rng: np.random.Generator | None = None, noise: float = 0.02):
    """Start an episode from the synthetic phase-0 pose.

    Joint angles get uniform noise in ``[-noise, noise]`` (disabled when
    ``rng`` is None or ``noise`` is 0), the pelvis is upright and the lowest
    foot corner touches the ground. Joint rates come from the cycle and the
    pelvis moves forward at ``target_speed``.
    """
    ang, vel = sample_pose(synth, 0)
    if rng is not None and noise > 0:
        ang = ang + rng.uniform(-noise, noise, size=N_JOINTS)
    q = np.zeros(N_Q)
    q[3:] = clamp_joints(model, ang)
    q = place_on_ground(model, q)
    qd = np.zeros(N_Q)
    qd[0] = target_speed
    qd[3:] = vel
    state = BipedState(q, qd, 0.0)
    return state, observe(model, state, target_speed)


def joint_kinetics(model: BipedModel, state: BipedState, action) -> dict:
    """Mass-normalized joint torque (N m/kg) and power (W/kg)."""
    tau = clamp_torques(model, action)
    return {
        "torque_per_mass": tau / model.total_mass,
        "power_per_mass": tau * state.qdot[3:] / model.total_mass,
    }


def mirror_state(state: BipedState) -> BipedState:
    idx = np.array([0, 1, 2, 6, 7, 8, 3, 4, 5])
    return BipedState(state.q[idx].copy(), state.qdot[idx].copy(), state.t)


def mirror_action(action) -> np.ndarray:
    action = np.asarray(action, dtype=float)
    return np.concatenate([action[3:], action[:3]])


class WalkingEnv:
    """Stateful wrapper used for rollouts and evaluation.

    Holds its own state and target speed; instances share nothing.
    """

    def __init__(self, model: BipedModel | None = None, n_substeps: int = SUBSTEPS,
                 reset_noise: float = 0.02):
        self.model = model or BipedModel()
        self.n_substeps = n_substeps
        self.reset_noise = reset_noise
        self.state: BipedState | None = None
        self.target_speed = 0.0
        self.trace: list | None = None

    @property
    def control_dt(self) -> float:
        return self.n_substeps * PHYS_DT

    def reset(self, target_speed: float, synth: SyntheticCycle, rng=None) -> np.ndarray:
        self.target_speed = float(target_speed)
        self.state, obs = reset(self.model, target_speed, synth, rng, self.reset_noise)
        return obs

    def observe(self) -> np.ndarray:
        return observe(self.model, self.state, self.target_speed)

    def step(self, torques):
        tau = clamp_torques(self.model, torques)
        self.state, obs, fell = step(self.model, self.state, tau, self.n_substeps, self.target_speed)
        if self.trace is not None:
            self.trace.append((self.state.t, self.state.q.copy(), self.state.qdot.copy(),
                               tau.copy(), self.com_vx(), fell))
        return obs, fell

    def set_state(self, state: BipedState) -> None:
        self.state = state

    def com_vx(self) -> float:
        return com_velocity(self.model, self.state)

    def start_trace(self) -> None:
        self.trace = []

    def trace_csv(self) -> str:
        buf = io.StringIO()
        cols = (["t"] + [f"q{i}" for i in range(N_Q)] + [f"qdot{i}" for i in range(N_Q)]
                + [f"action{i}" for i in range(N_JOINTS)] + ["com_vx", "fell"])
        buf.write(",".join(cols) + "\n")
        for t, q, qd, tau, vx, fell in self.trace or []:
            vals = [t, *q, *qd, *tau, vx]
            buf.write(",".join(repr(float(v)) for v in vals) + f",{int(fell)}\n")
        return buf.getvalue()
