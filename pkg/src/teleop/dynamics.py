"""Gravity/friction compensation, inverse dynamics and PD torque.

Links are treated as point masses at their com: the chain configs carry no
inertia tensors, and the behavior under test (compensation plus impedance)
depends on the gravity and PD terms, not on exact inertial coupling. The
inverse dynamics pass is a recursive Newton-Euler sweep specialized to that
point-mass model; with zero velocity and acceleration it reduces exactly to
the gravity term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import KinematicChain, chain_arrays
from .kinematics import ChainFrames, chain_frames

SMOOTH_SIGN_EPS = 0.01  # rad/s; tanh knee of the Coulomb term


@dataclass
class Gains:
    kp: np.ndarray  # (n,) N*m/rad
    kd: np.ndarray  # (n,) N*m*s/rad

    def __post_init__(self):
        self.kp = np.asarray(self.kp, dtype=float)
        self.kd = np.asarray(self.kd, dtype=float)
        if self.kp.shape != self.kd.shape:
            raise ValueError("kp and kd must have equal length")
        if not (np.all(np.isfinite(self.kp)) and np.all(np.isfinite(self.kd))):
            raise ValueError("gains must be finite")
        if np.any(self.kp < 0) or np.any(self.kd < 0):
            raise ValueError("gains must be >= 0")

    @staticmethod
    def uniform(n: int, kp: float, kd: float) -> "Gains":
        return Gains(np.full(n, float(kp)), np.full(n, float(kd)))

    def copy(self) -> "Gains":
        return Gains(self.kp.copy(), self.kd.copy())


@dataclass
class JointState:
    q: np.ndarray  # rad
    qd: np.ndarray  # rad/s
    tick: int = 0
    dt: float = 0.005  # s

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qd = np.asarray(self.qd, dtype=float)
        if self.q.shape != self.qd.shape:
            raise ValueError("q and qd must have equal length")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")

    def copy(self) -> "JointState":
        return JointState(self.q.copy(), self.qd.copy(), self.tick, self.dt)


def potential_energy(chain: KinematicChain, q: np.ndarray) -> float:
    """Total gravitational potential energy of the point-mass links (J)."""
    arr = chain_arrays(chain)
    frames = chain_frames(chain, q)
    return float(-np.sum(arr.masses * (frames.coms_world @ arr.gravity)))


def gravity_torque(
    chain: KinematicChain, q: np.ndarray, frames: ChainFrames | None = None
) -> np.ndarray:
    """Holding torque against gravity: the gradient of potential energy.

    Adding this to the commanded motor torque keeps the arm static; the
    plant itself contributes the negative of it. Callers that already hold
    this q's ChainFrames can pass it to skip the sweep.

    tau_i = -z_i . sum_{j>=i} m_j (c_j - o_i) x g, evaluated with suffix
    sums of m_j (c_j x g) and m_j.
    """
    arr = chain_arrays(chain)
    if frames is None:
        frames = chain_frames(chain, q)
    g = arr.gravity
    m = arr.masses
    w = _cross_rows_static(frames.coms_world, g) * m[:, None]  # m_j (c_j x g)
    suffix_w = np.cumsum(w[::-1], axis=0)[::-1]
    suffix_m = np.cumsum(m[::-1])[::-1]
    o_cross_g = _cross_rows_static(frames.origins, g)
    moments = suffix_w - suffix_m[:, None] * o_cross_g
    return -np.einsum("ij,ij->i", frames.axes_world, moments)


def _cross_rows_static(rows: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-wise cross product of each row of (n,3) with a fixed 3-vector."""
    out = np.empty_like(rows)
    out[:, 0] = rows[:, 1] * v[2] - rows[:, 2] * v[1]
    out[:, 1] = rows[:, 2] * v[0] - rows[:, 0] * v[2]
    out[:, 2] = rows[:, 0] * v[1] - rows[:, 1] * v[0]
    return out


def friction_compensation(qd: np.ndarray, chain: KinematicChain) -> np.ndarray:
    """Feedforward torque canceling viscous + Coulomb joint friction.

    Coulomb uses tanh(qd/eps) instead of sign(qd) so the compensation stays
    continuous through zero velocity (no chatter).
    """
    arr = chain_arrays(chain)
    qd = np.asarray(qd, dtype=float)
    if qd.shape != arr.viscous.shape:
        raise ValueError(f"expected {len(arr.viscous)} velocities, got {qd.shape}")
    return arr.viscous * qd + arr.coulomb * np.tanh(qd / SMOOTH_SIGN_EPS)


def inverse_dynamics(
    chain: KinematicChain,
    q: np.ndarray,
    qd: np.ndarray,
    qdd_desired: np.ndarray,
) -> np.ndarray:
    """Joint torques realizing qdd_desired at (q, qd) for point-mass links.

    Recursive Newton-Euler: an outward sweep propagates angular velocity /
    acceleration and com accelerations (gravity enters as a fictitious base
    acceleration), an inward sweep accumulates forces and moments.
    """
    arr = chain_arrays(chain)
    n = chain.n_joints
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    qdd = np.asarray(qdd_desired, dtype=float)
    if not (q.shape == qd.shape == qdd.shape == (n,)):
        raise ValueError("q, qd, qdd_desired must all have the joint count length")

    frames = chain_frames(chain, q)
    z = frames.axes_world
    o = frames.origins
    c = frames.coms_world

    omega = np.zeros(3)  # link angular velocity
    alpha = np.zeros(3)  # link angular acceleration
    a_o = -arr.gravity  # origin linear acceleration (gravity trick)
    com_acc = np.empty((n, 3))
    prev_origin = np.zeros(3)
    for i in range(n):
        r = o[i] - prev_origin
        a_o = a_o + np.cross(alpha, r) + np.cross(omega, np.cross(omega, r))
        # joint axis is fixed in the parent link, so its rate is omega x z
        alpha = alpha + z[i] * qdd[i] + np.cross(omega, z[i]) * qd[i]
        omega = omega + z[i] * qd[i]
        rc = c[i] - o[i]
        com_acc[i] = a_o + np.cross(alpha, rc) + np.cross(omega, np.cross(omega, rc))
        prev_origin = o[i]

    tau = np.zeros(n)
    force = np.zeros(3)  # force passed up from the distal side
    moment = np.zeros(3)  # moment about the current joint origin
    for i in range(n - 1, -1, -1):
        f_i = arr.masses[i] * com_acc[i]
        if i < n - 1:
            moment = moment + np.cross(o[i + 1] - o[i], force)
        moment = moment + np.cross(c[i] - o[i], f_i)
        force = force + f_i
        tau[i] = z[i] @ moment
    return tau


def pd_torque(gains: Gains, q_err: np.ndarray, qd: np.ndarray) -> np.ndarray:
    """Elementwise kp*q_err - kd*qd."""
    q_err = np.asarray(q_err, dtype=float)
    qd = np.asarray(qd, dtype=float)
    if q_err.shape != gains.kp.shape or qd.shape != gains.kd.shape:
        raise ValueError("q_err/qd length must match the gain vectors")
    return gains.kp * q_err - gains.kd * qd
