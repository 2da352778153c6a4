"""Forward kinematics, geometric Jacobian, augmented IK and retargeting.

The IK solver is damped least squares over a stacked weighted residual with
two auxiliary posture tasks on top of the usual position/orientation pair:

* a base-yaw task that aligns the first joint with the azimuth of the target
  position, keeping the arm facing the direction of travel, and
* a one-sided elbow-height task that pushes a configured joint origin above a
  reference height, which keeps redundant arms from folding outward into
  singular postures when the target comes close to the base.

Weighting is single-level (no strict task hierarchy); the auxiliary weights
are small so the Cartesian tasks dominate. Non-convergence is reported, not
raised: a streaming caller wants the best-effort solution every tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import KinematicChain, chain_arrays
from .rotations import (
    IDENTITY_QUAT,
    matrix_from_quat,
    orientation_error,
    quat_from_matrix,
    quat_normalize,
)

YAW_EPS = 1e-6  # m; targets within this cylinder radius disable the yaw task


@dataclass
class Pose:
    position: np.ndarray  # (3,) m
    orientation: np.ndarray  # (4,) unit quaternion, scalar-last

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.orientation = np.asarray(self.orientation, dtype=float)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), IDENTITY_QUAT.copy())

    def copy(self) -> "Pose":
        return Pose(self.position.copy(), self.orientation.copy())


@dataclass(frozen=True)
class IkTaskWeights:
    # the posture weights are deliberately tiny: their pull accumulates
    # across warm-started streaming solves, while the per-solve bias on the
    # Cartesian tasks stays below the position tolerance
    w_position: float = 1.0
    w_orientation: float = 0.5
    w_base_yaw: float = 0.003
    w_elbow: float = 0.01

    def __post_init__(self):
        if not self.w_position > 0:
            raise ValueError("w_position must be > 0 (primary task)")
        for name in ("w_orientation", "w_base_yaw", "w_elbow"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class IkParams:
    damping: float = 0.05
    max_iterations: int = 100
    position_tol: float = 1e-5  # m
    orientation_tol: float = 1e-4  # rad
    step_clamp: float = 0.2  # rad per iteration
    elbow_z_ref: float = 0.25  # m
    elbow_joint_index: int = 3
    # the yaw task only engages inside its capture zone: aligning an
    # already-misaligned base across a large angle is a reposition, not a
    # posture correction, and would fight the Cartesian tasks forever
    yaw_capture: float = 0.5  # rad
    # the elbow deficit saturates so deep violations cannot swamp position
    elbow_residual_clamp: float = 0.1  # m

    def __post_init__(self):
        if self.damping <= 0:
            raise ValueError("damping must be > 0")
        if self.position_tol <= 0 or self.orientation_tol <= 0:
            raise ValueError("tolerances must be > 0")
        if self.step_clamp <= 0:
            raise ValueError("step_clamp must be > 0")


@dataclass
class IkReport:
    converged: bool
    iterations: int
    position_residual: float
    orientation_residual: float
    yaw_task_active: bool


@dataclass(frozen=True)
class RetargetMap:
    scale: float = 1.0
    leader_origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    follower_origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 1.0)

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError("retarget scale must be finite and > 0")


@dataclass
class ChainFrames:
    """One sweep over the chain: everything FK/Jacobian/dynamics need."""

    origins: np.ndarray  # (n, 3) world joint origins
    axes_world: np.ndarray  # (n, 3) world joint axes
    coms_world: np.ndarray  # (n, 3) world link com positions
    ee_position: np.ndarray  # (3,)
    ee_rotation: np.ndarray  # (3, 3)


def _cross_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cross product of (n,3) arrays; np.cross is slow for small n."""
    out = np.empty_like(a)
    out[:, 0] = a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1]
    out[:, 1] = a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2]
    out[:, 2] = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    return out


def frames_from_arrays(arr, q: np.ndarray) -> ChainFrames:
    """chain_frames for callers that already hold the cached chain arrays.

    The composition runs in scalar Python: for 3x3 blocks the interpreter
    arithmetic is faster than dispatching ~25 tiny numpy ops per sweep, and
    this sits on the control loop's critical path.
    """
    n = len(arr.axes_py)
    origins = []
    axes_world = []
    coms_world = []
    # R row-major scalars, p as scalars
    r00, r01, r02 = 1.0, 0.0, 0.0
    r10, r11, r12 = 0.0, 1.0, 0.0
    r20, r21, r22 = 0.0, 0.0, 1.0
    px = py = pz = 0.0
    identity_origins = arr.identity_origins
    cos = math.cos
    sin = math.sin
    for i in range(n):
        tx, ty, tz = arr.trans_py[i]
        px += r00 * tx + r01 * ty + r02 * tz
        py += r10 * tx + r11 * ty + r12 * tz
        pz += r20 * tx + r21 * ty + r22 * tz
        if not identity_origins:
            o00, o01, o02, o10, o11, o12, o20, o21, o22 = arr.origin_rot_py[i]
            r00, r01, r02, r10, r11, r12, r20, r21, r22 = (
                r00 * o00 + r01 * o10 + r02 * o20,
                r00 * o01 + r01 * o11 + r02 * o21,
                r00 * o02 + r01 * o12 + r02 * o22,
                r10 * o00 + r11 * o10 + r12 * o20,
                r10 * o01 + r11 * o11 + r12 * o21,
                r10 * o02 + r11 * o12 + r12 * o22,
                r20 * o00 + r21 * o10 + r22 * o20,
                r20 * o01 + r21 * o11 + r22 * o21,
                r20 * o02 + r21 * o12 + r22 * o22,
            )
        origins.append((px, py, pz))
        ax, ay, az = arr.axes_py[i]
        axes_world.append(
            (
                r00 * ax + r01 * ay + r02 * az,
                r10 * ax + r11 * ay + r12 * az,
                r20 * ax + r21 * ay + r22 * az,
            )
        )
        # Rodrigues for the joint rotation about the (unit) local axis
        c = cos(q[i])
        s = sin(q[i])
        C = 1.0 - c
        j00 = c + ax * ax * C
        j01 = ax * ay * C - az * s
        j02 = ax * az * C + ay * s
        j10 = ay * ax * C + az * s
        j11 = c + ay * ay * C
        j12 = ay * az * C - ax * s
        j20 = az * ax * C - ay * s
        j21 = az * ay * C + ax * s
        j22 = c + az * az * C
        r00, r01, r02, r10, r11, r12, r20, r21, r22 = (
            r00 * j00 + r01 * j10 + r02 * j20,
            r00 * j01 + r01 * j11 + r02 * j21,
            r00 * j02 + r01 * j12 + r02 * j22,
            r10 * j00 + r11 * j10 + r12 * j20,
            r10 * j01 + r11 * j11 + r12 * j21,
            r10 * j02 + r11 * j12 + r12 * j22,
            r20 * j00 + r21 * j10 + r22 * j20,
            r20 * j01 + r21 * j11 + r22 * j21,
            r20 * j02 + r21 * j12 + r22 * j22,
        )
        cx, cy, cz = arr.coms_py[i]
        coms_world.append(
            (
                px + r00 * cx + r01 * cy + r02 * cz,
                py + r10 * cx + r11 * cy + r12 * cz,
                pz + r20 * cx + r21 * cy + r22 * cz,
            )
        )
    ex, ey, ez = arr.ee_offset_py
    ee_position = np.array(
        (
            px + r00 * ex + r01 * ey + r02 * ez,
            py + r10 * ex + r11 * ey + r12 * ez,
            pz + r20 * ex + r21 * ey + r22 * ez,
        )
    )
    return ChainFrames(
        origins=np.array(origins),
        axes_world=np.array(axes_world),
        coms_world=np.array(coms_world),
        ee_position=ee_position,
        ee_rotation=np.array(((r00, r01, r02), (r10, r11, r12), (r20, r21, r22))),
    )


def chain_frames(chain: KinematicChain, q: np.ndarray) -> ChainFrames:
    arr = chain_arrays(chain)
    q = np.asarray(q, dtype=float)
    if q.shape != (len(arr.axes),):
        raise ValueError(f"expected {len(arr.axes)} joint values, got shape {q.shape}")
    return frames_from_arrays(arr, q)


def forward_kinematics(chain: KinematicChain, q: np.ndarray) -> Pose:
    frames = chain_frames(chain, q)
    return Pose(frames.ee_position, quat_from_matrix(frames.ee_rotation))


def jacobian(chain: KinematicChain, q: np.ndarray) -> np.ndarray:
    """Geometric Jacobian, 6 x n: rows 0-2 linear (m/rad), rows 3-5 angular."""
    frames = chain_frames(chain, q)
    return _jacobian_from_frames(frames)


def _jacobian_from_frames(frames: ChainFrames) -> np.ndarray:
    n = len(frames.origins)
    lever = frames.ee_position[None, :] - frames.origins
    J = np.empty((6, n))
    J[:3] = _cross_rows(frames.axes_world, lever).T
    J[3:] = frames.axes_world.T
    return J


def point_jacobian(frames: ChainFrames, point: np.ndarray, upto: int | None = None) -> np.ndarray:
    """Positional Jacobian (3 x n) of a world point rigidly attached to the
    link after joint `upto-1` (all columns from `upto` onward are zero)."""
    n = len(frames.origins)
    upto = n if upto is None else upto
    J = np.zeros((3, n))
    lever = point[None, :] - frames.origins[:upto]
    J[:, :upto] = _cross_rows(frames.axes_world[:upto], lever).T
    return J


def base_yaw_reference(target_position: np.ndarray) -> float | None:
    """Azimuth of the target about the base z axis; None when the target is
    on (or numerically at) the axis and the yaw task must be disabled."""
    x, y = float(target_position[0]), float(target_position[1])
    if x * x + y * y <= YAW_EPS * YAW_EPS:
        return None
    return float(np.arctan2(y, x))


def elbow_z_residual(
    chain: KinematicChain,
    q: np.ndarray,
    elbow_joint_index: int,
    elbow_z_ref: float,
) -> tuple[float, np.ndarray]:
    """One-sided height deficit of a joint origin and its gradient wrt q.

    residual = max(0, elbow_z_ref - z_elbow(q)); the gradient is the z row of
    that point's positional Jacobian, negated, and zero when satisfied.
    """
    n = chain.n_joints
    if not 0 <= elbow_joint_index < n:
        raise IndexError(
            f"elbow_joint_index {elbow_joint_index} out of range for "
            f"{n}-joint chain"
        )
    frames = chain_frames(chain, q)
    z_elbow = float(frames.origins[elbow_joint_index][2])
    residual = elbow_z_ref - z_elbow
    if residual <= 0.0:
        return 0.0, np.zeros(n)
    J = point_jacobian(frames, frames.origins[elbow_joint_index], upto=elbow_joint_index)
    return residual, -J[2]


def _wrap_angle(a: float) -> float:
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def solve_ik(
    chain: KinematicChain,
    target: Pose,
    seed: np.ndarray,
    weights: IkTaskWeights = IkTaskWeights(),
    params: IkParams = IkParams(),
) -> tuple[np.ndarray, IkReport]:
    """Damped-least-squares IK over the stacked weighted task residual.

    Returns the best-effort joint vector (always within limits) plus a
    report; callers in a streaming loop warm-start with last tick's result.
    Convergence means the position residual is below tolerance, and the
    orientation residual too whenever the orientation task is enabled.
    """
    arr = chain_arrays(chain)
    n = chain.n_joints
    q = np.clip(np.asarray(seed, dtype=float), arr.lo, arr.hi)
    lam2 = params.damping * params.damping

    target_pos = np.asarray(target.position, dtype=float)
    target_quat = quat_normalize(target.orientation)

    use_ori = weights.w_orientation > 0.0
    yaw_ref = base_yaw_reference(target_pos) if weights.w_base_yaw > 0.0 else None
    use_elbow = weights.w_elbow > 0.0
    if use_elbow and not 0 <= params.elbow_joint_index < n:
        raise IndexError(
            f"elbow_joint_index {params.elbow_joint_index} out of range for "
            f"{n}-joint chain"
        )

    rows = 3 + (3 if use_ori else 0) + (1 if yaw_ref is not None else 0) + (1 if use_elbow else 0)
    J = np.zeros((rows, n))
    e = np.zeros(rows)

    pos_res = np.inf
    ori_res = np.inf
    iterations = 0
    for iterations in range(params.max_iterations + 1):
        frames = frames_from_arrays(arr, q)
        e_pos = target_pos - frames.ee_position
        pos_res = float(np.linalg.norm(e_pos))
        if use_ori:
            e_ori = orientation_error(target_quat, quat_from_matrix(frames.ee_rotation))
            ori_res = float(np.linalg.norm(e_ori))
        else:
            ori_res = 0.0
        if pos_res < params.position_tol and ori_res < params.orientation_tol:
            return q, IkReport(True, iterations, pos_res, ori_res, yaw_ref is not None)
        if iterations == params.max_iterations:
            break

        full = _jacobian_from_frames(frames)
        J[:3] = weights.w_position * full[:3]
        e[:3] = weights.w_position * e_pos
        row = 3
        if use_ori:
            J[row:row + 3] = weights.w_orientation * full[3:]
            e[row:row + 3] = weights.w_orientation * e_ori
            row += 3
        if yaw_ref is not None:
            mis = _wrap_angle(yaw_ref - q[0])
            J[row] = 0.0
            if abs(mis) <= params.yaw_capture:
                J[row, 0] = weights.w_base_yaw
                e[row] = weights.w_base_yaw * mis
            else:
                e[row] = 0.0
            row += 1
        if use_elbow:
            idx = params.elbow_joint_index
            z_elbow = frames.origins[idx][2]
            deficit = min(params.elbow_z_ref - z_elbow, params.elbow_residual_clamp)
            if deficit > 0.0:
                Jp = point_jacobian(frames, frames.origins[idx], upto=idx)
                J[row] = weights.w_elbow * Jp[2]
                e[row] = weights.w_elbow * deficit
            else:
                J[row] = 0.0
                e[row] = 0.0

        JT = J.T
        dq = JT @ np.linalg.solve(J @ JT + lam2 * np.eye(rows), e)
        worst = float(np.max(np.abs(dq)))
        if worst > params.step_clamp:
            dq *= params.step_clamp / worst
        q = np.clip(q + dq, arr.lo, arr.hi)

    return q, IkReport(False, iterations, pos_res, ori_res, yaw_ref is not None)


def retarget(
    leader_pose: Pose,
    orientation_source: np.ndarray,
    map: RetargetMap,
) -> Pose:
    """Leader workspace -> follower workspace.

    The leader arm contributes position only; orientation passes through from
    the separate orientation source (an IMU on hardware, keys/wheel in the
    console). Position goes through scale about the leader origin, a fixed
    rotation, and a translation to the follower origin.
    """
    R = matrix_from_quat(np.asarray(map.rotation, dtype=float))
    delta = np.asarray(leader_pose.position, dtype=float) - np.asarray(map.leader_origin)
    position = R @ (map.scale * delta) + np.asarray(map.follower_origin)
    return Pose(position, quat_normalize(np.asarray(orientation_source, dtype=float)))
