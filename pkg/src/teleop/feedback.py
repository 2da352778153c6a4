"""Virtual force feedback from end-effector tracking deviation.

No force sensor anywhere: the deviation between where the follower EE was
commanded to be and where it actually is acts as the force proxy. The scalar
feedback factor

    factor = sqrt(alpha * |delta_ee|^2 / (1 + g(|v|)))

divides that deviation by a transform g of the follower's Cartesian speed,
so deviation caused by fast free motion is discounted and deviation caused
by contact (where the follower is slow or stopped) passes through. The
factor drives two things each tick: a virtual target pose that pulls the
leader back along the deviation (spring coupling between the two EEs), and
multiplicative scaling of the leader's impedance gains so the coupling
stiffens under contact.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dynamics import Gains
from .kinematics import Pose


class VelocityTransform(enum.Enum):
    """Speed regularization variants for the feedback factor denominator."""

    ABS = "abs"
    SQUARED = "squared"
    EXP = "exp"
    TANH = "tanh"


def velocity_transform_value(kind: VelocityTransform, speed: float) -> float:
    """g(speed) for speed >= 0. All variants satisfy g(0) = 0 (exp is shifted
    by -1) so every transform is feedback-neutral at rest."""
    if kind is VelocityTransform.ABS:
        return speed
    if kind is VelocityTransform.SQUARED:
        return speed * speed
    if kind is VelocityTransform.EXP:
        return float(np.expm1(speed))
    if kind is VelocityTransform.TANH:
        return float(np.tanh(speed))
    raise ValueError(f"unknown velocity transform {kind!r}")


@dataclass(frozen=True)
class FeedbackParams:
    alpha: float = 25.0
    transform: VelocityTransform = VelocityTransform.SQUARED
    deviation_clamp: float = 0.10  # m
    factor_clamp: float = 3.0
    spring_scale: float = 1.0  # leader-m per follower-m
    gain_gamma: float = 2.0
    kp_max: np.ndarray | float = 120.0  # per-joint clamps, scalar broadcasts
    kd_max: np.ndarray | float = 8.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not self.deviation_clamp > 0:
            raise ValueError("deviation_clamp must be > 0")
        if not self.factor_clamp > 0:
            raise ValueError("factor_clamp must be > 0")
        if self.gain_gamma < 0:
            raise ValueError("gain_gamma must be >= 0")
        if np.any(np.asarray(self.kp_max) <= 0) or np.any(np.asarray(self.kd_max) <= 0):
            raise ValueError("gain clamps must be > 0")


@dataclass
class FeedbackState:
    """Everything the feedback path produced for one tick."""

    delta_ee: np.ndarray  # (3,) m, follower workspace
    v_cartesian: np.ndarray  # (3,) m/s, follower EE velocity
    factor: float
    leader_virtual_target: Pose
    gains: Gains


def ee_deviation(
    target: np.ndarray, current: np.ndarray, params: FeedbackParams
) -> np.ndarray:
    """target - current, norm-clamped to deviation_clamp (direction kept).

    The clamp bounds the feedback command under follower faults (e.g. a
    stalled joint) so one bad tick cannot inject an unbounded spring pull.
    """
    delta = np.asarray(target, dtype=float) - np.asarray(current, dtype=float)
    norm = float(np.linalg.norm(delta))
    if norm > params.deviation_clamp:
        delta = delta * (params.deviation_clamp / norm)
    return delta


def feedback_factor(
    delta_ee: np.ndarray, v_cartesian: np.ndarray, params: FeedbackParams
) -> float:
    """sqrt(alpha*|delta_ee|^2 / (1 + g(|v|))), clamped to factor_clamp."""
    dev2 = float(np.dot(delta_ee, delta_ee))
    speed = float(np.linalg.norm(v_cartesian))
    denom = 1.0 + velocity_transform_value(params.transform, speed)
    return min(float(np.sqrt(params.alpha * dev2 / denom)), params.factor_clamp)


def virtual_target(leader_ee: Pose, delta_ee: np.ndarray, params: FeedbackParams) -> Pose:
    """Leader-side setpoint displaced against the deviation.

    The leader is pulled toward where the follower actually is: for an
    operator pressing into an obstacle this renders as resistance opposing
    the penetration direction. Orientation is untouched (feedback is purely
    translational).
    """
    position = leader_ee.position - params.spring_scale * np.asarray(delta_ee, dtype=float)
    return Pose(position, leader_ee.orientation.copy())


def modulate_gains(base: Gains, factor: float, params: FeedbackParams) -> Gains:
    """Scale impedance gains by (1 + gamma*factor), clamped elementwise."""
    if factor < 0:
        raise ValueError("factor must be >= 0")
    scale = 1.0 + params.gain_gamma * factor
    kp = np.minimum(base.kp * scale, params.kp_max)
    kd = np.minimum(base.kd * scale, params.kd_max)
    return Gains(kp, kd)


def feedback_tick(
    target_ee: np.ndarray,
    current_ee: np.ndarray,
    v_cartesian: np.ndarray,
    leader_ee: Pose,
    base_gains: Gains,
    params: FeedbackParams,
) -> FeedbackState:
    """One tick of the feedback path: deviation -> factor -> target + gains."""
    delta = ee_deviation(target_ee, current_ee, params)
    factor = feedback_factor(delta, v_cartesian, params)
    return FeedbackState(
        delta_ee=delta,
        v_cartesian=np.asarray(v_cartesian, dtype=float),
        factor=factor,
        leader_virtual_target=virtual_target(leader_ee, delta, params),
        gains=modulate_gains(base_gains, factor, params),
    )
