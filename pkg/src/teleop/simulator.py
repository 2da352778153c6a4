"""Deterministic follower/leader simulation and the closed teleop loop.

The follower is a joint-space tracking model (critically damped per-joint
servo with velocity feedforward, torque and speed saturation), not full
forward dynamics: the phenomenon under study is the EE deviation that builds
up when the arm is obstructed, and that needs only saturating tracking plus
task-space contact. Contact is penalty-based against half-space obstacles,
with the applied force recorded as ground truth so feedback quality can be
scored against it.

The leader is simulated as a compensated impedance-controlled arm: PD torque
toward the IK solution of its virtual target, exact gravity/friction
compensation, and an operator hand modeled as a spring-damper gripping the
EE. What the "human" feels is the spring's deflection force; that vector is
the rendered feedback.

Everything is a pure function of (scenario, seed): channels draw from seeded
generators, no wall clock enters the loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import KinematicChain, chain_arrays
from .dynamics import Gains, JointState, friction_compensation, gravity_torque, pd_torque
from .feedback import FeedbackParams, feedback_tick
from .kinematics import (
    ChainFrames,
    IkParams,
    IkTaskWeights,
    Pose,
    RetargetMap,
    _jacobian_from_frames,
    frames_from_arrays,
    retarget,
    solve_ik,
)
from .rotations import quat_from_matrix
from .protocol import (
    Channel,
    ChannelModel,
    FollowerState,
    Handshake,
    LeaderCommand,
    PROTOCOL_VERSION,
    StaleAction,
    decode,
    encode,
    stale_command_policy,
)
from .trace import Trace, TraceRecord


# world -----------------------------------------------------------------------


@dataclass(frozen=True)
class HalfSpace:
    """Penalty half-space obstacle.

    The surface is the plane normal . p = offset with `normal` (unit) pointing
    out of the solid into free space; a point penetrates by offset - normal . p
    when that is positive.
    """

    normal: tuple[float, float, float]
    offset: float
    stiffness: float = 5000.0  # N/m
    damping: float = 50.0  # N*s/m
    visible: bool = True

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("half-space normal must be unit length")
        if self.stiffness <= 0:
            raise ValueError("stiffness must be > 0")

    def penetration(self, point: np.ndarray) -> float:
        return self.offset - float(np.dot(self.normal, point))


@dataclass(frozen=True)
class World:
    half_spaces: tuple[HalfSpace, ...] = ()

    def contact_force(self, point: np.ndarray, velocity: np.ndarray) -> np.ndarray:
        """Total penalty force on a point; zero vector when free."""
        total = np.zeros(3)
        for hs in self.half_spaces:
            depth = hs.penetration(point)
            if depth <= 0.0:
                continue
            n = np.asarray(hs.normal)
            v_n = float(np.dot(velocity, n))
            magnitude = hs.stiffness * depth - hs.damping * v_n
            if magnitude > 0.0:
                total = total + magnitude * n
        return total


# operator --------------------------------------------------------------------


@dataclass(frozen=True)
class WaypointPath:
    """Piecewise path through timed waypoints, held at both ends."""

    times: tuple[float, ...]
    points: tuple[tuple[float, float, float], ...]
    easing: str = "cosine"  # or "linear"

    def __post_init__(self):
        if len(self.times) != len(self.points) or not self.times:
            raise ValueError("times and points must be equal-length and non-empty")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("waypoint times must be strictly increasing")
        if self.easing not in ("cosine", "linear"):
            raise ValueError(f"unknown easing {self.easing!r}")

    def point_at(self, t: float) -> np.ndarray:
        times, points = self.times, self.points
        if t <= times[0]:
            return np.asarray(points[0], dtype=float)
        if t >= times[-1]:
            return np.asarray(points[-1], dtype=float)
        idx = int(np.searchsorted(times, t, side="right")) - 1
        t0, t1 = times[idx], times[idx + 1]
        s = (t - t0) / (t1 - t0)
        if self.easing == "cosine":
            s = 0.5 * (1.0 - np.cos(np.pi * s))
        p0 = np.asarray(points[idx], dtype=float)
        p1 = np.asarray(points[idx + 1], dtype=float)
        return p0 + s * (p1 - p0)


@dataclass(frozen=True)
class OperatorModel:
    hand_stiffness: float = 500.0  # N/m
    hand_damping: float = 20.0  # N*s/m
    path: WaypointPath | None = None  # None: external stream (bridge mode)

    def __post_init__(self):
        if self.hand_stiffness <= 0:
            raise ValueError("hand_stiffness must be > 0")


# arm simulations -------------------------------------------------------------


@dataclass
class FollowerSimState:
    joint_state: JointState
    applied_target: np.ndarray
    ee_pose: Pose
    contact_force: np.ndarray


class FollowerSim:
    """Per-joint critically damped tracking with saturation and contact."""

    def __init__(
        self,
        chain: KinematicChain,
        world: World,
        q0: np.ndarray,
        dt: float,
        track_kp: float = 400.0,
        inertia: float = 1.0,
    ):
        self.chain = chain
        self.world = world
        self.dt = dt
        self.inertia = inertia
        self.kp = track_kp
        self.kd = 2.0 * np.sqrt(track_kp * inertia)  # critical damping
        self._arr = chain_arrays(chain)
        self.q = np.asarray(q0, dtype=float).copy()
        self.qd = np.zeros_like(self.q)
        self.target = self.q.copy()
        self.target_qd = np.zeros_like(self.q)
        self.tick = 0
        self._ff_valid_until = 0
        self._frames = frames_from_arrays(self._arr, self.q)

    def apply_command(self, q_target: np.ndarray, gap_ticks: int) -> None:
        """Accept a fresh command; estimate its velocity from the change since
        the previous applied target (saturated so drop-gaps cannot spike it).
        The estimate expires shortly after the interval it was measured over
        (brief extrapolation bridges dropped frames), so a silent channel
        degrades to plain position holding, not a runaway feedforward."""
        q_target = np.clip(np.asarray(q_target, dtype=float), self._arr.lo, self._arr.hi)
        gap = max(gap_ticks, 1)
        qd_est = (q_target - self.target) / (gap * self.dt)
        self.target_qd = np.clip(qd_est, -self._arr.max_velocity, self._arr.max_velocity)
        self.target = q_target
        self._ff_valid_until = self.tick + gap + 2

    def step(self, stale_action: StaleAction = StaleAction.HOLD) -> FollowerSimState:
        if stale_action is StaleAction.SOFT_STOP:
            # discard the position goal, ramp velocity to zero
            tau = -self.kd * self.qd
        else:
            qd_ff = self.target_qd if self.tick < self._ff_valid_until else 0.0
            tau = self.kp * (self.target - self.q) + self.kd * (qd_ff - self.qd)
        tau = np.clip(tau, -self._arr.max_torque, self._arr.max_torque)

        frames = self._frames  # frames at the pre-step q, cached from last tick
        J = _jacobian_from_frames(frames)[:3]
        ee_vel = J @ self.qd
        f_contact = self.world.contact_force(frames.ee_position, ee_vel)
        if f_contact.any():
            tau = tau + J.T @ f_contact

        self.qd = self.qd + (tau / self.inertia) * self.dt
        self.qd = np.clip(self.qd, -self._arr.max_velocity, self._arr.max_velocity)
        self.q = self.q + self.qd * self.dt
        below = self.q < self._arr.lo
        above = self.q > self._arr.hi
        if below.any() or above.any():
            self.q = np.clip(self.q, self._arr.lo, self._arr.hi)
            self.qd[below | above] = 0.0
        self.tick += 1

        self._frames = frames_from_arrays(self._arr, self.q)
        return FollowerSimState(
            joint_state=JointState(self.q.copy(), self.qd.copy(), self.tick, self.dt),
            applied_target=self.target.copy(),
            ee_pose=Pose(self._frames.ee_position, quat_from_matrix(self._frames.ee_rotation)),
            contact_force=f_contact,
        )


class LeaderSim:
    """Compensated impedance-controlled leader arm with a hand spring."""

    def __init__(
        self,
        chain: KinematicChain,
        q0: np.ndarray,
        dt: float,
        operator: OperatorModel,
        ik_params: IkParams,
        inertia: float = 0.05,
    ):
        self.chain = chain
        self.dt = dt
        self.operator = operator
        self.inertia = inertia
        self.ik_params = ik_params
        self.ik_weights = IkTaskWeights(1.0, 0.0, 0.0, 0.0)  # 3-DoF: position only
        self._arr = chain_arrays(chain)
        self.q = np.asarray(q0, dtype=float).copy()
        self.qd = np.zeros_like(self.q)
        self._vt_seed = self.q.copy()
        self._frames = frames_from_arrays(self._arr, self.q)

    def ee_frames(self) -> ChainFrames:
        return self._frames

    def step(
        self, hand_point: np.ndarray, virtual_target: Pose, gains: Gains
    ) -> np.ndarray:
        """Advance one tick; returns the rendered force (hand-spring
        deflection force, what the operator would feel)."""
        q_vt, _ = solve_ik(
            self.chain, virtual_target, self._vt_seed, self.ik_weights, self.ik_params
        )
        self._vt_seed = q_vt

        frames = self._frames
        J = _jacobian_from_frames(frames)[:3]
        ee_vel = J @ self.qd

        grav = gravity_torque(self.chain, self.q, frames)
        fric = friction_compensation(self.qd, self.chain)
        tau_motor = np.clip(
            pd_torque(gains, q_vt - self.q, self.qd) + grav + fric,
            -self._arr.max_torque,
            self._arr.max_torque,
        )
        # plant-side gravity and friction oppose the compensation terms
        tau_plant = -grav - fric

        f_hand = self.operator.hand_stiffness * (
            hand_point - frames.ee_position
        ) - self.operator.hand_damping * ee_vel
        tau_hand = J.T @ f_hand

        qdd = (tau_motor + tau_plant + tau_hand) / self.inertia
        self.qd = self.qd + qdd * self.dt
        self.qd = np.clip(self.qd, -self._arr.max_velocity, self._arr.max_velocity)
        self.q = np.clip(self.q + self.qd * self.dt, self._arr.lo, self._arr.hi)
        self._frames = frames_from_arrays(self._arr, self.q)

        return self.operator.hand_stiffness * (frames.ee_position - hand_point)


# scenario --------------------------------------------------------------------


@dataclass
class Scenario:
    name: str
    leader_chain: KinematicChain
    follower_chain: KinematicChain
    world: World
    operator: OperatorModel
    retarget_map: RetargetMap
    orientation_source: tuple[float, float, float, float]
    feedback: FeedbackParams
    follower_ik_weights: IkTaskWeights
    follower_ik_params: IkParams
    leader_ik_params: IkParams
    channel: ChannelModel
    leader_gains: Gains
    duration: float = 10.0
    tick_rate_hz: int = 200
    seed: int = 0
    follower_track_kp: float = 400.0
    follower_inertia: float = 1.0
    leader_inertia: float = 0.05
    leader_home_seed: tuple[float, ...] = (0.0, 0.5, -1.0)
    follower_home_seed: tuple[float, ...] = (0.0, 0.8, 0.0, 1.0, 0.0, 0.7, 0.0)
    stale_timeout_ticks: int = 50

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be > 0")
        if not 50 <= self.tick_rate_hz <= 1000:
            raise ValueError("tick_rate_hz must be within [50, 1000]")

    @property
    def dt(self) -> float:
        return 1.0 / self.tick_rate_hz

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration * self.tick_rate_hz))


# the loop --------------------------------------------------------------------


class TeleopLoop:
    """One leader->follower->leader control loop, stepped tick by tick.

    Scripted runs call run_teleop_loop; the bridge drives tick() directly
    with live operator input. All cross-endpoint traffic goes through the
    binary codec and the seeded channels, so the loop exercises the real
    wire contract every tick.
    """

    def __init__(self, scenario: Scenario):
        self.sc = scenario
        sc = scenario
        self.dt = sc.dt

        # independent per-direction channels, seeded from the scenario seed
        self.ch_commands = Channel(
            ChannelModel(
                sc.channel.drop_probability,
                sc.channel.latency_ticks,
                sc.channel.jitter_ticks,
                rng_seed=sc.seed * 2 + 1,
            )
        )
        self.ch_states = Channel(
            ChannelModel(
                sc.channel.drop_probability,
                sc.channel.latency_ticks,
                sc.channel.jitter_ticks,
                rng_seed=sc.seed * 2 + 2,
            )
        )

        # handshake both ways (validates the wire contract before tick 0)
        hs = Handshake(
            PROTOCOL_VERSION, sc.follower_chain.name, sc.follower_chain.n_joints,
            sc.tick_rate_hz,
        )
        hs_echo = decode(encode(hs))
        if hs_echo.protocol_version != PROTOCOL_VERSION:
            raise RuntimeError("handshake version mismatch")
        self.n_follower = hs_echo.joint_count

        start_point = (
            sc.operator.path.point_at(0.0)
            if sc.operator.path is not None
            else np.asarray(sc.retarget_map.leader_origin, dtype=float)
        )
        cold = IkParams(
            damping=sc.leader_ik_params.damping,
            max_iterations=300,
            position_tol=sc.leader_ik_params.position_tol,
            orientation_tol=sc.leader_ik_params.orientation_tol,
            step_clamp=0.5,
        )
        q_l0, rep = solve_ik(
            sc.leader_chain,
            Pose(start_point, np.array([0.0, 0.0, 0.0, 1.0])),
            np.asarray(sc.leader_home_seed, dtype=float),
            IkTaskWeights(1.0, 0.0, 0.0, 0.0),
            cold,
        )
        if rep.position_residual > 1e-3:
            raise ValueError(
                f"operator start point {start_point} is outside the leader "
                f"workspace (IK residual {rep.position_residual:.3g} m)"
            )
        self.leader = LeaderSim(
            sc.leader_chain, q_l0, self.dt, sc.operator, sc.leader_ik_params,
            inertia=sc.leader_inertia,
        )

        orientation = np.asarray(sc.orientation_source, dtype=float)
        target0 = retarget(
            Pose(start_point, np.array([0.0, 0.0, 0.0, 1.0])), orientation,
            sc.retarget_map,
        )
        cold_f = IkParams(
            damping=sc.follower_ik_params.damping,
            max_iterations=400,
            position_tol=sc.follower_ik_params.position_tol,
            orientation_tol=sc.follower_ik_params.orientation_tol,
            step_clamp=0.5,
            elbow_z_ref=sc.follower_ik_params.elbow_z_ref,
            elbow_joint_index=sc.follower_ik_params.elbow_joint_index,
        )
        q_f0, rep_f = solve_ik(
            sc.follower_chain,
            target0,
            np.asarray(sc.follower_home_seed, dtype=float),
            sc.follower_ik_weights,
            cold_f,
        )
        if rep_f.position_residual > 5e-3:
            raise ValueError(
                f"retargeted start pose is outside the follower workspace "
                f"(IK residual {rep_f.position_residual:.3g} m)"
            )
        self.follower = FollowerSim(
            sc.follower_chain, sc.world, q_f0, self.dt,
            track_kp=sc.follower_track_kp, inertia=sc.follower_inertia,
        )
        self.orientation = orientation
        self._follower_arr = chain_arrays(sc.follower_chain)
        self._ik_seed = q_f0.copy()
        self._seq = 0
        self._last_applied_seq = -1
        self._ticks_since_command = 0
        self._last_state = FollowerState(
            seq=0,
            timestamp=0,
            q_current=tuple(q_f0),
            qd_current=(0.0,) * self.n_follower,
            contact_force_truth=(0.0, 0.0, 0.0),
        )
        self.tick_index = 0

    # one loop iteration ------------------------------------------------------

    def tick(self, operator_point: np.ndarray, send_commands: bool = True) -> TraceRecord:
        sc = self.sc

        # leader side: current EE -> retarget -> follower IK -> command out
        leader_frames = self.leader.ee_frames()
        leader_pose = Pose(
            leader_frames.ee_position, quat_from_matrix(leader_frames.ee_rotation)
        )
        target = retarget(leader_pose, self.orientation, sc.retarget_map)
        q_target, _ = solve_ik(
            sc.follower_chain, target, self._ik_seed,
            sc.follower_ik_weights, sc.follower_ik_params,
        )
        self._ik_seed = q_target

        outbox = []
        if send_commands:
            self._seq += 1
            cmd = LeaderCommand(
                seq=self._seq,
                timestamp=int(round(self.tick_index * self.dt * 1e6)),
                q_target=tuple(q_target),
                gripper=0.0,
            )
            outbox.append(encode(cmd))

        # command channel -> follower
        applied = False
        for frame in self.ch_commands.step(outbox):
            msg = decode(frame, expected_joint_count=self.n_follower)
            if msg.seq > self._last_applied_seq:
                gap = self._ticks_since_command + 1
                self.follower.apply_command(np.asarray(msg.q_target), gap)
                self._last_applied_seq = msg.seq
                applied = True
        self._ticks_since_command = 0 if applied else self._ticks_since_command + 1

        action = stale_command_policy(
            None, self._ticks_since_command, sc.stale_timeout_ticks
        )
        fstate = self.follower.step(action)

        # state channel -> leader
        state_msg = FollowerState(
            seq=max(self._last_applied_seq, 0),
            timestamp=int(round(self.tick_index * self.dt * 1e6)),
            q_current=tuple(fstate.joint_state.q),
            qd_current=tuple(fstate.joint_state.qd),
            contact_force_truth=tuple(fstate.contact_force),
        )
        for frame in self.ch_states.step([encode(state_msg)]):
            msg = decode(frame, expected_joint_count=self.n_follower)
            if msg.seq >= self._last_state.seq:
                self._last_state = msg

        # feedback path from the last reported follower state
        q_rep = np.asarray(self._last_state.q_current)
        qd_rep = np.asarray(self._last_state.qd_current)
        rep_frames = frames_from_arrays(self._follower_arr, q_rep)
        ee_current = rep_frames.ee_position
        v_cart = _jacobian_from_frames(rep_frames)[:3] @ qd_rep

        fb = feedback_tick(
            target_ee=target.position,
            current_ee=ee_current,
            v_cartesian=v_cart,
            leader_ee=leader_pose,
            base_gains=sc.leader_gains,
            params=sc.feedback,
        )

        rendered = self.leader.step(operator_point, fb.leader_virtual_target, fb.gains)

        record = TraceRecord(
            tick=self.tick_index,
            t=self.tick_index * self.dt,
            leader_pos=tuple(leader_pose.position),
            leader_quat=tuple(leader_pose.orientation),
            operator_pos=tuple(np.asarray(operator_point, dtype=float)),
            target_pos=tuple(target.position),
            target_quat=tuple(target.orientation),
            follower_pos=tuple(fstate.ee_pose.position),
            follower_quat=tuple(fstate.ee_pose.orientation),
            leader_q=tuple(self.leader.q),
            follower_q=tuple(fstate.joint_state.q),
            delta_ee=tuple(fb.delta_ee),
            v_cartesian=tuple(fb.v_cartesian),
            factor=fb.factor,
            kp=tuple(fb.gains.kp),
            kd=tuple(fb.gains.kd),
            contact_force=tuple(fstate.contact_force),
            rendered_force=tuple(rendered),
            contact=bool(fstate.contact_force.any()),
        )
        self.tick_index += 1
        return record


def run_teleop_loop(scenario: Scenario) -> Trace:
    """Run the scripted scenario to completion; returns the full trace."""
    if scenario.operator.path is None:
        raise ValueError("scripted run requires an operator path")
    loop = TeleopLoop(scenario)
    records = []
    for k in range(scenario.n_ticks):
        point = scenario.operator.path.point_at(k * scenario.dt)
        records.append(loop.tick(point))
    return Trace(
        scenario_name=scenario.name,
        tick_rate_hz=scenario.tick_rate_hz,
        leader_joints=scenario.leader_chain.n_joints,
        follower_joints=scenario.follower_chain.n_joints,
        records=records,
    )
