"""Closed-loop simulator behavior: determinism, contact phenomenon, stale
policy, energy decay, and the world/operator building blocks."""

import dataclasses
import io

import numpy as np
import pytest

from teleop.chain import follower7
from teleop.kinematics import Pose, forward_kinematics
from teleop.protocol import ChannelModel, StaleAction
from teleop.scenario import load_scenario
from teleop.simulator import (
    FollowerSim,
    HalfSpace,
    OperatorModel,
    WaypointPath,
    World,
    run_teleop_loop,
)
from teleop.trace import write_ndjson


@pytest.fixture(scope="module")
def free_trace():
    return run_teleop_loop(load_scenario("free_sweep"))


@pytest.fixture(scope="module")
def wall_trace():
    return run_teleop_loop(load_scenario("hidden_wall_drag"))


# world ------------------------------------------------------------------------


def test_half_space_penetration_sign():
    wall = HalfSpace(normal=(0.0, -1.0, 0.0), offset=0.12, stiffness=1000.0)
    assert wall.penetration(np.array([0.0, -0.2, 0.0])) < 0  # free side
    assert wall.penetration(np.array([0.0, -0.1, 0.0])) == pytest.approx(0.02)


def test_world_contact_force_direction():
    wall = HalfSpace(normal=(0.0, -1.0, 0.0), offset=0.12, stiffness=1000.0, damping=0.0)
    world = World((wall,))
    f = world.contact_force(np.array([0.0, -0.10, 0.0]), np.zeros(3))
    np.testing.assert_allclose(f, [0.0, -20.0, 0.0], atol=1e-12)
    assert not world.contact_force(np.array([0.0, -0.2, 0.0]), np.zeros(3)).any()


def test_world_damping_term():
    wall = HalfSpace(normal=(0.0, 0.0, 1.0), offset=0.0, stiffness=1000.0, damping=10.0)
    world = World((wall,))
    # moving deeper (downward) increases the push-out force
    still = world.contact_force(np.array([0, 0, -0.01]), np.zeros(3))
    moving = world.contact_force(np.array([0, 0, -0.01]), np.array([0, 0, -1.0]))
    assert moving[2] > still[2]
    # separating fast enough: no adhesive pull
    separating = world.contact_force(np.array([0, 0, -0.01]), np.array([0, 0, 5.0]))
    assert separating[2] == 0.0


def test_non_unit_normal_rejected():
    with pytest.raises(ValueError, match="unit"):
        HalfSpace(normal=(0.0, 0.0, 2.0), offset=0.0)


# operator path ------------------------------------------------------------------


def test_waypoint_path_holds_at_ends():
    path = WaypointPath((0.0, 1.0), ((0, 0, 0), (1, 1, 1)), easing="linear")
    np.testing.assert_array_equal(path.point_at(-5.0), [0, 0, 0])
    np.testing.assert_array_equal(path.point_at(99.0), [1, 1, 1])


def test_waypoint_path_linear_midpoint():
    path = WaypointPath((0.0, 2.0), ((0, 0, 0), (1, 0, 0)), easing="linear")
    np.testing.assert_allclose(path.point_at(1.0), [0.5, 0, 0], atol=1e-15)


def test_waypoint_path_cosine_midpoint_and_smooth_ends():
    path = WaypointPath((0.0, 2.0), ((0, 0, 0), (1, 0, 0)), easing="cosine")
    np.testing.assert_allclose(path.point_at(1.0), [0.5, 0, 0], atol=1e-15)
    # near-zero slope at segment ends
    v0 = (path.point_at(0.01) - path.point_at(0.0)) / 0.01
    assert np.linalg.norm(v0) < 0.05


def test_waypoint_path_validation():
    with pytest.raises(ValueError, match="strictly increasing"):
        WaypointPath((0.0, 0.0), ((0, 0, 0), (1, 1, 1)))
    with pytest.raises(ValueError, match="easing"):
        WaypointPath((0.0, 1.0), ((0, 0, 0), (1, 1, 1)), easing="cubic")


# follower tracking ---------------------------------------------------------------


def test_follower_equilibrium_is_stationary():
    chain = follower7()
    q0 = np.array([0.0, 0.8, 0.0, 1.0, 0.0, 0.7, 0.0])
    sim = FollowerSim(chain, World(), q0, dt=0.005)
    for _ in range(50):
        state = sim.step()
    np.testing.assert_allclose(state.joint_state.q, q0, atol=1e-12)
    np.testing.assert_allclose(state.joint_state.qd, np.zeros(7), atol=1e-12)


def test_follower_converges_to_reachable_target():
    chain = follower7()
    q0 = np.array([0.0, 0.8, 0.0, 1.0, 0.0, 0.7, 0.0])
    q_target = q0 + np.array([0.15, -0.1, 0.1, 0.05, -0.1, 0.1, 0.2])
    sim = FollowerSim(chain, World(), q0, dt=0.005)
    sim.apply_command(q_target, gap_ticks=1)
    for _ in range(100):  # 0.5 s at 200 Hz
        state = sim.step()
    target_ee = forward_kinematics(chain, q_target).position
    assert np.linalg.norm(state.ee_pose.position - target_ee) < 1e-3


def test_follower_wall_equilibrium():
    # command the EE beyond a wall: steady state leaves a positive gap to the
    # commanded point and a force pushing back out of the wall
    chain = follower7()
    q0 = np.array([0.0, 0.8, 0.0, 1.0, 0.0, 0.7, 0.0])
    ee0 = forward_kinematics(chain, q0).position
    wall_y = ee0[1] + 0.02
    world = World((HalfSpace(normal=(0.0, -1.0, 0.0), offset=-wall_y),))
    from teleop.kinematics import IkTaskWeights, IkParams, solve_ik

    target_pose = Pose(ee0 + np.array([0.0, 0.07, 0.0]), forward_kinematics(chain, q0).orientation)
    q_target, rep = solve_ik(
        chain, target_pose, q0, IkTaskWeights(1, 0.5, 0, 0), IkParams(max_iterations=300, step_clamp=0.5)
    )
    assert rep.position_residual < 1e-3
    sim = FollowerSim(chain, world, q0, dt=0.005)
    sim.apply_command(q_target, gap_ticks=1)
    for _ in range(400):
        state = sim.step()
    gap = target_pose.position[1] - state.ee_pose.position[1]
    assert 0.0 < gap <= 0.07
    assert state.contact_force[1] < 0.0  # pushes in -y, out of the wall


def test_follower_soft_stop_ramps_velocity_down():
    chain = follower7()
    q0 = np.zeros(7)
    sim = FollowerSim(chain, World(), q0, dt=0.005)
    sim.apply_command(q0 + 0.5, gap_ticks=1)
    for _ in range(20):
        sim.step()
    moving = np.linalg.norm(sim.qd)
    assert moving > 0.1
    for _ in range(120):
        state = sim.step(StaleAction.SOFT_STOP)
    assert np.linalg.norm(state.joint_state.qd) < 1e-3


# closed loop ---------------------------------------------------------------------


def test_loop_deterministic_bit_identical():
    sc = dataclasses.replace(load_scenario("free_sweep"), duration=1.0)
    def dump():
        buf = io.StringIO()
        write_ndjson(run_teleop_loop(sc), buf)
        return buf.getvalue()
    assert dump() == dump()


def test_free_motion_low_feedback(free_trace):
    factors = free_trace.column("factor")
    clamp = 3.0
    assert factors.mean() < 0.05 * clamp
    assert factors.max() < 0.1 * clamp
    assert not free_trace.contact_mask().any()


def test_wall_contact_raises_factor_fast(wall_trace):
    factors = wall_trace.column("factor")
    contact = wall_trace.contact_mask()
    first = int(np.argmax(contact))
    assert contact.any()
    free_mean = factors[40:first].mean()
    window = factors[first : first + 11]  # 50 ms at 200 Hz
    assert window.max() >= 10 * free_mean


def test_wall_contact_feedback_correlates(wall_trace):
    contact = wall_trace.contact_mask()
    rendered = np.linalg.norm(wall_trace.column("rendered_force"), axis=1)
    truth = np.linalg.norm(wall_trace.column("contact_force"), axis=1)
    r = np.corrcoef(rendered[contact], truth[contact])[0, 1]
    assert r > 0.7


def test_wall_rendered_force_opposes_penetration(wall_trace):
    # steady pressing: rendered force points against the deviation the
    # operator is commanding into the wall
    truth = np.linalg.norm(wall_trace.column("contact_force"), axis=1)
    steady = wall_trace.contact_mask() & (truth > 1.0)
    dev = wall_trace.column("delta_ee")[steady]
    rendered = wall_trace.column("rendered_force")[steady]
    dots = np.einsum("ij,ij->i", rendered, dev)
    assert (dots < 0).mean() >= 0.95


def test_virtual_spring_pulls_leader_back(wall_trace):
    # during steady contact the leader EE sits short of the hand command
    # along the drag direction (+y)
    truth = np.linalg.norm(wall_trace.column("contact_force"), axis=1)
    steady = wall_trace.contact_mask() & (truth > 1.0)
    leader = wall_trace.column("leader_pos")[steady]
    hand = wall_trace.column("operator_pos")[steady]
    assert np.mean(leader[:, 1] < hand[:, 1]) > 0.95


def test_leader_static_displacement_bounded(wall_trace):
    # static force balance: during the hold phase the leader EE deflection
    # from the hand point stays under 2 cm at hand stiffness 500 N/m
    t = wall_trace.column("t")
    hold = (t >= 2.0) & (t <= 3.0)
    leader = wall_trace.column("leader_pos")[hold]
    hand = wall_trace.column("operator_pos")[hold]
    assert np.linalg.norm(leader - hand, axis=1).max() < 0.02


def test_gain_modulation_under_contact(wall_trace):
    kp = wall_trace.column("kp")[:, 0]
    contact = wall_trace.contact_mask()
    base = 15.0
    assert kp[~contact][:40].max() < base * 1.2  # near-base gains in free motion
    assert kp[contact].max() > base * 1.3  # visibly stiffened under contact
    assert kp.max() <= 35.0 + 1e-9  # never exceeds the clamp


def test_hold_scenario_energy_decay():
    # zero commanded motion, no contact: total joint speed decays
    # monotonically once the start transient has passed
    sc = load_scenario("free_sweep")
    hold_path = WaypointPath((0.0, 1.0), ((0.38, 0.0, 0.12), (0.38, 0.0, 0.12)))
    sc = dataclasses.replace(
        sc,
        duration=2.0,
        operator=OperatorModel(path=hold_path),
        world=World(()),
    )
    trace = run_teleop_loop(sc)
    leader_q = trace.column("leader_q")
    follower_q = trace.column("follower_q")
    speeds = []
    for k in range(1, len(leader_q)):
        v = np.sum(np.abs(leader_q[k] - leader_q[k - 1])) + np.sum(
            np.abs(follower_q[k] - follower_q[k - 1])
        )
        speeds.append(v / trace.dt)
    speeds = np.array(speeds)
    settle = int(0.5 / trace.dt)
    tail = speeds[settle:]
    assert all(b <= a * (1 + 1e-9) + 1e-12 for a, b in zip(tail, tail[1:]))


def test_scenario_rate_bounds():
    sc = load_scenario("free_sweep")
    with pytest.raises(ValueError, match="tick_rate"):
        dataclasses.replace(sc, tick_rate_hz=20)


def test_packet_loss_keeps_follower_close():
    sc = dataclasses.replace(load_scenario("free_sweep"), duration=2.0)
    clean = run_teleop_loop(sc)
    lossy = run_teleop_loop(
        dataclasses.replace(sc, channel=ChannelModel(drop_probability=0.3))
    )
    d = clean.column("follower_pos") - lossy.column("follower_pos")
    rms = float(np.sqrt(np.mean(np.sum(d * d, axis=1))))
    assert rms < 0.005


def test_stale_seq_frames_are_discarded():
    # inject an out-of-order (stale) command frame at the channel boundary:
    # the applied sequence must stay monotone and the stale target ignored
    from teleop.protocol import LeaderCommand, encode
    from teleop.simulator import TeleopLoop

    sc = dataclasses.replace(load_scenario("free_sweep"), duration=1.0)
    loop = TeleopLoop(sc)
    point = sc.operator.path.point_at(0.0)
    for _ in range(5):
        loop.tick(point)
    assert loop._last_applied_seq == 5
    fresh_target = loop.follower.target.copy()

    stale = encode(
        LeaderCommand(seq=2, timestamp=0, q_target=(0.5,) * 7, gripper=0.0)
    )
    real_step = loop.ch_commands.step
    loop.ch_commands.step = lambda inbox: [stale] + real_step(inbox)
    loop.tick(point)
    assert loop._last_applied_seq == 6  # monotone: 5 -> 6, never back to 2
    assert not np.allclose(loop.follower.target, 0.5)
    assert np.linalg.norm(loop.follower.target - fresh_target) < 0.1


def test_latency_and_jitter_run_stable():
    sc = dataclasses.replace(
        load_scenario("hidden_wall_drag"),
        duration=2.0,
        channel=ChannelModel(drop_probability=0.05, latency_ticks=2, jitter_ticks=3),
    )
    trace = run_teleop_loop(sc)
    assert np.isfinite(trace.column("factor")).all()
    assert np.isfinite(trace.column("leader_pos")).all()
