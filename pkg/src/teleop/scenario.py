"""Scenario config files: the single input describing a full closed-loop run.

Same block format family as the chain configs. A scenario names the two
chains (bundled name or path relative to the scenario file), the workspace
mapping, feedback/IK/channel parameters, the scripted operator path as
[waypoint] blocks, and [obstacle] blocks for the world. Unknown keys are
errors everywhere.
"""

from __future__ import annotations

import math
from pathlib import Path

from .chain import KinematicChain, bundled_chain_path, load_chain
from .config import (
    Block,
    ConfigError,
    parse_blocks,
    parse_bool,
    parse_float,
    parse_floats,
    parse_int,
)
from .dynamics import Gains
from .feedback import FeedbackParams, VelocityTransform
from .kinematics import IkParams, IkTaskWeights, RetargetMap
from .protocol import ChannelModel
from .simulator import HalfSpace, OperatorModel, Scenario, WaypointPath, World

_SCENARIO_KEYS = {
    "name", "duration", "tick_rate", "seed", "leader_chain", "follower_chain",
    "stale_timeout_ticks",
}
_RETARGET_KEYS = {"scale", "leader_origin", "follower_origin", "rotation"}
_ORIENTATION_KEYS = {"source"}
_FEEDBACK_KEYS = {
    "alpha", "transform", "deviation_clamp", "factor_clamp", "spring_scale",
    "gain_gamma", "kp_max", "kd_max",
}
_IK_KEYS = {
    "damping", "max_iterations", "position_tol", "orientation_tol", "step_clamp",
    "elbow_z_ref", "elbow_joint_index", "w_position", "w_orientation",
    "w_base_yaw", "w_elbow",
}
_LEADER_IK_KEYS = {
    "damping", "max_iterations", "position_tol", "orientation_tol", "step_clamp",
}
_CHANNEL_KEYS = {"drop_probability", "latency_ticks", "jitter_ticks"}
_LEADER_KEYS = {"kp", "kd", "inertia", "hand_stiffness", "hand_damping", "home_seed"}
_FOLLOWER_KEYS = {"track_kp", "inertia", "home_seed"}
_OPERATOR_KEYS = {"easing"}
_WAYPOINT_KEYS = {"t", "point"}
_OBSTACLE_KEYS = {"normal", "offset", "stiffness", "damping", "visible"}


def _one(blocks: list[Block], name: str, required: bool = True) -> Block | None:
    found = [b for b in blocks if b.name == name]
    if len(found) > 1:
        raise ConfigError(f"multiple [{name}] blocks (lines {[b.line for b in found]})")
    if not found:
        if required:
            raise ConfigError(f"missing required [{name}] block")
        return None
    return found[0]


def _resolve_chain(ref: str, base_dir: Path) -> KinematicChain:
    path = Path(ref)
    if not path.suffix:  # bundled fixture name
        return load_chain(bundled_chain_path(ref))
    if not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise ConfigError(f"chain file not found: {path}")
    return load_chain(path)


def parse_scenario(text: str, base_dir: str | Path = ".") -> Scenario:
    base_dir = Path(base_dir)
    blocks = parse_blocks(text)
    known = {
        "scenario", "retarget", "orientation", "feedback", "follower_ik",
        "leader_ik", "channel", "leader", "follower", "operator", "waypoint",
        "obstacle",
    }
    for b in blocks:
        if b.name not in known:
            raise ConfigError(f"line {b.line}: unknown section [{b.name}]")

    sb = _one(blocks, "scenario")
    sb.require(_SCENARIO_KEYS)
    missing = sb.missing({"name", "duration", "tick_rate", "leader_chain", "follower_chain"})
    if missing:
        raise ConfigError(f"[scenario]: missing key(s): {', '.join(missing)}")

    leader_chain = _resolve_chain(sb.entries["leader_chain"], base_dir)
    follower_chain = _resolve_chain(sb.entries["follower_chain"], base_dir)

    rb = _one(blocks, "retarget")
    rb.require(_RETARGET_KEYS)
    retarget_map = RetargetMap(
        scale=parse_float(rb, "scale") if "scale" in rb.entries else 1.0,
        leader_origin=parse_floats(rb, "leader_origin", 3)
        if "leader_origin" in rb.entries
        else (0.0, 0.0, 0.0),
        follower_origin=parse_floats(rb, "follower_origin", 3)
        if "follower_origin" in rb.entries
        else (0.0, 0.0, 0.0),
        rotation=_unit_quat(rb, "rotation") if "rotation" in rb.entries else (0.0, 0.0, 0.0, 1.0),
    )

    ob = _one(blocks, "orientation")
    ob.require(_ORIENTATION_KEYS)
    if "source" not in ob.entries:
        raise ConfigError("[orientation]: missing key 'source'")
    orientation = _unit_quat(ob, "source")

    fb = _one(blocks, "feedback", required=False)
    feedback = _feedback_params(fb, follower_chain.n_joints, leader_chain.n_joints)

    fik = _one(blocks, "follower_ik", required=False)
    follower_weights, follower_params = _follower_ik(fik)

    lik = _one(blocks, "leader_ik", required=False)
    leader_params = _leader_ik(lik)

    cb = _one(blocks, "channel", required=False)
    channel = ChannelModel()
    if cb is not None:
        cb.require(_CHANNEL_KEYS)
        channel = ChannelModel(
            drop_probability=parse_float(cb, "drop_probability")
            if "drop_probability" in cb.entries
            else 0.0,
            latency_ticks=parse_int(cb, "latency_ticks") if "latency_ticks" in cb.entries else 0,
            jitter_ticks=parse_int(cb, "jitter_ticks") if "jitter_ticks" in cb.entries else 0,
        )

    lb = _one(blocks, "leader", required=False)
    kp, kd = 15.0, 1.0
    leader_inertia, hand_k, hand_c = 0.05, 500.0, 20.0
    leader_home = (0.0, 0.5, -1.0)
    if lb is not None:
        lb.require(_LEADER_KEYS)
        kp = parse_float(lb, "kp") if "kp" in lb.entries else kp
        kd = parse_float(lb, "kd") if "kd" in lb.entries else kd
        leader_inertia = parse_float(lb, "inertia") if "inertia" in lb.entries else leader_inertia
        hand_k = parse_float(lb, "hand_stiffness") if "hand_stiffness" in lb.entries else hand_k
        hand_c = parse_float(lb, "hand_damping") if "hand_damping" in lb.entries else hand_c
        if "home_seed" in lb.entries:
            leader_home = parse_floats(lb, "home_seed", leader_chain.n_joints)
    leader_gains = Gains.uniform(leader_chain.n_joints, kp, kd)

    fob = _one(blocks, "follower", required=False)
    track_kp, follower_inertia = 400.0, 1.0
    follower_home = (0.0, 0.8, 0.0, 1.0, 0.0, 0.7, 0.0)
    if fob is not None:
        fob.require(_FOLLOWER_KEYS)
        track_kp = parse_float(fob, "track_kp") if "track_kp" in fob.entries else track_kp
        follower_inertia = (
            parse_float(fob, "inertia") if "inertia" in fob.entries else follower_inertia
        )
        if "home_seed" in fob.entries:
            follower_home = parse_floats(fob, "home_seed", follower_chain.n_joints)
    if len(follower_home) != follower_chain.n_joints:
        raise ConfigError(
            f"[follower] home_seed needs {follower_chain.n_joints} values"
        )

    opb = _one(blocks, "operator", required=False)
    easing = "cosine"
    if opb is not None:
        opb.require(_OPERATOR_KEYS)
        easing = opb.entries.get("easing", "cosine")

    waypoints = [b for b in blocks if b.name == "waypoint"]
    if not waypoints:
        raise ConfigError("scenario needs at least one [waypoint] block")
    times, points = [], []
    for wb in waypoints:
        wb.require(_WAYPOINT_KEYS)
        if wb.missing(_WAYPOINT_KEYS):
            raise ConfigError(f"[waypoint] at line {wb.line}: needs 't' and 'point'")
        times.append(parse_float(wb, "t"))
        points.append(parse_floats(wb, "point", 3))
    path = WaypointPath(tuple(times), tuple(points), easing=easing)

    obstacles = []
    for hb in [b for b in blocks if b.name == "obstacle"]:
        hb.require(_OBSTACLE_KEYS)
        if hb.missing({"normal", "offset"}):
            raise ConfigError(f"[obstacle] at line {hb.line}: needs 'normal' and 'offset'")
        obstacles.append(
            HalfSpace(
                normal=parse_floats(hb, "normal", 3),
                offset=parse_float(hb, "offset"),
                stiffness=parse_float(hb, "stiffness") if "stiffness" in hb.entries else 5000.0,
                damping=parse_float(hb, "damping") if "damping" in hb.entries else 50.0,
                visible=parse_bool(hb, "visible") if "visible" in hb.entries else True,
            )
        )

    return Scenario(
        name=sb.entries["name"],
        leader_chain=leader_chain,
        follower_chain=follower_chain,
        world=World(tuple(obstacles)),
        operator=OperatorModel(hand_stiffness=hand_k, hand_damping=hand_c, path=path),
        retarget_map=retarget_map,
        orientation_source=orientation,
        feedback=feedback,
        follower_ik_weights=follower_weights,
        follower_ik_params=follower_params,
        leader_ik_params=leader_params,
        channel=channel,
        leader_gains=leader_gains,
        duration=parse_float(sb, "duration"),
        tick_rate_hz=parse_int(sb, "tick_rate"),
        seed=parse_int(sb, "seed") if "seed" in sb.entries else 0,
        follower_track_kp=track_kp,
        follower_inertia=follower_inertia,
        leader_inertia=leader_inertia,
        leader_home_seed=leader_home,
        follower_home_seed=follower_home,
        stale_timeout_ticks=parse_int(sb, "stale_timeout_ticks")
        if "stale_timeout_ticks" in sb.entries
        else 50,
    )


def _unit_quat(block: Block, key: str) -> tuple[float, float, float, float]:
    q = parse_floats(block, key, 4)
    norm = math.sqrt(sum(c * c for c in q))
    if abs(norm - 1.0) > 1e-6:
        raise ConfigError(
            f"line {block.entry_lines[key]}: '{key}' must be a unit quaternion "
            f"(norm {norm:.9g})"
        )
    return tuple(c / norm for c in q)


def _feedback_params(fb: Block | None, n_follower: int, n_leader: int) -> FeedbackParams:
    kwargs = {}
    if fb is not None:
        fb.require(_FEEDBACK_KEYS)
        e = fb.entries
        if "alpha" in e:
            kwargs["alpha"] = parse_float(fb, "alpha")
        if "transform" in e:
            try:
                kwargs["transform"] = VelocityTransform(e["transform"])
            except ValueError:
                raise ConfigError(
                    f"line {fb.entry_lines['transform']}: unknown transform "
                    f"{e['transform']!r} (expected abs|squared|exp|tanh)"
                ) from None
        if "deviation_clamp" in e:
            kwargs["deviation_clamp"] = parse_float(fb, "deviation_clamp")
        if "factor_clamp" in e:
            kwargs["factor_clamp"] = parse_float(fb, "factor_clamp")
        if "spring_scale" in e:
            kwargs["spring_scale"] = parse_float(fb, "spring_scale")
        if "gain_gamma" in e:
            kwargs["gain_gamma"] = parse_float(fb, "gain_gamma")
        if "kp_max" in e:
            kwargs["kp_max"] = parse_float(fb, "kp_max")
        if "kd_max" in e:
            kwargs["kd_max"] = parse_float(fb, "kd_max")
    return FeedbackParams(**kwargs)


def _follower_ik(fik: Block | None) -> tuple[IkTaskWeights, IkParams]:
    wkw, pkw = {}, {}
    if fik is not None:
        fik.require(_IK_KEYS)
        e = fik.entries
        for key, target, cast in [
            ("w_position", wkw, parse_float),
            ("w_orientation", wkw, parse_float),
            ("w_base_yaw", wkw, parse_float),
            ("w_elbow", wkw, parse_float),
            ("damping", pkw, parse_float),
            ("max_iterations", pkw, parse_int),
            ("position_tol", pkw, parse_float),
            ("orientation_tol", pkw, parse_float),
            ("step_clamp", pkw, parse_float),
            ("elbow_z_ref", pkw, parse_float),
            ("elbow_joint_index", pkw, parse_int),
        ]:
            if key in e:
                target[key] = cast(fik, key)
    return IkTaskWeights(**wkw), IkParams(**pkw)


def _leader_ik(lik: Block | None) -> IkParams:
    pkw = {}
    if lik is not None:
        lik.require(_LEADER_IK_KEYS)
        for key, cast in [
            ("damping", parse_float),
            ("max_iterations", parse_int),
            ("position_tol", parse_float),
            ("orientation_tol", parse_float),
            ("step_clamp", parse_float),
        ]:
            if key in lik.entries:
                pkw[key] = cast(lik, key)
    return IkParams(**pkw)


# bundled scenarios ------------------------------------------------------------

_DATA_DIR = Path(__file__).parent / "data"


def bundled_scenario_path(name: str) -> Path:
    path = _DATA_DIR / f"{name}.scenario"
    if not path.exists():
        available = sorted(p.stem for p in _DATA_DIR.glob("*.scenario"))
        raise FileNotFoundError(
            f"no bundled scenario '{name}' (available: {', '.join(available)})"
        )
    return path


def load_scenario(ref: str | Path) -> Scenario:
    """Load a scenario by bundled name or file path."""
    path = Path(ref)
    if not path.suffix and not path.exists():
        path = bundled_scenario_path(str(ref))
    if not path.exists():
        raise FileNotFoundError(f"scenario file not found: {path}")
    return parse_scenario(path.read_text(encoding="utf-8"), base_dir=path.parent)
