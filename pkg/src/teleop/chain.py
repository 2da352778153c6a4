"""Serial kinematic chain model and its declarative config format.

A chain is an ordered list of revolute joints. Each joint carries the fixed
transform from its parent (translation + rotation), its rotation axis in the
joint frame, limits, actuator bounds, and the point-mass/friction parameters
used by the dynamics module. Chains are immutable after parsing, so they are
safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .config import (
    Block,
    ConfigError,
    format_float,
    parse_blocks,
    parse_float,
    parse_floats,
)

_UNIT_TOL = 1e-9

_JOINT_KEYS = {
    "name",
    "axis",
    "origin_translation",
    "origin_rotation",
    "limits",
    "max_velocity",
    "max_torque",
    "mass",
    "com",
    "viscous_friction",
    "coulomb_friction",
}
_CHAIN_KEYS = {"name", "ee_offset", "gravity"}


class ChainError(ValueError):
    """Semantic chain validation failure; message lists every violation."""


@dataclass(frozen=True)
class JointSpec:
    name: str
    axis: tuple[float, float, float]
    origin_translation: tuple[float, float, float]
    origin_rotation: tuple[float, float, float, float]  # quaternion, scalar-last
    limits: tuple[float, float]  # rad
    max_velocity: float  # rad/s
    max_torque: float  # N*m
    mass: float  # kg
    com: tuple[float, float, float]  # m, link frame
    viscous_friction: float  # N*m*s/rad
    coulomb_friction: float  # N*m


@dataclass(frozen=True)
class KinematicChain:
    name: str
    joints: tuple[JointSpec, ...]
    ee_offset: tuple[float, float, float]
    gravity: tuple[float, float, float] = (0.0, 0.0, -9.81)

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    def limits_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([j.limits[0] for j in self.joints])
        hi = np.array([j.limits[1] for j in self.joints])
        return lo, hi


def _validate_joint(j: JointSpec, problems: list[str]) -> None:
    axis_norm = math.sqrt(sum(a * a for a in j.axis))
    if abs(axis_norm - 1.0) > _UNIT_TOL:
        problems.append(f"joint '{j.name}': non-unit axis (norm {axis_norm:.12g})")
    quat_norm = math.sqrt(sum(c * c for c in j.origin_rotation))
    if abs(quat_norm - 1.0) > _UNIT_TOL:
        problems.append(
            f"joint '{j.name}': non-unit origin_rotation (norm {quat_norm:.12g})"
        )
    if not j.limits[0] < j.limits[1]:
        problems.append(
            f"joint '{j.name}': inverted limits ({j.limits[0]} >= {j.limits[1]})"
        )
    if j.mass < 0:
        problems.append(f"joint '{j.name}': negative mass ({j.mass})")
    if j.viscous_friction < 0:
        problems.append(f"joint '{j.name}': negative viscous_friction")
    if j.coulomb_friction < 0:
        problems.append(f"joint '{j.name}': negative coulomb_friction")
    if j.max_velocity <= 0:
        problems.append(f"joint '{j.name}': max_velocity must be > 0")
    if j.max_torque <= 0:
        problems.append(f"joint '{j.name}': max_torque must be > 0")


def validate_chain(chain: KinematicChain) -> None:
    """Raise ChainError listing every invariant violation."""
    problems: list[str] = []
    if chain.n_joints < 1:
        problems.append("chain has no joints")
    names = [j.name for j in chain.joints]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        problems.append(f"duplicate joint name(s): {', '.join(dupes)}")
    for j in chain.joints:
        _validate_joint(j, problems)
    if problems:
        raise ChainError(
            f"chain '{chain.name}' is invalid:\n  " + "\n  ".join(problems)
        )


def _joint_from_block(block: Block) -> JointSpec:
    block.require(_JOINT_KEYS)
    missing = block.missing(_JOINT_KEYS)
    if missing:
        raise ConfigError(
            f"[joint] at line {block.line}: missing key(s): {', '.join(missing)}"
        )
    return JointSpec(
        name=block.entries["name"],
        axis=parse_floats(block, "axis", 3),
        origin_translation=parse_floats(block, "origin_translation", 3),
        origin_rotation=parse_floats(block, "origin_rotation", 4),
        limits=parse_floats(block, "limits", 2),
        max_velocity=parse_float(block, "max_velocity"),
        max_torque=parse_float(block, "max_torque"),
        mass=parse_float(block, "mass"),
        com=parse_floats(block, "com", 3),
        viscous_friction=parse_float(block, "viscous_friction"),
        coulomb_friction=parse_float(block, "coulomb_friction"),
    )


def parse_chain(config_text: str) -> KinematicChain:
    """Parse and validate a chain config. Raises ConfigError / ChainError."""
    blocks = parse_blocks(config_text)
    chain_blocks = [b for b in blocks if b.name == "chain"]
    joint_blocks = [b for b in blocks if b.name == "joint"]
    other = [b for b in blocks if b.name not in ("chain", "joint")]
    if other:
        raise ConfigError(
            f"line {other[0].line}: unknown section [{other[0].name}] "
            "(expected [chain] or [joint])"
        )
    if len(chain_blocks) != 1:
        raise ConfigError(f"expected exactly one [chain] block, got {len(chain_blocks)}")
    cb = chain_blocks[0]
    cb.require(_CHAIN_KEYS)
    missing = cb.missing({"name", "ee_offset"})
    if missing:
        raise ConfigError(
            f"[chain] at line {cb.line}: missing key(s): {', '.join(missing)}"
        )
    gravity = (
        parse_floats(cb, "gravity", 3) if "gravity" in cb.entries else (0.0, 0.0, -9.81)
    )
    chain = KinematicChain(
        name=cb.entries["name"],
        joints=tuple(_joint_from_block(b) for b in joint_blocks),
        ee_offset=parse_floats(cb, "ee_offset", 3),
        gravity=gravity,
    )
    validate_chain(chain)
    return chain


def serialize_chain(chain: KinematicChain) -> str:
    """Inverse of parse_chain: parse(serialize(c)) is structurally equal to c."""

    def vec(v: tuple[float, ...]) -> str:
        return " ".join(format_float(x) for x in v)

    lines = [
        "[chain]",
        f"name = {chain.name}",
        f"ee_offset = {vec(chain.ee_offset)}",
        f"gravity = {vec(chain.gravity)}",
    ]
    for j in chain.joints:
        lines += [
            "",
            "[joint]",
            f"name = {j.name}",
            f"axis = {vec(j.axis)}",
            f"origin_translation = {vec(j.origin_translation)}",
            f"origin_rotation = {vec(j.origin_rotation)}",
            f"limits = {vec(j.limits)}",
            f"max_velocity = {format_float(j.max_velocity)}",
            f"max_torque = {format_float(j.max_torque)}",
            f"mass = {format_float(j.mass)}",
            f"com = {vec(j.com)}",
            f"viscous_friction = {format_float(j.viscous_friction)}",
            f"coulomb_friction = {format_float(j.coulomb_friction)}",
        ]
    return "\n".join(lines) + "\n"


def load_chain(path: str | Path) -> KinematicChain:
    return parse_chain(Path(path).read_text(encoding="utf-8"))


def workspace_radius(chain: KinematicChain) -> float:
    """Upper bound on reachable EE distance from the base.

    Sum of link translation norms plus the EE offset norm; any FK position
    norm is <= this value.
    """
    total = math.sqrt(sum(x * x for x in chain.ee_offset))
    for j in chain.joints:
        total += math.sqrt(sum(x * x for x in j.origin_translation))
    return total


# Precomputed static geometry, keyed by the (hashable, frozen) chain itself.
@dataclass(frozen=True)
class _ChainArrays:
    axes: np.ndarray  # (n, 3) joint-frame rotation axes
    trans: np.ndarray  # (n, 3) origin translations
    origin_rot: np.ndarray  # (n, 3, 3) origin rotation matrices
    skew: np.ndarray  # (n, 3, 3) skew(axis)
    skew2: np.ndarray  # (n, 3, 3) skew(axis) @ skew(axis)
    coms: np.ndarray  # (n, 3) link-frame com positions
    masses: np.ndarray  # (n,)
    viscous: np.ndarray  # (n,)
    coulomb: np.ndarray  # (n,)
    max_velocity: np.ndarray  # (n,)
    max_torque: np.ndarray  # (n,)
    lo: np.ndarray  # (n,) lower limits
    hi: np.ndarray  # (n,) upper limits
    ee_offset: np.ndarray  # (3,)
    gravity: np.ndarray  # (3,)
    identity_origins: bool
    # plain-Python mirrors of the static geometry: the frame sweep does its
    # 3x3 arithmetic in scalars, where interpreter ops beat numpy dispatch
    axes_py: tuple = ()
    trans_py: tuple = ()
    coms_py: tuple = ()
    origin_rot_py: tuple = ()
    ee_offset_py: tuple = ()

    def __post_init__(self):  # freeze the buffers too
        for arr in self.__dict__.values():
            if isinstance(arr, np.ndarray):
                arr.setflags(write=False)


def _skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _quat_to_matrix(q: tuple[float, float, float, float]) -> np.ndarray:
    x, y, z, w = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


@lru_cache(maxsize=64)
def chain_arrays(chain: KinematicChain) -> _ChainArrays:
    n = chain.n_joints
    axes = np.array([j.axis for j in chain.joints], dtype=float)
    trans = np.array([j.origin_translation for j in chain.joints], dtype=float)
    origin_rot = np.stack([_quat_to_matrix(j.origin_rotation) for j in chain.joints])
    skew = np.stack([_skew(axes[i]) for i in range(n)])
    skew2 = np.stack([skew[i] @ skew[i] for i in range(n)])
    lo, hi = chain.limits_arrays()
    identity = all(
        j.origin_rotation in ((0.0, 0.0, 0.0, 1.0), (0.0, 0.0, 0.0, -1.0))
        for j in chain.joints
    )
    return _ChainArrays(
        axes=axes,
        trans=trans,
        origin_rot=origin_rot,
        skew=skew,
        skew2=skew2,
        coms=np.array([j.com for j in chain.joints], dtype=float),
        masses=np.array([j.mass for j in chain.joints], dtype=float),
        viscous=np.array([j.viscous_friction for j in chain.joints], dtype=float),
        coulomb=np.array([j.coulomb_friction for j in chain.joints], dtype=float),
        max_velocity=np.array([j.max_velocity for j in chain.joints], dtype=float),
        max_torque=np.array([j.max_torque for j in chain.joints], dtype=float),
        lo=lo,
        hi=hi,
        ee_offset=np.array(chain.ee_offset, dtype=float),
        gravity=np.array(chain.gravity, dtype=float),
        identity_origins=identity,
        axes_py=tuple(tuple(map(float, a)) for a in axes),
        trans_py=tuple(tuple(map(float, t)) for t in trans),
        coms_py=tuple(tuple(map(float, c)) for c in (j.com for j in chain.joints)),
        origin_rot_py=tuple(
            tuple(float(x) for x in R.flat) for R in origin_rot
        ),
        ee_offset_py=tuple(float(x) for x in chain.ee_offset),
    )


def zero_mass_copy(chain: KinematicChain) -> KinematicChain:
    """Test helper: same geometry, all masses zeroed."""
    joints = tuple(replace(j, mass=0.0) for j in chain.joints)
    return replace(chain, joints=joints)


# Bundled fixtures -----------------------------------------------------------

_DATA_DIR = Path(__file__).parent / "data"


def bundled_chain_path(name: str) -> Path:
    path = _DATA_DIR / f"{name}.chain"
    if not path.exists():
        available = sorted(p.stem for p in _DATA_DIR.glob("*.chain"))
        raise FileNotFoundError(
            f"no bundled chain '{name}' (available: {', '.join(available)})"
        )
    return path


def leader3() -> KinematicChain:
    return load_chain(bundled_chain_path("leader3"))


def follower7() -> KinematicChain:
    return load_chain(bundled_chain_path("follower7"))
