"""Chain model, config parsing, and workspace bound tests."""

import numpy as np
import pytest

from teleop.chain import (
    ChainError,
    bundled_chain_path,
    chain_arrays,
    follower7,
    leader3,
    parse_chain,
    serialize_chain,
    workspace_radius,
)
from teleop.config import ConfigError
from teleop.kinematics import forward_kinematics

MINIMAL = """
[chain]
name = mini
ee_offset = 1 0 0

[joint]
name = j1
axis = 0 0 1
origin_translation = 0 0 0
origin_rotation = 0 0 0 1
limits = -1 1
max_velocity = 1
max_torque = 1
mass = 0
com = 0 0 0
viscous_friction = 0
coulomb_friction = 0
"""


def test_leader3_fixture():
    chain = leader3()
    assert chain.n_joints == 3
    assert chain.ee_offset == (0.25, 0.0, 0.0)
    assert chain.joints[0].axis == (0.0, 0.0, 1.0)
    assert chain.joints[1].origin_translation == (0.0, 0.0, 0.10)


def test_follower7_fixture():
    chain = follower7()
    assert chain.n_joints == 7
    names = [j.name for j in chain.joints]
    assert len(set(names)) == 7
    # alternating z/y axes
    for i, j in enumerate(chain.joints):
        assert j.axis == ((0.0, 0.0, 1.0) if i % 2 == 0 else (0.0, 1.0, 0.0))


def test_non_unit_axis_rejected():
    bad = MINIMAL.replace("axis = 0 0 1", "axis = 0 0 2")
    with pytest.raises(ChainError, match="non-unit axis"):
        parse_chain(bad)


def test_inverted_limits_rejected():
    bad = MINIMAL.replace("limits = -1 1", "limits = 1 -1")
    with pytest.raises(ChainError, match="inverted limits"):
        parse_chain(bad)


def test_all_violations_listed():
    bad = MINIMAL.replace("axis = 0 0 1", "axis = 0 0 2").replace(
        "limits = -1 1", "limits = 1 -1"
    ).replace("mass = 0", "mass = -1")
    with pytest.raises(ChainError) as err:
        parse_chain(bad)
    msg = str(err.value)
    assert "non-unit axis" in msg
    assert "inverted limits" in msg
    assert "negative mass" in msg


def test_unknown_key_rejected():
    bad = MINIMAL.replace("mass = 0", "mass = 0\nmas = 0")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_chain(bad)


def test_missing_key_rejected():
    bad = MINIMAL.replace("mass = 0\n", "")
    with pytest.raises(ConfigError, match="missing key"):
        parse_chain(bad)


def test_syntax_error_carries_line_number():
    with pytest.raises(ConfigError, match="line 3"):
        parse_chain("[chain]\nname = x\nnot a key value line\n")


def test_duplicate_joint_names_rejected():
    second = "[joint]" + MINIMAL.split("[joint]")[1]
    with pytest.raises(ChainError, match="duplicate joint name"):
        parse_chain(MINIMAL + "\n" + second)


def test_round_trip_identity():
    for chain in (leader3(), follower7()):
        assert parse_chain(serialize_chain(chain)) == chain


def test_round_trip_preserves_exact_floats():
    text = MINIMAL.replace("limits = -1 1", "limits = -1.2345678901234567 1.1")
    chain = parse_chain(text)
    again = parse_chain(serialize_chain(chain))
    assert again.joints[0].limits == chain.joints[0].limits


def test_workspace_radius_leader3():
    assert workspace_radius(leader3()) == pytest.approx(0.60, abs=1e-12)


def test_workspace_radius_single_joint():
    assert workspace_radius(parse_chain(MINIMAL)) == pytest.approx(1.0, abs=1e-15)


def test_workspace_radius_bounds_fk_follower7():
    chain = follower7()
    radius = workspace_radius(chain)
    arr = chain_arrays(chain)
    rng = np.random.default_rng(123)
    for _ in range(1000):
        q = rng.uniform(arr.lo, arr.hi)
        pos = forward_kinematics(chain, q).position
        assert np.linalg.norm(pos) <= radius + 1e-12


def test_gravity_default():
    chain = parse_chain(MINIMAL)
    assert chain.gravity == (0.0, 0.0, -9.81)


def test_bundled_chain_path_unknown_name():
    with pytest.raises(FileNotFoundError, match="available"):
        bundled_chain_path("nonexistent")
