"""Leader/follower wire contract and a lossy/latent channel simulator.

Frames are fixed little-endian binary: one type-tag byte, a fixed header,
then the payload (see docs/wire-format.md for the byte-by-byte layout).
The same frames travel over the in-process channel in simulation and over
a WebSocket in bridge mode. Decoding is total: malformed input raises a
structured ProtocolError and never corrupts any state.
"""

from __future__ import annotations

import enum
import heapq
import struct
from dataclasses import dataclass

import numpy as np

PROTOCOL_VERSION = 1

TAG_HANDSHAKE = 0x01
TAG_LEADER_COMMAND = 0x02
TAG_FOLLOWER_STATE = 0x03
TAG_OPERATOR_POSE = 0x04

_HEAD = struct.Struct("<BIQ")  # tag, seq, timestamp_us


class ProtocolError(ValueError):
    """Malformed frame. Message says what was wrong; state is untouched."""


class TruncatedFrame(ProtocolError):
    pass


class UnknownTypeTag(ProtocolError):
    pass


class LengthMismatch(ProtocolError):
    pass


class FieldRangeError(ProtocolError):
    pass


@dataclass(frozen=True)
class Handshake:
    protocol_version: int
    chain_name: str
    joint_count: int
    tick_rate_hz: int

    def __post_init__(self):
        if self.joint_count < 1:
            raise ValueError("joint_count must be >= 1")


@dataclass(frozen=True)
class LeaderCommand:
    seq: int
    timestamp: int  # microseconds
    q_target: tuple[float, ...]  # rad
    gripper: float  # in [0, 1]

    def __post_init__(self):
        if not 0.0 <= self.gripper <= 1.0:
            raise ValueError(f"gripper must be in [0, 1], got {self.gripper}")


@dataclass(frozen=True)
class FollowerState:
    seq: int  # echo of the last applied command
    timestamp: int
    q_current: tuple[float, ...]
    qd_current: tuple[float, ...]
    contact_force_truth: tuple[float, float, float]  # N, sim ground truth

    def __post_init__(self):
        if len(self.q_current) != len(self.qd_current):
            raise ValueError("q_current and qd_current must have equal length")


@dataclass(frozen=True)
class OperatorPose:
    """Console/UI operator input: hand target in the leader workspace."""

    seq: int
    timestamp: int
    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float]  # scalar-last quaternion


Message = Handshake | LeaderCommand | FollowerState | OperatorPose


def encode(message: Message) -> bytes:
    if isinstance(message, Handshake):
        name = message.chain_name.encode("utf-8")
        return (
            struct.pack(
                "<BHHHH",
                TAG_HANDSHAKE,
                message.protocol_version,
                message.joint_count,
                message.tick_rate_hz,
                len(name),
            )
            + name
        )
    if isinstance(message, LeaderCommand):
        n = len(message.q_target)
        return _HEAD.pack(TAG_LEADER_COMMAND, message.seq, message.timestamp) + struct.pack(
            f"<H{n}dd", n, *message.q_target, message.gripper
        )
    if isinstance(message, FollowerState):
        n = len(message.q_current)
        return _HEAD.pack(TAG_FOLLOWER_STATE, message.seq, message.timestamp) + struct.pack(
            f"<H{2 * n}d3d",
            n,
            *message.q_current,
            *message.qd_current,
            *message.contact_force_truth,
        )
    if isinstance(message, OperatorPose):
        return _HEAD.pack(TAG_OPERATOR_POSE, message.seq, message.timestamp) + struct.pack(
            "<3d4d", *message.position, *message.orientation
        )
    raise TypeError(f"not a protocol message: {type(message)!r}")


def decode(data: bytes, expected_joint_count: int | None = None) -> Message:
    """Decode one frame. Raises a ProtocolError subclass on anything off:
    truncation, unknown tag, trailing bytes, a joint count that disagrees
    with the handshake, or out-of-range field values."""
    if len(data) < 1:
        raise TruncatedFrame("empty frame")
    tag = data[0]
    if tag == TAG_HANDSHAKE:
        if len(data) < 9:
            raise TruncatedFrame(f"handshake frame is {len(data)} bytes, need >= 9")
        version, joint_count, tick_rate, name_len = struct.unpack_from("<HHHH", data, 1)
        if len(data) != 9 + name_len:
            raise LengthMismatch(
                f"handshake declares {name_len} name bytes, frame has {len(data) - 9}"
            )
        if joint_count < 1:
            raise FieldRangeError("handshake joint_count must be >= 1")
        try:
            name = data[9:].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FieldRangeError(f"handshake chain_name is not UTF-8: {exc}") from None
        return Handshake(version, name, joint_count, tick_rate)
    if tag == TAG_LEADER_COMMAND:
        seq, ts, n = _decode_head(data, "leader command")
        want = _HEAD.size + 2 + 8 * (n + 1)
        if len(data) != want:
            raise LengthMismatch(
                f"leader command with {n} joints needs {want} bytes, got {len(data)}"
            )
        _check_joint_count(n, expected_joint_count)
        values = struct.unpack_from(f"<{n + 1}d", data, _HEAD.size + 2)
        gripper = values[n]
        if not 0.0 <= gripper <= 1.0:
            raise FieldRangeError(f"gripper out of [0, 1]: {gripper}")
        return LeaderCommand(seq, ts, values[:n], gripper)
    if tag == TAG_FOLLOWER_STATE:
        seq, ts, n = _decode_head(data, "follower state")
        want = _HEAD.size + 2 + 8 * (2 * n + 3)
        if len(data) != want:
            raise LengthMismatch(
                f"follower state with {n} joints needs {want} bytes, got {len(data)}"
            )
        _check_joint_count(n, expected_joint_count)
        values = struct.unpack_from(f"<{2 * n + 3}d", data, _HEAD.size + 2)
        return FollowerState(seq, ts, values[:n], values[n : 2 * n], values[2 * n :])
    if tag == TAG_OPERATOR_POSE:
        want = _HEAD.size + 8 * 7
        if len(data) != want:
            raise (TruncatedFrame if len(data) < want else LengthMismatch)(
                f"operator pose needs {want} bytes, got {len(data)}"
            )
        _, seq, ts = _HEAD.unpack_from(data)
        values = struct.unpack_from("<7d", data, _HEAD.size)
        return OperatorPose(seq, ts, values[:3], values[3:])
    raise UnknownTypeTag(f"unknown type tag 0x{tag:02X}")


def _decode_head(data: bytes, what: str) -> tuple[int, int, int]:
    if len(data) < _HEAD.size + 2:
        raise TruncatedFrame(f"{what} frame is {len(data)} bytes, header needs {_HEAD.size + 2}")
    _, seq, ts = _HEAD.unpack_from(data)
    (n,) = struct.unpack_from("<H", data, _HEAD.size)
    return seq, ts, n


def _check_joint_count(n: int, expected: int | None) -> None:
    if expected is not None and n != expected:
        raise LengthMismatch(f"frame carries {n} joints, handshake fixed {expected}")


# Channel simulation ----------------------------------------------------------


@dataclass(frozen=True)
class ChannelModel:
    drop_probability: float = 0.0
    latency_ticks: int = 0
    jitter_ticks: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValueError("drop_probability must be in [0, 1]")
        if self.latency_ticks < 0 or self.jitter_ticks < 0:
            raise ValueError("latency/jitter ticks must be >= 0")


class Channel:
    """One direction of a lossy, latent link. One sender per channel.

    Deterministic given the model's seed: each message is independently
    dropped with drop_probability, otherwise delivered after latency plus
    uniform jitter. Scheduled delivery ticks are forced non-decreasing so
    send order is preserved among delivered messages.
    """

    def __init__(self, model: ChannelModel):
        self.model = model
        self._rng = np.random.Generator(np.random.PCG64(model.rng_seed))
        self._pending: list[tuple[int, int, Message]] = []
        self._tick = 0
        self._count = 0
        self._last_scheduled = -1

    def step(self, inbox: list[Message]) -> list[Message]:
        """Enqueue this tick's outgoing messages, return this tick's arrivals."""
        m = self.model
        for msg in inbox:
            if m.drop_probability > 0.0 and self._rng.random() < m.drop_probability:
                continue
            delay = m.latency_ticks
            if m.jitter_ticks > 0:
                delay += int(self._rng.integers(0, m.jitter_ticks + 1))
            deliver_at = max(self._tick + delay, self._last_scheduled)
            self._last_scheduled = deliver_at
            heapq.heappush(self._pending, (deliver_at, self._count, msg))
            self._count += 1
        delivered = []
        while self._pending and self._pending[0][0] <= self._tick:
            delivered.append(heapq.heappop(self._pending)[2])
        self._tick += 1
        return delivered


class StaleAction(enum.Enum):
    HOLD = "hold"
    SOFT_STOP = "soft_stop"


DEFAULT_STALE_TIMEOUT_TICKS = 50


def stale_command_policy(
    last_applied: LeaderCommand | None,
    age_ticks: int,
    timeout_ticks: int = DEFAULT_STALE_TIMEOUT_TICKS,
) -> StaleAction:
    """Hold the last target while it is fresh enough, then ramp to a stop.

    Applies equally when no command has arrived yet (last_applied None):
    the follower holds its pose until the timeout, then soft-stops.
    """
    if age_ticks <= timeout_ticks:
        return StaleAction.HOLD
    return StaleAction.SOFT_STOP
