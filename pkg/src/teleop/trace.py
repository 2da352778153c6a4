"""Per-tick trace records and their NDJSON / compact binary serializations.

NDJSON is the default: one JSON object per line with fixed field names, so a
crashed run still leaves a parseable prefix and shell tools can slice it.
The binary format carries the identical records at roughly a third of the
size for long runs; both round-trip bit-exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, fields
from pathlib import Path
from typing import BinaryIO, TextIO

import numpy as np

TRACE_MAGIC = b"TTRC"
TRACE_VERSION = 1

# (field, element count); vectors are stored as fixed-length double runs
_VEC_FIELDS = [
    ("leader_pos", 3),
    ("leader_quat", 4),
    ("operator_pos", 3),
    ("target_pos", 3),
    ("target_quat", 4),
    ("follower_pos", 3),
    ("follower_quat", 4),
    ("delta_ee", 3),
    ("v_cartesian", 3),
    ("contact_force", 3),
    ("rendered_force", 3),
]


@dataclass
class TraceRecord:
    tick: int
    t: float
    leader_pos: tuple[float, ...]
    leader_quat: tuple[float, ...]
    operator_pos: tuple[float, ...]
    target_pos: tuple[float, ...]
    target_quat: tuple[float, ...]
    follower_pos: tuple[float, ...]
    follower_quat: tuple[float, ...]
    leader_q: tuple[float, ...]
    follower_q: tuple[float, ...]
    delta_ee: tuple[float, ...]
    v_cartesian: tuple[float, ...]
    factor: float
    kp: tuple[float, ...]
    kd: tuple[float, ...]
    contact_force: tuple[float, ...]
    rendered_force: tuple[float, ...]
    contact: bool

    def to_json_obj(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @staticmethod
    def from_json_obj(obj: dict) -> "TraceRecord":
        kwargs = {}
        for f in fields(TraceRecord):
            v = obj[f.name]
            kwargs[f.name] = tuple(v) if isinstance(v, list) else v
        return TraceRecord(**kwargs)


@dataclass
class Trace:
    scenario_name: str
    tick_rate_hz: int
    leader_joints: int
    follower_joints: int
    records: list[TraceRecord]

    @property
    def dt(self) -> float:
        return 1.0 / self.tick_rate_hz

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def contact_mask(self) -> np.ndarray:
        return np.array([r.contact for r in self.records], dtype=bool)


# NDJSON ----------------------------------------------------------------------


def write_ndjson(trace: Trace, fh: TextIO) -> None:
    header = {
        "format": "teleop-trace",
        "version": TRACE_VERSION,
        "scenario": trace.scenario_name,
        "tick_rate_hz": trace.tick_rate_hz,
        "leader_joints": trace.leader_joints,
        "follower_joints": trace.follower_joints,
    }
    fh.write(json.dumps(header, separators=(",", ":")) + "\n")
    for rec in trace.records:
        fh.write(json.dumps(rec.to_json_obj(), separators=(",", ":")) + "\n")


class TraceFormatError(ValueError):
    """Malformed trace input; message names the offending line."""


def read_ndjson(fh: TextIO) -> Trace:
    first = fh.readline()
    if not first.strip():
        raise TraceFormatError("line 1: empty trace file")
    try:
        header = json.loads(first)
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"line 1: bad header: {exc}") from None
    if header.get("format") != "teleop-trace":
        raise TraceFormatError("line 1: not a teleop trace (missing format marker)")
    records = []
    for lineno, line in enumerate(fh, start=2):
        if not line.strip():
            continue
        try:
            records.append(TraceRecord.from_json_obj(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise TraceFormatError(f"line {lineno}: bad record: {exc}") from None
    return Trace(
        scenario_name=header.get("scenario", ""),
        tick_rate_hz=int(header["tick_rate_hz"]),
        leader_joints=int(header["leader_joints"]),
        follower_joints=int(header["follower_joints"]),
        records=records,
    )


# binary ----------------------------------------------------------------------


def _record_struct(nl: int, nf: int) -> struct.Struct:
    doubles = 1 + sum(c for _, c in _VEC_FIELDS) + nl + nf + 1 + 2 * nl  # t + vecs + q's + factor + gains
    return struct.Struct(f"<I{doubles}dB")


def write_binary(trace: Trace, fh: BinaryIO) -> None:
    name = trace.scenario_name.encode("utf-8")
    fh.write(TRACE_MAGIC)
    fh.write(
        struct.pack(
            "<HHHHH",
            TRACE_VERSION,
            trace.tick_rate_hz,
            trace.leader_joints,
            trace.follower_joints,
            len(name),
        )
    )
    fh.write(name)
    rec_struct = _record_struct(trace.leader_joints, trace.follower_joints)
    for r in trace.records:
        values = [r.t]
        for fname, _ in _VEC_FIELDS:
            values.extend(getattr(r, fname))
        values.extend(r.leader_q)
        values.extend(r.follower_q)
        values.append(r.factor)
        values.extend(r.kp)
        values.extend(r.kd)
        fh.write(rec_struct.pack(r.tick, *values, 1 if r.contact else 0))


def read_binary(fh: BinaryIO) -> Trace:
    magic = fh.read(4)
    if magic != TRACE_MAGIC:
        raise TraceFormatError("not a binary teleop trace (bad magic)")
    version, rate, nl, nf, name_len = struct.unpack("<HHHHH", fh.read(10))
    if version != TRACE_VERSION:
        raise TraceFormatError(f"unsupported trace version {version}")
    name = fh.read(name_len).decode("utf-8")
    rec_struct = _record_struct(nl, nf)
    records = []
    index = 0
    while True:
        blob = fh.read(rec_struct.size)
        if not blob:
            break
        if len(blob) != rec_struct.size:
            raise TraceFormatError(f"record {index}: truncated ({len(blob)} bytes)")
        values = rec_struct.unpack(blob)
        tick = values[0]
        rest = list(values[1:-1])
        contact = bool(values[-1])
        t = rest.pop(0)
        vecs = {}
        for fname, count in _VEC_FIELDS:
            vecs[fname] = tuple(rest[:count])
            del rest[:count]
        leader_q = tuple(rest[:nl])
        del rest[:nl]
        follower_q = tuple(rest[:nf])
        del rest[:nf]
        factor = rest.pop(0)
        kp = tuple(rest[:nl])
        del rest[:nl]
        kd = tuple(rest[:nl])
        del rest[:nl]
        records.append(
            TraceRecord(
                tick=tick,
                t=t,
                leader_q=leader_q,
                follower_q=follower_q,
                factor=factor,
                kp=kp,
                kd=kd,
                contact=contact,
                **vecs,
            )
        )
        index += 1
    return Trace(name, rate, nl, nf, records)


def save_trace(trace: Trace, path: str | Path, binary: bool | None = None) -> None:
    path = Path(path)
    if binary is None:
        binary = path.suffix == ".bin"
    if binary:
        with open(path, "wb") as fh:
            write_binary(trace, fh)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            write_ndjson(trace, fh)


def load_trace(path: str | Path) -> Trace:
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) == TRACE_MAGIC:
            fh.seek(0)
            return read_binary(fh)
    with open(path, "r", encoding="utf-8") as fh:
        return read_ndjson(fh)
