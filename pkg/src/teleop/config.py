"""Block-style config text format shared by chain and scenario files.

The format is deliberately tiny: `[section]` headers followed by
`key = value` lines, `#` comments, blank lines ignored. Section order is
preserved and repeated section names are allowed (e.g. one `[joint]` block
per joint). Values are parsed by the consumer; this module only deals with
structure and gives position-annotated errors.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

_SECTION_RE = re.compile(r"^\[([A-Za-z0-9_\-]+)\]$")
_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class ConfigError(ValueError):
    """Raised for malformed config text; message carries line numbers."""


@dataclass
class Block:
    name: str
    line: int
    entries: dict[str, str] = field(default_factory=dict)
    entry_lines: dict[str, int] = field(default_factory=dict)

    def require(self, allowed: set[str]) -> None:
        """Reject unknown keys (typo guard)."""
        unknown = [k for k in self.entries if k not in allowed]
        if unknown:
            locs = ", ".join(
                f"'{k}' (line {self.entry_lines[k]})" for k in sorted(unknown)
            )
            raise ConfigError(f"unknown key(s) in [{self.name}]: {locs}")

    def missing(self, required: set[str]) -> list[str]:
        return sorted(k for k in required if k not in self.entries)


def parse_blocks(text: str) -> list[Block]:
    """Split config text into ordered blocks, validating structure only."""
    blocks: list[Block] = []
    current: Block | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if m:
            current = Block(name=m.group(1), line=lineno)
            blocks.append(current)
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: entry before any [section] header")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"line {lineno}: invalid key name {key!r}")
        if key in current.entries:
            raise ConfigError(
                f"line {lineno}: duplicate key '{key}' in [{current.name}] "
                f"(first at line {current.entry_lines[key]})"
            )
        current.entries[key] = value
        current.entry_lines[key] = lineno
    return blocks


def parse_float(block: Block, key: str) -> float:
    raw = block.entries[key]
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(
            f"line {block.entry_lines[key]}: '{key}' expects a number, got {raw!r}"
        ) from None


def parse_int(block: Block, key: str) -> int:
    raw = block.entries[key]
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(
            f"line {block.entry_lines[key]}: '{key}' expects an integer, got {raw!r}"
        ) from None


def parse_bool(block: Block, key: str) -> bool:
    raw = block.entries[key].lower()
    if raw in ("true", "yes", "1"):
        return True
    if raw in ("false", "no", "0"):
        return False
    raise ConfigError(
        f"line {block.entry_lines[key]}: '{key}' expects true/false, got {raw!r}"
    )


def parse_floats(block: Block, key: str, count: int | None = None) -> tuple[float, ...]:
    raw = block.entries[key]
    try:
        values = tuple(float(tok) for tok in raw.split())
    except ValueError:
        raise ConfigError(
            f"line {block.entry_lines[key]}: '{key}' expects space-separated "
            f"numbers, got {raw!r}"
        ) from None
    if count is not None and len(values) != count:
        raise ConfigError(
            f"line {block.entry_lines[key]}: '{key}' expects {count} numbers, "
            f"got {len(values)}"
        )
    return values


def format_float(x: float) -> str:
    """Shortest repr that round-trips; keeps config files bit-stable."""
    return repr(float(x))
