"""Address-event streams: data model, file formats, pooling and input mapping.

Two on-disk formats are supported.

Text (``.txt``)::

    width height
    t x y p
    ...

ASCII decimal, single spaces, LF line endings, ``p`` is 1 for ON and 0 for OFF.

Binary (``.evs``), little-endian, no padding::

    magic  b"EVS1"      4 bytes
    width  u16
    height u16
    count  u64
    count x { t u64 (microseconds), x u16, y u16, p u8 }   13 bytes each

Input neurons are laid out as two contiguous blocks, ON first then OFF, each
row-major over the sensor: ``index = p_block * width * height + y * width + x``.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import BoundsError, ConfigError, DataError, IntegrityError, ParseError

EVENT_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])
assert EVENT_DTYPE.itemsize == 13

BIN_MAGIC = b"EVS1"
_BIN_HEADER = struct.Struct("<4sHHQ")

MANIFEST_NAME = "manifest.tsv"


class Polarity(enum.IntEnum):
    OFF = 0
    ON = 1


class EventFormat(str, enum.Enum):
    TEXT = "TEXT"
    BIN = "BIN"


class AddressEvent(NamedTuple):
    t: int
    x: int
    y: int
    polarity: Polarity


@dataclass(frozen=True)
class StreamGeometry:
    width: int
    height: int
    pool: int = 1

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"sensor dimensions must be positive, got {self.width}x{self.height}", "geometry")
        if self.pool < 1:
            raise ConfigError(f"pool must be >= 1, got {self.pool}", "pool")
        if self.pool > 1 and (self.width % self.pool or self.height % self.pool):
            raise ConfigError(
                f"{self.width}x{self.height} is not divisible by pool {self.pool}", "pool"
            )

    @property
    def n_inputs(self) -> int:
        return 2 * self.width * self.height


def _as_event_array(events) -> np.ndarray:
    if isinstance(events, np.ndarray) and events.dtype == EVENT_DTYPE:
        arr = events.copy()
    else:
        rows = [(int(e[0]), int(e[1]), int(e[2]), int(e[3])) for e in events]
        arr = np.array(rows, dtype=EVENT_DTYPE) if rows else np.zeros(0, dtype=EVENT_DTYPE)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class EventStream:
    """An immutable, time-ordered list of address events on a fixed sensor."""

    width: int
    height: int
    events: np.ndarray = field(repr=False)
    label: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "events", _as_event_array(self.events))
        ev = self.events
        if len(ev):
            if int(ev["x"].max()) >= self.width or int(ev["y"].max()) >= self.height:
                raise BoundsError(f"event outside {self.width}x{self.height} sensor")
            if int(ev["p"].max()) > 1:
                raise IntegrityError("polarity must be 0 or 1")
            if np.any(np.diff(ev["t"].astype(np.int64)) < 0):
                raise IntegrityError("timestamps are not non-decreasing")

    @property
    def geometry(self) -> StreamGeometry:
        return StreamGeometry(self.width, self.height)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[AddressEvent]:
        for t, x, y, p in self.events.tolist():
            yield AddressEvent(t, x, y, Polarity(p))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            (self.width, self.height, self.label) == (other.width, other.height, other.label)
            and np.array_equal(self.events, other.events)
        )

    @property
    def t_start(self) -> int:
        return int(self.events["t"][0]) if len(self.events) else 0

    @property
    def t_end(self) -> int:
        return int(self.events["t"][-1]) if len(self.events) else 0

    def with_label(self, label: int | None) -> "EventStream":
        return EventStream(self.width, self.height, self.events, label)

    @classmethod
    def from_arrays(cls, width, height, t, x, y, p, label=None) -> "EventStream":
        arr = np.zeros(len(t), dtype=EVENT_DTYPE)
        arr["t"], arr["x"], arr["y"], arr["p"] = t, x, y, p
        return cls(width, height, arr, label)


def _infer_format(path: Path) -> EventFormat:
    return EventFormat.BIN if path.suffix.lower() == ".evs" else EventFormat.TEXT


def _parse_ints(line: str, n: int, lineno: int, path) -> list[int]:
    parts = line.split(" ")
    if len(parts) != n:
        raise ParseError(f"expected {n} space-separated fields, got {line!r}", path, lineno)
    try:
        vals = [int(v) for v in parts]
    except ValueError:
        raise ParseError(f"non-integer field in {line!r}", path, lineno) from None
    if any(v < 0 for v in vals):
        raise ParseError(f"negative field in {line!r}", path, lineno)
    return vals


def _read_text(path: Path) -> EventStream:
    data = path.read_bytes()
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise ParseError("file is not ASCII", path, exc.start, unit="byte") from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("missing header line", path, 1)
    width, height = _parse_ints(lines[0], 2, 1, path)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        t, x, y, p = _parse_ints(line, 4, lineno, path)
        if p > 1:
            raise ParseError(f"polarity must be 0 or 1, got {p}", path, lineno)
        if x >= width or y >= height:
            raise BoundsError(f"{path} line {lineno}: event ({x},{y}) outside {width}x{height}")
        if rows and t < rows[-1][0]:
            raise IntegrityError(f"{path} line {lineno}: timestamp {t} decreases")
        rows.append((t, x, y, p))
    return EventStream(width, height, rows)


def _read_bin(path: Path) -> EventStream:
    data = path.read_bytes()
    if len(data) < _BIN_HEADER.size:
        raise ParseError("truncated header", path, len(data), unit="byte")
    magic, width, height, count = _BIN_HEADER.unpack_from(data, 0)
    if magic != BIN_MAGIC:
        raise ParseError(f"bad magic {magic!r}", path, 0, unit="byte")
    expected = _BIN_HEADER.size + count * EVENT_DTYPE.itemsize
    if len(data) != expected:
        raise ParseError(
            f"expected {expected} bytes for {count} events, file has {len(data)}",
            path, min(len(data), expected), unit="byte",
        )
    arr = np.frombuffer(data, dtype=EVENT_DTYPE, count=count, offset=_BIN_HEADER.size)
    if count:
        bad = np.flatnonzero(arr["p"] > 1)
        if bad.size:
            off = _BIN_HEADER.size + int(bad[0]) * EVENT_DTYPE.itemsize + 12
            raise ParseError("polarity must be 0 or 1", path, off, unit="byte")
        back = np.flatnonzero(np.diff(arr["t"].astype(np.int64)) < 0)
        if back.size:
            raise IntegrityError(f"{path}: timestamp decreases at event {int(back[0]) + 1}")
        if int(arr["x"].max()) >= width or int(arr["y"].max()) >= height:
            raise BoundsError(f"{path}: event outside {width}x{height}")
    return EventStream(width, height, arr)


def read_events(path, format: EventFormat | str | None = None) -> EventStream:
    """Read an event file. ``format`` defaults to the file extension (``.evs`` is binary)."""
    path = Path(path)
    fmt = EventFormat(format) if format is not None else _infer_format(path)
    if fmt is EventFormat.BIN:
        return _read_bin(path)
    return _read_text(path)


def encode_events(s: EventStream, format: EventFormat | str) -> bytes:
    fmt = EventFormat(format)
    if fmt is EventFormat.BIN:
        return _BIN_HEADER.pack(BIN_MAGIC, s.width, s.height, len(s)) + s.events.tobytes()
    out = [f"{s.width} {s.height}\n"]
    out.extend(f"{t} {x} {y} {p}\n" for t, x, y, p in s.events.tolist())
    return "".join(out).encode("ascii")


def write_events(s: EventStream, path, format: EventFormat | str | None = None) -> Path:
    path = Path(path)
    fmt = EventFormat(format) if format is not None else _infer_format(path)
    if fmt is EventFormat.BIN and (s.width > 0xFFFF or s.height > 0xFFFF):
        raise ConfigError("binary format limits sensor dimensions to 65535", "geometry")
    path.write_bytes(encode_events(s, fmt))
    return path


def downsample(s: EventStream, pool: int) -> EventStream:
    """Pool events onto a coarser grid by integer division of their coordinates.

    Every event is forwarded; simultaneous events landing in the same block are
    not merged.
    """
    StreamGeometry(s.width, s.height, pool)
    if pool == 1:
        return s
    ev = s.events.copy()
    ev["x"] //= pool
    ev["y"] //= pool
    return EventStream(s.width // pool, s.height // pool, ev, s.label)


def to_input_indices(e: AddressEvent, g: StreamGeometry) -> int:
    t, x, y, p = e
    if not (0 <= x < g.width and 0 <= y < g.height):
        raise BoundsError(f"event ({x},{y}) outside {g.width}x{g.height}")
    block = 0 if p == Polarity.ON else g.width * g.height
    return block + y * g.width + x


def stream_indices(s: EventStream) -> np.ndarray:
    """Vectorised :func:`to_input_indices` over a whole stream."""
    ev = s.events
    n_pix = s.width * s.height
    block = np.where(ev["p"] == Polarity.ON, 0, n_pix)
    return block + ev["y"].astype(np.int64) * s.width + ev["x"].astype(np.int64)


def translate(s: EventStream, dx: int, dy: int) -> EventStream:
    """Shift every event by ``(dx, dy)``; the result must stay on the sensor."""
    ev = s.events.copy()
    x = ev["x"].astype(np.int64) + dx
    y = ev["y"].astype(np.int64) + dy
    if len(ev) and (x.min() < 0 or y.min() < 0 or x.max() >= s.width or y.max() >= s.height):
        raise BoundsError(f"shift ({dx},{dy}) moves events off the sensor")
    ev["x"], ev["y"] = x, y
    return EventStream(s.width, s.height, ev, s.label)


# -- datasets --------------------------------------------------------------


def read_manifest(path) -> list[tuple[Path, int]]:
    """Parse ``manifest.tsv`` (``path<TAB>label``). Paths are relative to the manifest."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError("expected 'path<TAB>label'", path, lineno)
        try:
            label = int(parts[1])
        except ValueError:
            raise ParseError(f"label {parts[1]!r} is not an integer", path, lineno) from None
        if label < 0:
            raise ParseError(f"negative label {label}", path, lineno)
        entries.append((path.parent / parts[0], label))
    return entries


def write_manifest(directory, entries: Sequence[tuple[str, int]]) -> Path:
    path = Path(directory) / MANIFEST_NAME
    path.write_text("".join(f"{p}\t{label}\n" for p, label in entries))
    return path


def load_dataset(manifest) -> list[EventStream]:
    return [read_events(p).with_label(label) for p, label in read_manifest(manifest)]
