"""Packet tuples, trace parsing, and window partitioning.

The trace format is line-oriented CSV.  The header names each column and
may annotate it with a wire type (``name:type``); known fields default to
their registered type, extension columns must be annotated.  Absent
optional values are written as empty strings.  Timestamps must be
non-decreasing.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field as dc_field, fields as dc_fields

from .errors import TraceFormatError
from .fields import FIELDS, WIRE_TYPES, ipv4_from_str, ipv4_to_str


@dataclass(frozen=True)
class PacketTuple:
    """One packet as a flat field map plus per-query shadow metadata slots.

    Only ``ts`` is required.  ``size`` defaults to the 1-byte invariant
    floor and ``locationID`` to 0 when the trace omits those columns;
    header fields missing from the trace are simply absent (None), and any
    operator touching an absent field drops the packet for that query.
    """

    ts: float
    size: int = 1
    locationID: int = 0
    srcIP: int | None = None
    dstIP: int | None = None
    srcPort: int | None = None
    dstPort: int | None = None
    proto: int | None = None
    srcMac: str | None = None
    dstMac: str | None = None
    dns_qname: str | None = None
    dns_rr_type: int | None = None
    dns_aIP: int | None = None
    payload_len: int | None = None
    extensions: tuple[tuple[str, object], ...] = ()

    def __post_init__(self):
        if self.ts < 0:
            raise ValueError(f"ts {self.ts} negative")
        if self.size < 1:
            raise ValueError(f"size {self.size} below 1")
        for name, hi in (("srcPort", 0xFFFF), ("dstPort", 0xFFFF), ("proto", 0xFF),
                         ("srcIP", 0xFFFFFFFF), ("dstIP", 0xFFFFFFFF),
                         ("dns_aIP", 0xFFFFFFFF), ("dns_rr_type", 0xFFFF)):
            value = getattr(self, name)
            if value is not None and not 0 <= value <= hi:
                raise ValueError(f"{name} {value} outside 0..{hi}")

    def get(self, name: str):
        """Field value by name, searching declared fields then extensions."""
        if name in _DECLARED:
            return getattr(self, name)
        for key, value in self.extensions:
            if key == name:
                return value
        return None


_DECLARED = {f.name for f in dc_fields(PacketTuple)} - {"extensions"}


@dataclass(frozen=True)
class TraceWindow:
    """Half-open slice [start, start + duration) of a trace."""

    index: int
    start: float
    duration: float
    packets: tuple[PacketTuple, ...]

    def __len__(self) -> int:
        return len(self.packets)


def _parse_header(line: str, schema=None) -> list[tuple[str, str]]:
    """Resolve header cells to (name, wire_type) pairs."""
    columns: list[tuple[str, str]] = []
    for cell in line.strip().split(","):
        cell = cell.strip()
        if not cell:
            raise TraceFormatError("empty header column", line=1)
        if ":" in cell:
            name, wire = cell.split(":", 1)
            if wire not in WIRE_TYPES:
                raise TraceFormatError(f"unknown wire type {wire!r}", line=1)
            known = FIELDS.get(name)
            if known is not None and known.wire_type != wire:
                raise TraceFormatError(
                    f"column {name!r} declared {wire!r}, registered as {known.wire_type!r}",
                    line=1)
        else:
            name = cell
            known = FIELDS.get(name)
            if known is None:
                raise TraceFormatError(
                    f"extension column {name!r} needs a type annotation", line=1)
            wire = known.wire_type
        if schema is not None and name not in schema:
            raise TraceFormatError(f"column {name!r} not in schema", line=1)
        if any(existing == name for existing, _ in columns):
            raise TraceFormatError(f"duplicate column {name!r}", line=1)
        columns.append((name, wire))
    if not any(name == "ts" for name, _ in columns):
        raise TraceFormatError("trace must carry a ts column", line=1)
    return columns


def _parse_cell(text: str, wire: str, name: str, line_no: int):
    if text == "":
        return None
    try:
        if wire == "float":
            return float(text)
        if wire == "ipv4":
            return ipv4_from_str(text)
        if wire == "str":
            return text
        value = int(text)
    except ValueError as exc:
        raise TraceFormatError(f"bad {wire} value {text!r} for {name}", line=line_no) from exc
    limit = {"u8": 0xFF, "u16": 0xFFFF, "u32": 0xFFFFFFFF}[wire]
    if not 0 <= value <= limit:
        raise TraceFormatError(f"{name} value {value} outside {wire}", line=line_no)
    return value


def parse_trace(source, schema=None) -> list[PacketTuple]:
    """Read a trace into PacketTuples, preserving file order.

    Args:
        source: text lines (file object, path string, or iterable of lines).
        schema: optional allow-list of column names; None admits every
            registered field plus annotated extensions.

    Raises:
        TraceFormatError: on malformed headers or values, or if ts decreases.
    """
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as fh:
            return parse_trace(fh, schema=schema)
    if isinstance(source, bytes):
        return parse_trace(io.StringIO(source.decode("utf-8")), schema=schema)

    lines = iter(source)
    try:
        header = next(lines)
    except StopIteration:
        raise TraceFormatError("empty trace", line=1) from None
    columns = _parse_header(header, schema=schema)

    packets: list[PacketTuple] = []
    previous_ts = None
    for line_no, raw in enumerate(lines, start=2):
        line = raw.rstrip("\n").rstrip("\r")
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != len(columns):
            raise TraceFormatError(
                f"expected {len(columns)} cells, got {len(cells)}", line=line_no)
        declared = {}
        extensions = []
        for (name, wire), cell in zip(columns, cells):
            value = _parse_cell(cell.strip(), wire, name, line_no)
            if name in _DECLARED:
                if value is not None:
                    declared[name] = value
            elif value is not None:
                extensions.append((name, value))
        if "ts" not in declared:
            raise TraceFormatError("missing ts value", line=line_no)
        if previous_ts is not None and declared["ts"] < previous_ts:
            raise TraceFormatError(
                f"ts {declared['ts']} decreases below {previous_ts}", line=line_no)
        previous_ts = declared["ts"]
        try:
            packets.append(PacketTuple(extensions=tuple(extensions), **declared))
        except ValueError as exc:
            raise TraceFormatError(str(exc), line=line_no) from exc
    return packets


def format_value(value, wire: str) -> str:
    """Render one cell; absent values become the empty string."""
    if value is None:
        return ""
    if wire == "ipv4":
        return ipv4_to_str(value)
    if wire == "float":
        return repr(float(value))
    return str(value)


def write_trace(packets, destination, columns=None) -> None:
    """Write packets as a typed-header trace.

    Columns default to every declared field that is present in at least one
    packet, in registry order, plus extension fields in first-seen order.
    """
    if isinstance(destination, str):
        with open(destination, "w", encoding="utf-8", newline="") as fh:
            write_trace(packets, fh, columns=columns)
            return

    if columns is None:
        present = set()
        ext_order: list[str] = []
        for pkt in packets:
            for name in _DECLARED:
                if getattr(pkt, name) is not None:
                    present.add(name)
            for name, _ in pkt.extensions:
                if name not in ext_order:
                    ext_order.append(name)
        columns = [f.name for f in FIELDS.values() if f.name in present] + ext_order

    resolved = []
    for name in columns:
        info = FIELDS.get(name)
        resolved.append((name, info.wire_type if info else "u32"))
    header = ",".join(f"{name}:{wire}" for name, wire in resolved)
    destination.write(header + "\n")
    for pkt in packets:
        cells = [format_value(pkt.get(name), wire) for name, wire in resolved]
        destination.write(",".join(cells) + "\n")


def window_partition(packets, duration: float, origin: float | None = None) -> list[TraceWindow]:
    """Split packets into consecutive half-open windows, emitting gaps.

    The origin defaults to the first packet's ts floored to a multiple of
    the duration.  Every packet lands in exactly one window and empty
    interior windows appear explicitly so interval indexing stays aligned
    with wall-clock time.
    """
    if duration <= 0:
        raise ValueError(f"window duration {duration} must be positive")
    packets = list(packets)
    if not packets:
        return []
    if origin is None:
        first = packets[0].ts
        origin = (first // duration) * duration
    buckets: dict[int, list[PacketTuple]] = {}
    max_index = 0
    for pkt in packets:
        if pkt.ts < origin:
            raise ValueError(f"packet ts {pkt.ts} precedes window origin {origin}")
        index = int((pkt.ts - origin) // duration)
        buckets.setdefault(index, []).append(pkt)
        if index > max_index:
            max_index = index
    return [
        TraceWindow(index=i, start=origin + i * duration, duration=duration,
                    packets=tuple(buckets.get(i, ())))
        for i in range(max_index + 1)
    ]
