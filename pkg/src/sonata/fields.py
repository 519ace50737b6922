"""Packet field registry: names, wire types, widths, and hierarchy.

Masking is the substrate for iterative refinement: IPv4 fields coarsen by
prefix length, domain names by label-suffix count.  Both families satisfy
the same algebra (idempotent at a level, monotone across levels), which the
refinement machinery relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

# Wire types accepted in trace headers.
WIRE_TYPES = ("float", "u8", "u16", "u32", "ipv4", "str")

# Sentinel level meaning "native granularity, no coarsening".
NATIVE_LEVEL = None


@dataclass(frozen=True)
class FieldInfo:
    """Static description of one packet field."""

    name: str
    wire_type: str
    bits: int          # ledger width; strings are charged per byte at use sites
    hierarchy: str | None = None   # "ipv4" | "domain" | None


_REGISTRY = [
    FieldInfo("ts", "float", 64),
    FieldInfo("size", "u32", 32),
    FieldInfo("locationID", "u32", 32),
    FieldInfo("srcIP", "ipv4", 32, hierarchy="ipv4"),
    FieldInfo("dstIP", "ipv4", 32, hierarchy="ipv4"),
    FieldInfo("srcPort", "u16", 16),
    FieldInfo("dstPort", "u16", 16),
    FieldInfo("proto", "u8", 8),
    FieldInfo("srcMac", "str", 48),
    FieldInfo("dstMac", "str", 48),
    FieldInfo("dns_qname", "str", 0, hierarchy="domain"),
    FieldInfo("dns_rr_type", "u16", 16),
    FieldInfo("dns_aIP", "ipv4", 32, hierarchy="ipv4"),
    FieldInfo("payload_len", "u32", 32),
]

FIELDS: dict[str, FieldInfo] = {f.name: f for f in _REGISTRY}

# Fields that may carry a refinement hierarchy.
HIERARCHICAL_FIELDS = {f.name for f in _REGISTRY if f.hierarchy}

# Maximum meaningful level per hierarchy kind.  IPv4 prefixes end at /32;
# domain names have no fixed cap, so their finest level is NATIVE_LEVEL.
IPV4_FINEST = 32


def field_bits(name: str) -> int:
    """Ledger width in bits for a field; unknown extension fields are 32."""
    info = FIELDS.get(name)
    if info is None:
        return 32
    return info.bits


def ipv4_from_str(text: str) -> int:
    parts = text.split(".")
    if len(parts) != 4:
        raise ValueError(f"bad IPv4 literal {text!r}")
    value = 0
    for part in parts:
        octet = int(part)
        if not 0 <= octet <= 255:
            raise ValueError(f"bad IPv4 octet in {text!r}")
        value = (value << 8) | octet
    return value


def ipv4_to_str(value: int) -> str:
    return ".".join(str((value >> shift) & 0xFF) for shift in (24, 16, 8, 0))


def mask_ipv4(value: int, level: int) -> int:
    """Keep the top ``level`` bits of a 32-bit address."""
    if not 0 <= level <= 32:
        raise ValueError(f"IPv4 mask level {level} outside 0..32")
    if level == 32:
        return value
    return value & (0xFFFFFFFF << (32 - level)) & 0xFFFFFFFF


def mask_domain(name: str, level: int) -> str:
    """Keep the last ``level`` labels of a dotted name; level 0 is the root."""
    if level < 0:
        raise ValueError(f"domain mask level {level} negative")
    if level == 0:
        return "."
    labels = name.rstrip(".").split(".")
    if level >= len(labels):
        return name
    return ".".join(labels[-level:])


def mask_value(value, field: str, level):
    """Coarsen ``value`` of ``field`` to ``level``; identity at NATIVE_LEVEL."""
    if level is NATIVE_LEVEL:
        return value
    info = FIELDS.get(field)
    kind = info.hierarchy if info else None
    if kind == "ipv4":
        return mask_ipv4(value, level)
    if kind == "domain":
        return mask_domain(value, level)
    raise ValueError(f"field {field!r} has no refinement hierarchy")


def hierarchy_kind(field: str) -> str | None:
    info = FIELDS.get(field)
    return info.hierarchy if info else None


def finest_level(field: str):
    """Native granularity marker for a hierarchical field."""
    kind = hierarchy_kind(field)
    if kind == "ipv4":
        return IPV4_FINEST
    if kind == "domain":
        return NATIVE_LEVEL
    raise ValueError(f"field {field!r} has no refinement hierarchy")


def level_at_least(field: str, coarse, fine) -> bool:
    """True when ``fine`` is the same or a finer level than ``coarse``."""
    if coarse is NATIVE_LEVEL:
        return fine is NATIVE_LEVEL
    if fine is NATIVE_LEVEL:
        return True
    return fine >= coarse
