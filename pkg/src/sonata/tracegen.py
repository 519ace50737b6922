"""Synthetic packet traces with planted, ground-truthed anomalies.

A trace spec describes steady background traffic (a mix of generic UDP/TCP
flows and benign DNS responses drawn from address pools) plus any number
of planted anomalies, each shaped for one of the stock detection queries:
a DNS response flood against one victim, a generic UDP flood, a
superspreader fanning out to many destinations, or a port scan.  The same
spec and seed always produce the identical packet sequence, byte for byte
once written, and every generation returns a ground-truth record naming
each anomaly's key, query, and active time span.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from random import Random

from .errors import ConfigError
from .fields import ipv4_from_str
from .packets import PacketTuple

# anomaly kind -> (stock query it should trip, key field of that query)
ANOMALY_QUERIES = {
    "dns_flood": ("dnsVictims", "dstIP"),
    "udp_flood": ("ddosUdp", "dstIP"),
    "superspreader": ("superSpreader", "srcIP"),
    "port_scan": ("portScan", "srcIP"),
}


def _pool(prefix: str, count: int) -> list[int]:
    if not 1 <= count <= 62_500:
        raise ConfigError(f"pool size {count} out of range")
    return [ipv4_from_str(f"{prefix}.{i // 250}.{i % 250 + 1}")
            for i in range(count)]


_QNAMES = tuple(f"host{i}.example.com" for i in range(20))


@dataclass(frozen=True)
class Anomaly:
    kind: str
    key: int            # victim dstIP or offender srcIP
    start: float
    duration: float
    rate: float
    spread: int         # distinct counterparts (sources or fan-out)

    @property
    def query(self) -> str:
        return ANOMALY_QUERIES[self.kind][0]

    @property
    def key_field(self) -> str:
        return ANOMALY_QUERIES[self.kind][1]


def _parse_anomaly(entry: dict) -> Anomaly:
    kind = entry.get("kind")
    if kind not in ANOMALY_QUERIES:
        raise ConfigError(f"unknown anomaly kind {kind!r}")
    key_name = "victim" if ANOMALY_QUERIES[kind][1] == "dstIP" else "source"
    if key_name not in entry:
        raise ConfigError(f"anomaly {kind!r} needs a {key_name!r} address")
    spread_default = 100 if kind in ("dns_flood", "udp_flood") else 60
    return Anomaly(kind=kind, key=ipv4_from_str(str(entry[key_name])),
                   start=float(entry.get("start", 0.0)),
                   duration=float(entry["duration"]),
                   rate=float(entry["rate"]),
                   spread=int(entry.get("spread", spread_default)))


def _background_packet(ts, rng: Random, clients, servers, resolvers,
                       dns_fraction) -> PacketTuple:
    if rng.random() < dns_fraction:
        qname = _QNAMES[rng.randrange(len(_QNAMES))]
        return PacketTuple(
            ts=ts, size=rng.randrange(80, 512),
            srcIP=resolvers[rng.randrange(len(resolvers))],
            dstIP=clients[rng.randrange(len(clients))],
            srcPort=53, dstPort=rng.randrange(1024, 60_000), proto=17,
            dns_qname=qname, dns_rr_type=1,
            dns_aIP=servers[rng.randrange(len(servers))])
    return PacketTuple(
        ts=ts, size=rng.randrange(64, 1400),
        srcIP=clients[rng.randrange(len(clients))],
        dstIP=servers[rng.randrange(len(servers))],
        srcPort=rng.randrange(1024, 60_000),
        dstPort=rng.choice((80, 443, 123, 8080)),
        proto=rng.choice((6, 17)))


def _anomaly_packets(anomaly: Anomaly, rng: Random) -> list[PacketTuple]:
    count = int(anomaly.rate * anomaly.duration)
    if count <= 0:
        return []
    step = anomaly.duration / count
    out = []
    if anomaly.kind == "dns_flood":
        sources = _pool("9.9", anomaly.spread)
        for i in range(count):
            out.append(PacketTuple(
                ts=anomaly.start + i * step, size=rng.randrange(400, 1400),
                srcIP=sources[i % len(sources)], dstIP=anomaly.key,
                srcPort=53, dstPort=rng.randrange(1024, 60_000), proto=17,
                dns_qname="burst.example.com", dns_rr_type=46,
                dns_aIP=anomaly.key))
    elif anomaly.kind == "udp_flood":
        sources = _pool("9.8", anomaly.spread)
        for i in range(count):
            out.append(PacketTuple(
                ts=anomaly.start + i * step, size=rng.randrange(64, 512),
                srcIP=sources[i % len(sources)], dstIP=anomaly.key,
                srcPort=rng.randrange(1024, 60_000), dstPort=80, proto=17))
    elif anomaly.kind == "superspreader":
        targets = _pool("10.9", anomaly.spread)
        for i in range(count):
            out.append(PacketTuple(
                ts=anomaly.start + i * step, size=64,
                srcIP=anomaly.key, dstIP=targets[i % len(targets)],
                srcPort=rng.randrange(1024, 60_000), dstPort=80,
                proto=rng.choice((6, 17))))
    else:   # port_scan
        target = ipv4_from_str("10.8.0.1")
        for i in range(count):
            out.append(PacketTuple(
                ts=anomaly.start + i * step, size=60,
                srcIP=anomaly.key, dstIP=target,
                srcPort=rng.randrange(1024, 60_000),
                dstPort=1 + i % anomaly.spread, proto=6))
    return out


def generate(spec: dict) -> tuple[list[PacketTuple], dict]:
    """Build the packet list and ground truth for one trace spec."""
    trace = spec.get("trace", {})
    seed = int(trace.get("seed", 0))
    duration = float(trace.get("duration", 60.0))
    rate = float(trace.get("background_rate", 100.0))
    if duration <= 0 or rate < 0:
        raise ConfigError("trace duration must be positive, rate nonnegative")
    background = spec.get("background", {})
    clients = _pool("172.16", int(background.get("clients", 40)))
    servers = _pool("10.0", int(background.get("servers", 8)))
    resolvers = _pool("8.8", int(background.get("resolvers", 6)))
    dns_fraction = float(background.get("dns_fraction", 0.3))

    rng = Random(seed)
    packets = []
    count = int(rate * duration)
    for i in range(count):
        ts = i / rate if rate else 0.0
        packets.append(_background_packet(ts, rng, clients, servers,
                                          resolvers, dns_fraction))
    anomalies = [_parse_anomaly(entry) for entry in spec.get("anomaly", [])]
    for anomaly in anomalies:
        if anomaly.start < 0 or anomaly.start + anomaly.duration > duration:
            raise ConfigError(
                f"anomaly window [{anomaly.start}, "
                f"{anomaly.start + anomaly.duration}) outside the trace")
        packets.extend(_anomaly_packets(anomaly, rng))
    packets.sort(key=lambda p: (p.ts, p.srcIP or 0, p.dstIP or 0,
                                p.srcPort or 0, p.dstPort or 0))
    truth = {
        "seed": seed,
        "duration": duration,
        "background_rate": rate,
        "anomalies": [{
            "kind": a.kind,
            "query": a.query,
            "key_field": a.key_field,
            "key": a.key,
            "start": a.start,
            "duration": a.duration,
            "rate": a.rate,
            "spread": a.spread,
        } for a in anomalies],
    }
    return packets, truth


def truth_text(truth: dict) -> str:
    """Stable serialization of the ground-truth sidecar."""
    return json.dumps(truth, indent=2, sort_keys=True) + "\n"
