"""Stock telemetry queries used by the samples, docs, and test suites.

Each builder returns query text so thresholds and window sizes stay
configurable; `standard_queries` concatenates all five in an order where
the join target precedes its consumer.
"""

from __future__ import annotations


def ddos_udp(threshold: int = 40, window: float = 1) -> str:
    """Hosts receiving UDP traffic from more than ``threshold`` sources."""
    return (
        f"ddosUdp = pktStream({window:g})\n"
        f"    .filter(proto == 17)\n"
        f"    .map(dstIP, srcIP)\n"
        f"    .distinct(key=(dstIP, srcIP))\n"
        f"    .map(dstIP, 1)\n"
        f"    .reduce(key=(dstIP), func=sum)\n"
        f"    .filter(count > {threshold})\n"
        f"    .map(dstIP)\n"
    )


def superspreader(threshold: int = 40, window: float = 1) -> str:
    """Hosts contacting more than ``threshold`` distinct destinations."""
    return (
        f"superSpreader = pktStream({window:g})\n"
        f"    .map(srcIP, dstIP)\n"
        f"    .distinct(key=(srcIP, dstIP))\n"
        f"    .map(srcIP, 1)\n"
        f"    .reduce(key=(srcIP), func=sum)\n"
        f"    .filter(count > {threshold})\n"
        f"    .map(srcIP)\n"
    )


def port_scan(threshold: int = 40, window: float = 1) -> str:
    """Hosts probing more than ``threshold`` distinct destination ports."""
    return (
        f"portScan = pktStream({window:g})\n"
        f"    .map(srcIP, dstPort)\n"
        f"    .distinct(key=(srcIP, dstPort))\n"
        f"    .map(srcIP, 1)\n"
        f"    .reduce(key=(srcIP), func=sum)\n"
        f"    .filter(count > {threshold})\n"
        f"    .map(srcIP)\n"
    )


def dns_victims(threshold: int = 40, window: float = 1) -> str:
    """Hosts receiving DNS responses from more than ``threshold`` resolvers."""
    return (
        f"dnsVictims = pktStream({window:g})\n"
        f"    .filter(srcPort == 53)\n"
        f"    .map(dstIP, srcIP)\n"
        f"    .distinct(key=(dstIP, srcIP))\n"
        f"    .map(dstIP, 1)\n"
        f"    .reduce(key=(dstIP), func=sum)\n"
        f"    .filter(count > {threshold})\n"
        f"    .map(dstIP)\n"
    )


def reflection_confirm(threshold: int = 20, window: float = 1) -> str:
    """Among current DNS victims, hosts swamped by signature-bearing answers.

    Joins against the victim query's previous window, so the returned text
    only validates alongside `dns_victims`.
    """
    return (
        f"reflectConfirm = pktStream({window:g})\n"
        f"    .filter(srcPort == 53)\n"
        f"    .filter(dstIP in dnsVictims)\n"
        f"    .filter(dns_rr_type == 46)\n"
        f"    .map(dstIP, 1)\n"
        f"    .reduce(key=(dstIP), func=sum)\n"
        f"    .filter(count > {threshold})\n"
        f"    .map(dstIP)\n"
    )


BUILDERS = {
    "ddosUdp": ddos_udp,
    "superSpreader": superspreader,
    "portScan": port_scan,
    "dnsVictims": dns_victims,
    "reflectConfirm": reflection_confirm,
}


def standard_queries(thresholds: dict[str, int] | None = None, window: float = 1) -> str:
    """All five stock queries as one query file."""
    thresholds = thresholds or {}
    parts = []
    for name, builder in BUILDERS.items():
        if name in thresholds:
            parts.append(builder(thresholds[name], window=window))
        else:
            parts.append(builder(window=window))
    return "\n".join(parts)
