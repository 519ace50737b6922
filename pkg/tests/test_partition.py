"""Partition support rules, cost profiling, and in-plane/stream equivalence."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sonata.corpus import standard_queries
from sonata.errors import UnsupportedPlanError
from sonata.fields import ipv4_from_str
from sonata.packets import PacketTuple
from sonata.partition import (CostPair, PartitionPlan, enumerate_partitions,
                              get_cost, is_supported, profile_costs)
from sonata.qlang import (parse_query, parse_query_file, validate,
                          validate_file)
from sonata.stream import execute_window, records_from_packets, run_suffix

POOL = [ipv4_from_str(f"10.0.{i}.{j}") for i in range(2) for j in range(1, 4)]
HOSTS = [ipv4_from_str(f"172.16.0.{j}") for j in range(1, 5)]


def vq_of(text, known=None):
    return validate(parse_query(text), known=known or {})


def corpus_queries(**thresholds):
    return validate_file(parse_query_file(standard_queries(thresholds=thresholds)))


def case(text, p, expected, sketch=False, known=None):
    assert is_supported(vq_of(text, known), p, sketch) is expected


def test_support_rules():
    case("q = pktStream(1).map(dstIP, 1).reduce(key=(dstIP), func=entropy)", 2, False)
    case("q = pktStream(1).map(dstIP, 1).reduce(key=(dstIP), func=entropy)", 1, True)
    case("q = pktStream(1).map(dns_qname -> /2).distinct(key=(dns_qname))", 1, False)
    case("q = pktStream(1).map(dstIP -> /8).distinct(key=(dstIP))", 2, True)
    chain = ("q = pktStream(1).map(dstIP, 1).reduce(key=(dstIP), func=sum)"
             ".filter(count {} 2).map(dstIP)")
    case(chain.format(">"), 4, True)
    case(chain.format(">="), 4, True)
    case(chain.format("<"), 3, False)
    case(chain.format("<"), 2, True)      # cut before the offending filter
    mins = ("q = pktStream(1).map(dstIP, size).reduce(key=(dstIP), func=min)"
            ".filter(min {} 9).map(dstIP)")
    case(mins.format("<"), 4, True)       # min only shrinks: < is closed
    case(mins.format(">"), 3, False)
    # aggregate dropped before the cut: the stream side cannot collapse
    case("q = pktStream(1).map(dstIP, 1).reduce(key=(dstIP), func=sum).map(count)",
         3, False)
    # stateful operator over running aggregates
    case("q = pktStream(1).map(dstIP, 1).reduce(key=(dstIP), func=sum)"
         ".distinct(key=(dstIP))", 3, False)
    case("q = pktStream(1).map(dstIP, 1).reduce(key=(dstIP), func=sum).sample(2)",
         3, False)
    case("q = pktStream(1).map(dstIP, 1).reduce(key=(dstIP), func=sum)"
         ".map(dstIP, 2).reduce(key=(dstIP), func=sum)", 4, False)


def test_support_rules_for_sketch_mode():
    case("q = pktStream(1).filter(srcPort == 53).map(dstIP)", 2, False, sketch=True)
    case("q = pktStream(1).map(dstIP, 1).reduce(key=(dstIP), func=sum)", 2, True,
         sketch=True)
    case("q = pktStream(1).map(dstIP, size).reduce(key=(dstIP), func=min)", 2,
         False, sketch=True)
    case("q = pktStream(1).map(dstIP).distinct(key=(dstIP))", 2, True, sketch=True)
    case("q = pktStream(1).map(dstIP)", 0, False, sketch=True)


def test_enumerate_partitions_on_victim_chain():
    vq = corpus_queries(dnsVictims=2)["dnsVictims"]
    plans = enumerate_partitions(vq)
    exact = [plan.p for plan in plans if not plan.sketch]
    sketched = [plan.p for plan in plans if plan.sketch]
    assert exact == list(range(8))
    assert sketched == [3, 4, 5, 6, 7]     # first stateful sits at index 2


def packets_strategy():
    def build(rows):
        t = 0.0
        out = []
        for src, dst, sport, rr, n in rows:
            for _ in range(max(1, n)):
                out.append(PacketTuple(ts=t, srcIP=src, dstIP=dst, srcPort=sport,
                                       dstPort=1000, proto=17, size=64,
                                       dns_rr_type=rr))
                t += 0.0003
        return out
    row = st.tuples(st.sampled_from(HOSTS), st.sampled_from(POOL),
                    st.sampled_from([53, 1000]), st.sampled_from([46, 1]),
                    st.integers(min_value=1, max_value=4))
    return st.lists(row, min_size=1, max_size=25).map(build)


@settings(max_examples=40, deadline=None)
@given(packets_strategy(), st.sampled_from(["ddosUdp", "superSpreader",
                                            "portScan", "dnsVictims"]))
def test_partitioned_equals_pure_stream(packets, name):
    vq = corpus_queries(**{name: 2})[name]
    records = records_from_packets(packets)
    pure = execute_window(vq, records).outputs
    plans = [plan for plan in enumerate_partitions(vq) if not plan.sketch]
    deepest = max(plan.p for plan in plans)
    from sonata.pisa import InstalledQuery, PisaSwitch
    switch = PisaSwitch([InstalledQuery(name, vq, deepest)])
    _, captures = switch.process_window(records, capture=True)
    for plan in plans:
        suffix = run_suffix(vq, plan.p, captures[name][plan.p])
        assert suffix.outputs == pure, f"p={plan.p}"


@settings(max_examples=25, deadline=None)
@given(packets_strategy(),
       st.sets(st.sampled_from(POOL), min_size=1, max_size=3))
def test_partitioned_join_query_equals_pure_stream(packets, victims):
    queries = corpus_queries(reflectConfirm=1)
    vq = queries["reflectConfirm"]
    joined = frozenset(victims)
    records = records_from_packets(packets)
    pure = execute_window(vq, records, joined=joined).outputs
    from sonata.pisa import InstalledQuery, PisaSwitch
    for plan in enumerate_partitions(vq):
        if plan.sketch:
            continue
        switch = PisaSwitch([InstalledQuery(vq.name, vq, plan.p)])
        if plan.p >= 2:
            switch.install_filter_entries(vq.name, set(victims), table="join")
        _, captures = switch.process_window(records, capture=True)
        suffix = run_suffix(vq, plan.p, captures[vq.name][plan.p], joined=joined)
        assert suffix.outputs == pure, f"p={plan.p}"


def window(counts):
    t, out = 0.0, []
    for dst, n in counts:
        for i in range(n):
            out.append(PacketTuple(ts=t, srcIP=HOSTS[i % len(HOSTS)], dstIP=dst,
                                   srcPort=53, size=64))
            t += 0.001
    return records_from_packets(out)


def test_profile_costs_all_depths_one_pass():
    vq = corpus_queries(dnsVictims=2)["dnsVictims"]
    records = window([(POOL[0], 6), (POOL[1], 2)])
    plans = enumerate_partitions(vq)
    costs = profile_costs(vq, records, plans, n_max=100, b_max=10_000)
    assert set(costs) == set(plans)
    for plan, pair in costs.items():
        solo = get_cost(vq, records=records, plan=plan, n_max=100, b_max=10_000)
        assert solo == pair
    exact = {plan.p: costs[plan] for plan in plans if not plan.sketch}
    assert exact[0] == CostPair(8, 0, 0.08, 0.0)
    raw_n = [exact[p].n_raw for p in range(8)]
    raw_b = [exact[p].b_raw for p in range(8)]
    assert raw_n == sorted(raw_n, reverse=True)
    assert raw_b == sorted(raw_b)
    assert raw_b[1] > 0                    # report bit appears at p >= 1


def test_profile_rejects_unsupported_plan():
    vq = vq_of("q = pktStream(1).map(dstIP, 1).reduce(key=(dstIP), func=entropy)")
    with pytest.raises(UnsupportedPlanError):
        profile_costs(vq, window([(POOL[0], 2)]), [PartitionPlan(2)],
                      n_max=10, b_max=10)


def test_sketched_costs_trade_bits_for_tuples():
    vq = corpus_queries(superSpreader=2)["superSpreader"]
    records = window([(POOL[0], 40), (POOL[1], 40)])
    full = vq.num_operators
    costs = profile_costs(vq, records, [PartitionPlan(full, sketch=False),
                                        PartitionPlan(full, sketch=True)],
                          n_max=1000, b_max=10**6)
    exact, sk = costs[PartitionPlan(full)], costs[PartitionPlan(full, True)]
    assert sk.b_raw > exact.b_raw          # fixed geometry dwarfs tiny stores
    # bloom distinct + count-min reduce + threshold pair + report bit
    assert sk.b_raw == 272 + 272 * 5 * 32 + 2 * 32 + 1
