"""Trace parsing and window partitioning."""

import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sonata.errors import TraceFormatError
from sonata.fields import ipv4_from_str
from sonata.packets import (PacketTuple, parse_trace, window_partition, write_trace)


def test_parse_typed_header():
    text = "ts:float,srcIP:ipv4,dstIP:ipv4,srcPort:u16,proto:u8\n" \
           "0.5,10.0.0.1,10.0.0.2,53,17\n"
    pkts = parse_trace(io.StringIO(text))
    assert len(pkts) == 1
    pkt = pkts[0]
    assert pkt.ts == 0.5
    assert pkt.srcIP == ipv4_from_str("10.0.0.1")
    assert pkt.srcPort == 53
    assert pkt.proto == 17
    # omitted columns are defaulted or absent
    assert pkt.size == 1
    assert pkt.locationID == 0
    assert pkt.dns_qname is None


def test_parse_bare_header_uses_registered_types():
    text = "ts,srcIP,dstIP,srcPort,proto\n0.5,10.0.0.1,10.0.0.2,53,17\n"
    pkts = parse_trace(io.StringIO(text))
    assert pkts[0].dstIP == ipv4_from_str("10.0.0.2")


def test_absent_optional_cells_are_none():
    text = "ts:float,srcIP:ipv4,dns_rr_type:u16\n1.0,10.0.0.1,\n1.5,,46\n"
    pkts = parse_trace(io.StringIO(text))
    assert pkts[0].dns_rr_type is None
    assert pkts[1].srcIP is None
    assert pkts[1].dns_rr_type == 46


def test_extension_columns_need_annotation():
    with pytest.raises(TraceFormatError):
        parse_trace(io.StringIO("ts,queue_depth\n1.0,5\n"))
    pkts = parse_trace(io.StringIO("ts:float,queue_depth:u32\n1.0,5\n"))
    assert pkts[0].get("queue_depth") == 5


def test_schema_rejects_unlisted_columns():
    text = "ts,srcIP\n1.0,10.0.0.1\n"
    with pytest.raises(TraceFormatError):
        parse_trace(io.StringIO(text), schema=["ts"])


def test_mismatched_type_annotation_rejected():
    with pytest.raises(TraceFormatError):
        parse_trace(io.StringIO("ts:float,srcIP:u16\n1.0,5\n"))


def test_decreasing_ts_rejected():
    text = "ts\n2.0\n1.0\n"
    with pytest.raises(TraceFormatError) as err:
        parse_trace(io.StringIO(text))
    assert err.value.line == 3


def test_equal_ts_allowed():
    pkts = parse_trace(io.StringIO("ts\n1.0\n1.0\n"))
    assert len(pkts) == 2


def test_value_range_checks():
    with pytest.raises(TraceFormatError):
        parse_trace(io.StringIO("ts,proto\n1.0,300\n"))
    with pytest.raises(TraceFormatError):
        parse_trace(io.StringIO("ts,srcPort\n1.0,70000\n"))


def test_round_trip_write_parse():
    pkts = [
        PacketTuple(ts=0.25, srcIP=ipv4_from_str("10.0.0.1"), srcPort=53, proto=17),
        PacketTuple(ts=1.5, dstIP=ipv4_from_str("10.0.0.9"), dns_rr_type=46),
    ]
    buf = io.StringIO()
    write_trace(pkts, buf)
    back = parse_trace(io.StringIO(buf.getvalue()))
    assert len(back) == 2
    assert back[0].srcIP == pkts[0].srcIP
    assert back[1].dns_rr_type == 46
    assert back[1].srcIP is None


def test_window_partition_emits_gaps():
    pkts = [PacketTuple(ts=2.5)]
    windows = window_partition(pkts, 1.0, origin=0.0)
    assert [len(w) for w in windows] == [0, 0, 1]
    assert [w.start for w in windows] == [0.0, 1.0, 2.0]


def test_window_origin_floors_first_ts():
    pkts = [PacketTuple(ts=3.7), PacketTuple(ts=4.2)]
    windows = window_partition(pkts, 1.0)
    assert windows[0].start == 3.0
    assert [len(w) for w in windows] == [1, 1]


def test_window_boundary_is_half_open():
    pkts = [PacketTuple(ts=1.0), PacketTuple(ts=2.0)]
    windows = window_partition(pkts, 1.0, origin=1.0)
    assert [len(w) for w in windows] == [1, 1]


@given(st.lists(st.floats(min_value=0, max_value=50, allow_nan=False), min_size=1, max_size=60),
       st.sampled_from([0.5, 1.0, 2.0]))
def test_window_partition_conserves_packets(ts_values, duration):
    pkts = [PacketTuple(ts=t) for t in sorted(ts_values)]
    windows = window_partition(pkts, duration)
    regrouped = [p for w in windows for p in w.packets]
    assert sorted(p.ts for p in regrouped) == sorted(p.ts for p in pkts)
    for window in windows:
        for pkt in window.packets:
            assert window.start <= pkt.ts < window.start + window.duration


def test_packet_invariants():
    with pytest.raises(ValueError):
        PacketTuple(ts=-1.0)
    with pytest.raises(ValueError):
        PacketTuple(ts=0.0, size=0)
    with pytest.raises(ValueError):
        PacketTuple(ts=0.0, srcPort=0x10000)
