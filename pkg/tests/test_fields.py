"""Masking algebra and address formatting."""

from hypothesis import given
from hypothesis import strategies as st

from sonata.fields import (field_bits, ipv4_from_str, ipv4_to_str, mask_domain,
                           mask_ipv4, mask_value)

ipv4_values = st.integers(min_value=0, max_value=0xFFFFFFFF)
ipv4_levels = st.integers(min_value=0, max_value=32)


def test_ipv4_prefix_masking():
    addr = ipv4_from_str("192.168.17.9")
    assert ipv4_to_str(mask_ipv4(addr, 8)) == "192.0.0.0"
    assert ipv4_to_str(mask_ipv4(addr, 16)) == "192.168.0.0"
    assert ipv4_to_str(mask_ipv4(addr, 24)) == "192.168.17.0"
    assert mask_ipv4(addr, 32) == addr
    assert mask_ipv4(addr, 0) == 0


def test_domain_suffix_masking():
    assert mask_domain("a.b.example.com", 2) == "example.com"
    assert mask_domain("a.b.example.com", 1) == "com"
    assert mask_domain("a.b.example.com", 0) == "."
    assert mask_domain("a.b.example.com", 4) == "a.b.example.com"
    assert mask_domain("a.b.example.com", 9) == "a.b.example.com"


@given(ipv4_values, ipv4_levels)
def test_ipv4_mask_idempotent(value, level):
    once = mask_ipv4(value, level)
    assert mask_ipv4(once, level) == once


@given(ipv4_values, ipv4_levels, ipv4_levels)
def test_ipv4_mask_monotone(value, a, b):
    coarse, fine = min(a, b), max(a, b)
    assert mask_ipv4(mask_ipv4(value, fine), coarse) == mask_ipv4(value, coarse)


domain_names = st.lists(
    st.text(alphabet="abcxyz", min_size=1, max_size=4), min_size=1, max_size=5
).map(".".join)


@given(domain_names, st.integers(min_value=0, max_value=6),
       st.integers(min_value=0, max_value=6))
def test_domain_mask_monotone(name, a, b):
    coarse, fine = min(a, b), max(a, b)
    assert mask_domain(mask_domain(name, fine), coarse) == mask_domain(name, coarse)


@given(ipv4_values)
def test_ipv4_text_round_trip(value):
    assert ipv4_from_str(ipv4_to_str(value)) == value


def test_mask_value_dispatch():
    assert mask_value(ipv4_from_str("10.1.2.3"), "dstIP", 8) == ipv4_from_str("10.0.0.0")
    assert mask_value("a.example.com", "dns_qname", 2) == "example.com"
    # native level is the identity
    assert mask_value("a.example.com", "dns_qname", None) == "a.example.com"


def test_mask_value_rejects_flat_fields():
    import pytest
    with pytest.raises(ValueError):
        mask_value(53, "srcPort", 8)


def test_field_widths():
    assert field_bits("srcIP") == 32
    assert field_bits("proto") == 8
    assert field_bits("srcPort") == 16
    assert field_bits("some_int_metadata") == 32
