import random
import struct

import pytest
from hypothesis import given, settings, strategies as st

from flowcast import ofwire
from flowcast.ofwire import (
    BadVersion,
    CodecError,
    EchoReply,
    FlowMod,
    FlowRemoved,
    Hello,
    MalformedOxm,
    MatchFields,
    NonIpv4,
    PacketIn,
    Truncated,
    TruncatedFrame,
    UnknownType,
    build_frame,
    decode_message,
    encode_message,
    exact_match,
    parse_frame,
)
from flowcast.records import FirstPacket, str_to_ip
from helpers_wire import random_message


def test_hello_encoding_is_exact():
    assert encode_message(Hello(xid=0)) == bytes.fromhex("0500000800000000")
    assert decode_message(bytes.fromhex("0500000800000001")) == Hello(xid=1)


def test_packet_in_capture_field_set():
    # 102-byte PACKET_IN: 8 header + 16 match (lone in_port OXM) + 2 pad + 60 frame
    msg = PacketIn(xid=0, total_len=60, reason=ofwire.OFPR_APPLY_ACTION,
                   table_id=0, cookie=0, match=MatchFields(in_port=1),
                   frame=b"\x00" * 60)
    wire = encode_message(msg)
    assert len(wire) == 102
    assert wire[:8] == bytes.fromhex("050A006600000000")
    assert struct.unpack_from("!I", wire, 8)[0] == ofwire.OFP_NO_BUFFER
    decoded = decode_message(wire)
    assert decoded == msg
    assert decoded.reason == 1 and decoded.table_id == 0


def test_truncated_header_length():
    with pytest.raises(Truncated):
        decode_message(bytes.fromhex("050A0004"))
    with pytest.raises(Truncated):
        decode_message(bytes.fromhex("050A000400000000"))


def test_bad_version():
    with pytest.raises(BadVersion):
        decode_message(bytes.fromhex("0400000800000000"))


def test_unknown_type():
    # ECHO-family neighbours we do not speak, e.g. FEATURES_REQUEST (5)
    with pytest.raises(UnknownType):
        decode_message(bytes.fromhex("0505000800000000"))


def test_echo_reply_empty_roundtrip():
    msg = EchoReply(xid=9, payload=b"")
    assert decode_message(encode_message(msg)) == msg


def test_flow_removed_roundtrip_counts():
    msg = FlowRemoved(xid=4, cookie=77, priority=10, reason=0, table_id=0,
                      duration_s=3, duration_ns=500, idle_timeout=10,
                      hard_timeout=30, packet_count=7, byte_count=4200,
                      match=MatchFields(eth_type=0x0800, ipv4_src=1, ipv4_dst=2,
                                        ip_proto=17, l4_src=53, l4_dst=53))
    decoded = decode_message(encode_message(msg))
    assert decoded == msg
    assert decoded.packet_count == 7


def test_every_message_starts_with_version_and_correct_length():
    rng = random.Random(5)
    for _ in range(200):
        wire = encode_message(random_message(rng))
        assert wire[0] == 0x05
        assert struct.unpack_from("!H", wire, 2)[0] == len(wire)


def test_oxm_encoding_deterministic_and_aligned():
    m = MatchFields(in_port=3, eth_type=0x0800, ipv4_src=9, ipv4_dst=8,
                    ip_proto=6, l4_src=80, l4_dst=443)
    a = encode_message(FlowRemoved(xid=0, cookie=0, priority=0, reason=0,
                                   table_id=0, duration_s=0, duration_ns=0,
                                   idle_timeout=0, hard_timeout=0,
                                   packet_count=0, byte_count=0, match=m))
    b = encode_message(FlowRemoved(xid=0, cookie=0, priority=0, reason=0,
                                   table_id=0, duration_s=0, duration_ns=0,
                                   idle_timeout=0, hard_timeout=0,
                                   packet_count=0, byte_count=0, match=m))
    assert a == b
    assert len(a) % 8 == 0  # fixed part is 48; match padded to 8


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**48))
def test_roundtrip_random_messages(seed):
    msg = random_message(random.Random(seed))
    assert decode_message(encode_message(msg)) == msg


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**48), st.data())
def test_truncation_fuzz_never_raises_uncontrolled(seed, data):
    wire = encode_message(random_message(random.Random(seed)))
    cut = data.draw(st.integers(0, len(wire) - 1))
    try:
        decode_message(wire[:cut])
    except CodecError:
        pass


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=200))
def test_garbage_decode_never_panics(blob):
    try:
        decode_message(blob)
    except CodecError:
        pass


def test_match_invariants_enforced():
    with pytest.raises(ValueError):
        MatchFields(ipv4_src=1)  # needs eth_type 0x0800
    with pytest.raises(ValueError):
        MatchFields(eth_type=0x0800, ip_proto=1, l4_src=80)  # l4 needs TCP/UDP
    with pytest.raises(ValueError):
        PacketIn(xid=0, total_len=0, reason=0, table_id=0, cookie=0,
                 match=MatchFields(), frame=b"", buffer_id=7)
    with pytest.raises(ValueError):
        FlowMod(xid=0, cookie=0, table_id=0, idle_timeout=0, hard_timeout=0,
                priority=0, flags=0, importance=1, match=MatchFields(),
                output_port=1, command=3)


def test_decode_rejects_masked_and_unknown_oxm():
    msg = FlowRemoved(xid=0, cookie=0, priority=0, reason=0, table_id=0,
                      duration_s=0, duration_ns=0, idle_timeout=0,
                      hard_timeout=0, packet_count=0, byte_count=0,
                      match=MatchFields(in_port=1))
    wire = bytearray(encode_message(msg))
    field_byte = 8 + 40 + 4 + 2  # header + fixed + match header + oxm class
    wire[field_byte] |= 1  # set the has-mask bit
    with pytest.raises(MalformedOxm):
        decode_message(bytes(wire))
    wire = bytearray(encode_message(msg))
    wire[field_byte] = 99 << 1  # unknown field id
    with pytest.raises(MalformedOxm):
        decode_message(bytes(wire))


def frame_packet(**kw):
    base = dict(src_ip=str_to_ip("192.168.2.46"), dst_ip=str_to_ip("192.168.1.46"),
                src_port=0, dst_port=0, proto=253, tos=0, ttl=64, first_len=60)
    base.update(kw)
    return FirstPacket(**base)


def test_parse_frame_non_l4_proto():
    pkt = frame_packet()
    got = parse_frame(build_frame(pkt))
    assert got == pkt
    assert got.proto == 253 and got.src_port == 0 and got.dst_port == 0


def test_parse_frame_udp_ports():
    pkt = frame_packet(proto=17, src_port=53, dst_port=5353, first_len=200)
    got = parse_frame(build_frame(pkt))
    assert got.src_port == 53 and got.dst_port == 5353


def test_parse_frame_non_ipv4():
    frame = bytearray(build_frame(frame_packet()))
    frame[12:14] = b"\x08\x06"  # ARP
    with pytest.raises(NonIpv4):
        parse_frame(bytes(frame))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32), st.data())
def test_parse_frame_truncation_fuzz(seed, data):
    rng = random.Random(seed)
    proto = rng.choice((6, 17, 1, 253))
    pkt = frame_packet(proto=proto, first_len=rng.randrange(40, 400),
                       src_port=rng.randrange(2**16) if proto in (6, 17) else 0,
                       dst_port=rng.randrange(2**16) if proto in (6, 17) else 0)
    frame = build_frame(pkt)
    cut = data.draw(st.integers(0, len(frame)))
    if cut == len(frame):
        assert parse_frame(frame) == pkt
        return
    try:
        parse_frame(frame[:cut])
    except (TruncatedFrame, NonIpv4):
        pass


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32))
def test_build_parse_frame_roundtrip(seed):
    rng = random.Random(seed)
    proto = rng.choice((6, 17, 1, 47, 253))
    l4 = proto in (6, 17)
    pkt = FirstPacket(src_ip=rng.randrange(2**32), dst_ip=rng.randrange(2**32),
                      src_port=rng.randrange(2**16) if l4 else 0,
                      dst_port=rng.randrange(2**16) if l4 else 0,
                      proto=proto, tos=rng.randrange(256), ttl=rng.randrange(256),
                      first_len=rng.randrange(40, 1501))
    assert parse_frame(build_frame(pkt)) == pkt


def test_exact_match_includes_l4_only_for_tcp_udp():
    tcp = exact_match(frame_packet(proto=6, src_port=1234, dst_port=80, first_len=60))
    assert tcp.l4_src == 1234 and tcp.l4_dst == 80
    other = exact_match(frame_packet(proto=253))
    assert other.l4_src is None and other.l4_dst is None
    assert other.eth_type == 0x0800
