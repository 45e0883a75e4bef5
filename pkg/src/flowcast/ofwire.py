"""OpenFlow 1.4 (wire version 0x05) codec for the message subset a
prediction-driven controller needs, plus the Ethernet/IPv4 first-packet
parser and builder.

Supported types: HELLO, ERROR, ECHO_REQUEST, ECHO_REPLY, PACKET_IN,
FLOW_REMOVED, FLOW_MOD.  All multibyte fields are big-endian; match fields
serialize as OpenFlow-basic OXM TLVs sorted by field id and padded to
8-byte alignment, so encoding is deterministic.  Controllers run NO_BUFFER
only and FLOW_MOD carries a single APPLY_ACTIONS/OUTPUT instruction.
"""

import struct
from dataclasses import dataclass

from .records import FirstPacket

OFP_VERSION = 0x05
OFP_DEFAULT_PORT = 6653
OFP_HEADER_LEN = 8

OFPT_HELLO = 0
OFPT_ERROR = 1
OFPT_ECHO_REQUEST = 2
OFPT_ECHO_REPLY = 3
OFPT_PACKET_IN = 10
OFPT_FLOW_REMOVED = 11
OFPT_FLOW_MOD = 14

OFP_NO_BUFFER = 0xFFFFFFFF
OFPP_ANY = 0xFFFFFFFF
OFPG_ANY = 0xFFFFFFFF
OFPFC_ADD = 0
OFPFF_SEND_FLOW_REM = 1 << 0
OFPCML_NO_BUFFER = 0xFFFF

OFPR_TABLE_MISS = 0
OFPR_APPLY_ACTION = 1

OFPRR_IDLE_TIMEOUT = 0
OFPRR_HARD_TIMEOUT = 1
OFPRR_DELETE = 2
OFPRR_EVICTION = 5

OFPET_BAD_REQUEST = 1
OFPBRC_BAD_VERSION = 0
OFPBRC_BAD_TYPE = 1

OFPMT_OXM = 1
OXM_CLASS_BASIC = 0x8000
OXM_IN_PORT = 0
OXM_ETH_TYPE = 5
OXM_IP_PROTO = 10
OXM_IPV4_SRC = 11
OXM_IPV4_DST = 12
OXM_TCP_SRC = 13
OXM_TCP_DST = 14
OXM_UDP_SRC = 15
OXM_UDP_DST = 16

OFPIT_APPLY_ACTIONS = 4
OFPAT_OUTPUT = 0

ETH_TYPE_IPV4 = 0x0800
PROTO_TCP = 6
PROTO_UDP = 17


class CodecError(Exception):
    """Base for wire-format failures."""


class BadVersion(CodecError):
    pass


class UnknownType(CodecError):
    pass


class Truncated(CodecError):
    pass


class MalformedOxm(CodecError):
    """Malformed OXM/TLV region or invariant-violating field content."""


class NonIpv4(CodecError):
    pass


class TruncatedFrame(CodecError):
    pass


def _check_u(name, value, bits):
    if not 0 <= value < (1 << bits):
        raise ValueError(f"{name} out of u{bits} range: {value}")


@dataclass(frozen=True)
class MatchFields:
    """Exact-match criteria; None means wildcard."""

    in_port: int = None
    eth_type: int = None
    ipv4_src: int = None
    ipv4_dst: int = None
    ip_proto: int = None
    l4_src: int = None
    l4_dst: int = None

    def __post_init__(self):
        if self.in_port is not None:
            _check_u("in_port", self.in_port, 32)
        if self.eth_type is not None:
            _check_u("eth_type", self.eth_type, 16)
        if self.ip_proto is not None:
            _check_u("ip_proto", self.ip_proto, 8)
        for name in ("ipv4_src", "ipv4_dst"):
            v = getattr(self, name)
            if v is not None:
                _check_u(name, v, 32)
                if self.eth_type != ETH_TYPE_IPV4:
                    raise ValueError(f"{name} requires eth_type 0x0800")
        for name in ("l4_src", "l4_dst"):
            v = getattr(self, name)
            if v is not None:
                _check_u(name, v, 16)
                if self.ip_proto not in (PROTO_TCP, PROTO_UDP):
                    raise ValueError(f"{name} requires ip_proto TCP or UDP")

    def matches_packet(self, pkt: FirstPacket, in_port) -> bool:
        if self.in_port is not None and self.in_port != in_port:
            return False
        if self.eth_type is not None and self.eth_type != ETH_TYPE_IPV4:
            return False  # every parsed first packet here is IPv4
        if self.ipv4_src is not None and self.ipv4_src != pkt.src_ip:
            return False
        if self.ipv4_dst is not None and self.ipv4_dst != pkt.dst_ip:
            return False
        if self.ip_proto is not None and self.ip_proto != pkt.proto:
            return False
        if self.l4_src is not None and self.l4_src != pkt.src_port:
            return False
        if self.l4_dst is not None and self.l4_dst != pkt.dst_port:
            return False
        return True


def exact_match(pkt: FirstPacket, in_port=None) -> MatchFields:
    """Exact 5-tuple match for a parsed first packet."""
    l4 = pkt.proto in (PROTO_TCP, PROTO_UDP)
    return MatchFields(
        in_port=in_port,
        eth_type=ETH_TYPE_IPV4,
        ipv4_src=pkt.src_ip,
        ipv4_dst=pkt.dst_ip,
        ip_proto=pkt.proto,
        l4_src=pkt.src_port if l4 else None,
        l4_dst=pkt.dst_port if l4 else None,
    )


@dataclass(frozen=True)
class Hello:
    xid: int = 0


@dataclass(frozen=True)
class EchoRequest:
    xid: int = 0
    payload: bytes = b""


@dataclass(frozen=True)
class EchoReply:
    xid: int = 0
    payload: bytes = b""


@dataclass(frozen=True)
class ErrorMsg:
    xid: int = 0
    err_type: int = OFPET_BAD_REQUEST
    code: int = OFPBRC_BAD_TYPE
    data: bytes = b""


@dataclass(frozen=True)
class PacketIn:
    xid: int
    total_len: int
    reason: int
    table_id: int
    cookie: int
    match: MatchFields
    frame: bytes
    buffer_id: int = OFP_NO_BUFFER

    def __post_init__(self):
        if self.buffer_id != OFP_NO_BUFFER:
            raise ValueError("only NO_BUFFER operation is supported")


@dataclass(frozen=True)
class FlowMod:
    xid: int
    cookie: int
    table_id: int
    idle_timeout: int
    hard_timeout: int
    priority: int
    flags: int
    importance: int
    match: MatchFields
    output_port: int
    command: int = OFPFC_ADD
    buffer_id: int = OFP_NO_BUFFER

    def __post_init__(self):
        if self.command != OFPFC_ADD:
            raise ValueError("only ADD flow-mods are supported")
        if self.buffer_id != OFP_NO_BUFFER:
            raise ValueError("only NO_BUFFER operation is supported")


@dataclass(frozen=True)
class FlowRemoved:
    xid: int
    cookie: int
    priority: int
    reason: int
    table_id: int
    duration_s: int
    duration_ns: int
    idle_timeout: int
    hard_timeout: int
    packet_count: int
    byte_count: int
    match: MatchFields


# (field id, attribute, struct format) sorted by field id; l4 ids depend on proto
_OXM_FIXED = (
    (OXM_IN_PORT, "in_port", "!I"),
    (OXM_ETH_TYPE, "eth_type", "!H"),
    (OXM_IP_PROTO, "ip_proto", "!B"),
    (OXM_IPV4_SRC, "ipv4_src", "!I"),
    (OXM_IPV4_DST, "ipv4_dst", "!I"),
)
_OXM_DECODE = {
    OXM_IN_PORT: ("in_port", "!I"),
    OXM_ETH_TYPE: ("eth_type", "!H"),
    OXM_IP_PROTO: ("ip_proto", "!B"),
    OXM_IPV4_SRC: ("ipv4_src", "!I"),
    OXM_IPV4_DST: ("ipv4_dst", "!I"),
    OXM_TCP_SRC: ("l4_src", "!H"),
    OXM_TCP_DST: ("l4_dst", "!H"),
    OXM_UDP_SRC: ("l4_src", "!H"),
    OXM_UDP_DST: ("l4_dst", "!H"),
}


def _encode_match(match: MatchFields) -> bytes:
    tlvs = b""
    fields = list(_OXM_FIXED)
    if match.l4_src is not None or match.l4_dst is not None:
        if match.ip_proto == PROTO_TCP:
            fields += [(OXM_TCP_SRC, "l4_src", "!H"), (OXM_TCP_DST, "l4_dst", "!H")]
        else:
            fields += [(OXM_UDP_SRC, "l4_src", "!H"), (OXM_UDP_DST, "l4_dst", "!H")]
    for oxm_id, attr, fmt in fields:
        value = getattr(match, attr)
        if value is None:
            continue
        payload = struct.pack(fmt, value)
        tlvs += struct.pack("!HBB", OXM_CLASS_BASIC, oxm_id << 1, len(payload)) + payload
    length = 4 + len(tlvs)
    pad = (-length) % 8
    return struct.pack("!HH", OFPMT_OXM, length) + tlvs + b"\x00" * pad


def _decode_match(buf: bytes, offset: int):
    """(MatchFields, offset past padding).  Raises on anything irregular."""
    if offset + 4 > len(buf):
        raise Truncated("match header past end of message")
    match_type, length = struct.unpack_from("!HH", buf, offset)
    if match_type != OFPMT_OXM:
        raise MalformedOxm(f"unsupported match type {match_type}")
    if length < 4 or offset + length > len(buf):
        raise Truncated("match body past end of message")
    end = offset + length
    pos = offset + 4
    seen = {}
    while pos < end:
        if pos + 4 > end:
            raise MalformedOxm("dangling OXM header")
        oxm_class, field_hm, size = struct.unpack_from("!HBB", buf, pos)
        pos += 4
        if oxm_class != OXM_CLASS_BASIC:
            raise MalformedOxm(f"unsupported OXM class 0x{oxm_class:04x}")
        if field_hm & 1:
            raise MalformedOxm("OXM masks are not supported")
        oxm_id = field_hm >> 1
        if oxm_id not in _OXM_DECODE:
            raise MalformedOxm(f"unsupported OXM field {oxm_id}")
        attr, fmt = _OXM_DECODE[oxm_id]
        if size != struct.calcsize(fmt):
            raise MalformedOxm(f"bad OXM length {size} for field {oxm_id}")
        if pos + size > end:
            raise MalformedOxm("OXM value past match end")
        if attr in seen:
            raise MalformedOxm(f"duplicate OXM field {attr}")
        seen[attr] = struct.unpack_from(fmt, buf, pos)[0]
        pos += size
    aligned_end = offset + length + ((-length) % 8)
    if aligned_end > len(buf):
        raise Truncated("match padding past end of message")
    try:
        return MatchFields(**seen), aligned_end
    except ValueError as exc:
        raise MalformedOxm(str(exc)) from exc


def _encode_instructions(output_port: int) -> bytes:
    action = struct.pack("!HHIH6x", OFPAT_OUTPUT, 16, output_port, OFPCML_NO_BUFFER)
    return struct.pack("!HH4x", OFPIT_APPLY_ACTIONS, 8 + len(action)) + action


def _decode_instructions(buf: bytes, offset: int, end: int) -> int:
    """Output port of the single APPLY_ACTIONS/OUTPUT block."""
    if end - offset != 24:
        raise MalformedOxm(f"expected one 24-byte instruction block, got {end - offset}")
    itype, ilen = struct.unpack_from("!HH", buf, offset)
    if itype != OFPIT_APPLY_ACTIONS or ilen != 24:
        raise MalformedOxm(f"unsupported instruction {itype}/{ilen}")
    atype, alen, port, _ = struct.unpack_from("!HHIH", buf, offset + 8)
    if atype != OFPAT_OUTPUT or alen != 16:
        raise MalformedOxm(f"unsupported action {atype}/{alen}")
    return port


def encode_message(msg) -> bytes:
    """Serialize a message; the header length field is computed here."""
    if isinstance(msg, Hello):
        msg_type, body = OFPT_HELLO, b""
    elif isinstance(msg, EchoRequest):
        msg_type, body = OFPT_ECHO_REQUEST, msg.payload
    elif isinstance(msg, EchoReply):
        msg_type, body = OFPT_ECHO_REPLY, msg.payload
    elif isinstance(msg, ErrorMsg):
        msg_type = OFPT_ERROR
        body = struct.pack("!HH", msg.err_type, msg.code) + msg.data
    elif isinstance(msg, PacketIn):
        msg_type = OFPT_PACKET_IN
        body = (struct.pack("!IHBBQ", msg.buffer_id, msg.total_len, msg.reason,
                            msg.table_id, msg.cookie)
                + _encode_match(msg.match) + b"\x00\x00" + msg.frame)
    elif isinstance(msg, FlowMod):
        msg_type = OFPT_FLOW_MOD
        body = (struct.pack("!QQBBHHHIIIHH", msg.cookie, 0, msg.table_id, msg.command,
                            msg.idle_timeout, msg.hard_timeout, msg.priority,
                            msg.buffer_id, OFPP_ANY, OFPG_ANY, msg.flags, msg.importance)
                + _encode_match(msg.match) + _encode_instructions(msg.output_port))
    elif isinstance(msg, FlowRemoved):
        msg_type = OFPT_FLOW_REMOVED
        body = (struct.pack("!QHBBIIHHQQ", msg.cookie, msg.priority, msg.reason,
                            msg.table_id, msg.duration_s, msg.duration_ns,
                            msg.idle_timeout, msg.hard_timeout,
                            msg.packet_count, msg.byte_count)
                + _encode_match(msg.match))
    else:
        raise TypeError(f"not an OpenFlow message: {type(msg).__name__}")
    length = OFP_HEADER_LEN + len(body)
    if length > 0xFFFF:
        raise ValueError(f"message too long for u16 length: {length}")
    return struct.pack("!BBHI", OFP_VERSION, msg_type, length, msg.xid) + body


def decode_header(data: bytes):
    """(version, type, length, xid) of the leading header."""
    if len(data) < OFP_HEADER_LEN:
        raise Truncated(f"need {OFP_HEADER_LEN} header bytes, have {len(data)}")
    return struct.unpack_from("!BBHI", data, 0)


def decode_message(data: bytes):
    """Parse one message from data; data must hold at least header.length bytes."""
    version, msg_type, length, xid = decode_header(data)
    if version != OFP_VERSION:
        raise BadVersion(f"version 0x{version:02x} != 0x{OFP_VERSION:02x}")
    if length < OFP_HEADER_LEN:
        raise Truncated(f"header length {length} below minimum")
    if length > len(data):
        raise Truncated(f"header length {length} exceeds buffer {len(data)}")
    try:
        return _decode_body(data[:length], msg_type, xid)
    except struct.error as exc:
        raise Truncated(str(exc)) from exc


def _decode_body(data: bytes, msg_type: int, xid: int):
    body = data[OFP_HEADER_LEN:]
    if msg_type == OFPT_HELLO:
        return Hello(xid=xid)  # optional hello elements are ignored
    if msg_type == OFPT_ECHO_REQUEST:
        return EchoRequest(xid=xid, payload=body)
    if msg_type == OFPT_ECHO_REPLY:
        return EchoReply(xid=xid, payload=body)
    if msg_type == OFPT_ERROR:
        if len(body) < 4:
            raise Truncated("error body below 4 bytes")
        err_type, code = struct.unpack_from("!HH", body, 0)
        return ErrorMsg(xid=xid, err_type=err_type, code=code, data=body[4:])
    if msg_type == OFPT_PACKET_IN:
        if len(body) < 16:
            raise Truncated("packet-in body below 16 bytes")
        buffer_id, total_len, reason, table_id, cookie = struct.unpack_from("!IHBBQ", body, 0)
        match, pos = _decode_match(body, 16)
        if pos + 2 > len(body):
            raise Truncated("packet-in pad past end of message")
        try:
            return PacketIn(xid=xid, buffer_id=buffer_id, total_len=total_len,
                            reason=reason, table_id=table_id, cookie=cookie,
                            match=match, frame=body[pos + 2:])
        except ValueError as exc:
            raise MalformedOxm(str(exc)) from exc
    if msg_type == OFPT_FLOW_MOD:
        if len(body) < 40:
            raise Truncated("flow-mod body below 40 bytes")
        (cookie, _cookie_mask, table_id, command, idle_timeout, hard_timeout,
         priority, buffer_id, _out_port, _out_group, flags,
         importance) = struct.unpack_from("!QQBBHHHIIIHH", body, 0)
        match, pos = _decode_match(body, 40)
        output_port = _decode_instructions(body, pos, len(body))
        try:
            return FlowMod(xid=xid, cookie=cookie, table_id=table_id, command=command,
                           idle_timeout=idle_timeout, hard_timeout=hard_timeout,
                           priority=priority, buffer_id=buffer_id, flags=flags,
                           importance=importance, match=match, output_port=output_port)
        except ValueError as exc:
            raise MalformedOxm(str(exc)) from exc
    if msg_type == OFPT_FLOW_REMOVED:
        if len(body) < 40:
            raise Truncated("flow-removed body below 40 bytes")
        (cookie, priority, reason, table_id, duration_s, duration_ns,
         idle_timeout, hard_timeout, packet_count,
         byte_count) = struct.unpack_from("!QHBBIIHHQQ", body, 0)
        match, _ = _decode_match(body, 40)
        return FlowRemoved(xid=xid, cookie=cookie, priority=priority, reason=reason,
                           table_id=table_id, duration_s=duration_s,
                           duration_ns=duration_ns, idle_timeout=idle_timeout,
                           hard_timeout=hard_timeout, packet_count=packet_count,
                           byte_count=byte_count, match=match)
    raise UnknownType(f"unsupported message type {msg_type}")


# --- Ethernet/IPv4 first-packet frames ---------------------------------

_DEFAULT_SRC_MAC = bytes.fromhex("525400000002")
_DEFAULT_DST_MAC = bytes.fromhex("525400000001")


def _ipv4_checksum(header: bytes) -> int:
    total = 0
    for i in range(0, len(header), 2):
        total += (header[i] << 8) | header[i + 1]
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def parse_frame(frame: bytes) -> FirstPacket:
    """Extract first-packet header fields from an Ethernet II IPv4 frame.

    Ports are 0 unless the protocol is TCP or UDP.  The frame carries no
    timestamp, so arrival_us is 0.
    """
    if len(frame) < 14:
        raise TruncatedFrame(f"frame of {len(frame)} bytes lacks an Ethernet header")
    eth_type = struct.unpack_from("!H", frame, 12)[0]
    if eth_type != ETH_TYPE_IPV4:
        raise NonIpv4(f"unsupported ethertype 0x{eth_type:04x}")
    if len(frame) < 34:
        raise TruncatedFrame("frame too short for an IPv4 header")
    ver_ihl, tos = struct.unpack_from("!BB", frame, 14)
    if ver_ihl >> 4 != 4:
        raise NonIpv4(f"IP version {ver_ihl >> 4}")
    ihl = (ver_ihl & 0x0F) * 4
    if ihl < 20:
        raise TruncatedFrame(f"bad IHL {ihl}")
    total_len = struct.unpack_from("!H", frame, 16)[0]
    if total_len < 20:
        raise TruncatedFrame(f"IP total length {total_len} below header size")
    ttl, proto = struct.unpack_from("!BB", frame, 22)
    src_ip, dst_ip = struct.unpack_from("!II", frame, 26)
    if len(frame) < 14 + ihl:
        raise TruncatedFrame("frame too short for IP options")
    src_port = dst_port = 0
    if proto in (PROTO_TCP, PROTO_UDP):
        l4 = 14 + ihl
        if len(frame) < l4 + 4:
            raise TruncatedFrame("frame too short for L4 ports")
        src_port, dst_port = struct.unpack_from("!HH", frame, l4)
    return FirstPacket(src_ip=src_ip, dst_ip=dst_ip, src_port=src_port,
                       dst_port=dst_port, proto=proto, tos=tos, ttl=ttl,
                       first_len=total_len)


def build_frame(pkt: FirstPacket, src_mac=_DEFAULT_SRC_MAC,
                dst_mac=_DEFAULT_DST_MAC) -> bytes:
    """Synthesize the Ethernet II frame a first packet would arrive in.

    The frame is 14 + first_len bytes with a zero-filled payload; TCP/UDP
    packets carry a minimal L4 header so that parse_frame inverts this.
    """
    min_len = {PROTO_TCP: 40, PROTO_UDP: 28}.get(pkt.proto, 20)
    if pkt.first_len < min_len:
        raise ValueError(f"first_len {pkt.first_len} too small for proto {pkt.proto}")
    ip = struct.pack("!BBHHHBBHII", 0x45, pkt.tos, pkt.first_len, 0, 0,
                     pkt.ttl, pkt.proto, 0, pkt.src_ip, pkt.dst_ip)
    ip = ip[:10] + struct.pack("!H", _ipv4_checksum(ip)) + ip[12:]
    if pkt.proto == PROTO_TCP:
        l4 = struct.pack("!HHIIBB3H", pkt.src_port, pkt.dst_port, 0, 0, 0x50, 0, 0, 0, 0)
    elif pkt.proto == PROTO_UDP:
        l4 = struct.pack("!HHHH", pkt.src_port, pkt.dst_port, pkt.first_len - 20, 0)
    else:
        l4 = b""
    payload = b"\x00" * (pkt.first_len - 20 - len(l4))
    return dst_mac + src_mac + struct.pack("!H", ETH_TYPE_IPV4) + ip + l4 + payload
