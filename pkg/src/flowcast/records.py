"""Domain records shared across the package: first packets and completed flows."""

import ipaddress
from dataclasses import dataclass


def ip_to_str(ip: int) -> str:
    return str(ipaddress.IPv4Address(ip))


def str_to_ip(s: str) -> int:
    return int(ipaddress.IPv4Address(s))


@dataclass(frozen=True)
class FirstPacket:
    """Header fields observed on the first packet of a flow.

    IPs are unsigned 32-bit ints, ports unsigned 16-bit (0 for non-TCP/UDP),
    arrival_us is microseconds since trace start (0 when parsed off the wire,
    which carries no timestamp).
    """

    src_ip: int
    dst_ip: int
    src_port: int
    dst_port: int
    proto: int
    tos: int
    ttl: int
    first_len: int
    arrival_us: int = 0

    def __post_init__(self):
        for name in ("proto", "tos", "ttl"):
            v = getattr(self, name)
            if not 0 <= v <= 255:
                raise ValueError(f"{name} out of byte range: {v}")
        for name in ("src_port", "dst_port"):
            v = getattr(self, name)
            if not 0 <= v <= 0xFFFF:
                raise ValueError(f"{name} out of u16 range: {v}")
        for name in ("src_ip", "dst_ip"):
            v = getattr(self, name)
            if not 0 <= v <= 0xFFFFFFFF:
                raise ValueError(f"{name} out of u32 range: {v}")
        if self.first_len < 20:
            raise ValueError(f"first_len below minimum IP header: {self.first_len}")
        if self.arrival_us < 0:
            raise ValueError("arrival_us must be nonnegative")

    def five_tuple(self):
        return (self.src_ip, self.dst_ip, self.src_port, self.dst_port, self.proto)


@dataclass(frozen=True)
class FlowRecord:
    """A finished flow: its first packet plus ground-truth counters."""

    first: FirstPacket
    packet_count: int
    byte_count: int
    duration_ms: int

    def __post_init__(self):
        if self.packet_count < 1:
            raise ValueError("packet_count must be >= 1")
        if self.byte_count < 20 * self.packet_count:
            raise ValueError("byte_count below 20 bytes/packet floor")
        if self.byte_count < self.first.first_len:
            raise ValueError("byte_count smaller than the first packet")
        if self.duration_ms < 0:
            raise ValueError("duration_ms must be nonnegative")
