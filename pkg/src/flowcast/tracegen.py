"""Deterministic synthetic flow traces with a plantable header-size signal.

Each flow's true class is drawn from class_mix; with probability `signal`
its (dst_port, proto) pair comes from that class's signature set (well-known
ports below 1024), otherwise from the ephemeral range, so headers carry no
class information at signal=0 and determine the class exactly at signal=1.
All other header fields are class-independent noise.  Packet counts are
log-uniform within the class's bin.
"""

import csv
import ipaddress
from dataclasses import dataclass

import numpy as np

from .encoding import DEFAULT_BINS, label, validate_bins
from .records import FirstPacket, FlowRecord, ip_to_str, str_to_ip

# flow-table census ratios: 626/310/11/27 across classes 1/2/4/5 with a
# small allowance for the unreported middle class
DEFAULT_CLASS_MIX = (0.636, 0.315, 0.010, 0.012, 0.027)

# class -> (dst_port, proto) signatures; one-shot UDP lookups at the low
# end (DNS and friends), bulk-transfer TCP services at the high end
SIGNATURE_PORTS = {
    1: ((53, 17), (123, 17), (161, 17)),
    2: ((25, 6), (80, 6)),
    3: ((22, 6), (443, 6)),
    4: ((445, 6), (993, 6)),
    5: ((873, 6), (990, 6)),
}

EPHEMERAL_LOW = 1024

CSV_HEADER = ["ts_us", "src_ip", "dst_ip", "src_port", "dst_port", "proto",
              "tos", "ttl", "first_len", "pkt_count", "byte_count", "dur_ms"]

_TOS_POOL = (0, 0x10, 0x28, 0x48)
_TTL_POOL = (32, 64, 128, 255)


@dataclass
class TraceConfig:
    n_flows: int = 100_000
    seed: int = 0
    class_mix: tuple = DEFAULT_CLASS_MIX
    signal: float = 0.95
    bins: tuple = DEFAULT_BINS
    max_count: int = 10_000
    rate_fps: float = 1000.0  # mean Poisson arrival rate, flows/second
    src_net: str = "10.0.0.0/16"
    dst_net: str = "192.168.0.0/16"
    max_duration_ms: int = 60_000

    def __post_init__(self):
        if self.n_flows < 1:
            raise ValueError("n_flows must be >= 1")
        mix = tuple(float(p) for p in self.class_mix)
        if len(mix) != 5 or any(p < 0 for p in mix) or abs(sum(mix) - 1.0) > 1e-9:
            raise ValueError(f"class_mix must be 5 nonnegative probs summing to 1: {mix}")
        self.class_mix = mix
        if not 0.0 <= self.signal <= 1.0:
            raise ValueError(f"signal must be in [0, 1]: {self.signal}")
        self.bins = validate_bins(self.bins)
        if self.max_count <= self.bins[-1]:
            raise ValueError("max_count must exceed the last bin threshold")
        if self.rate_fps <= 0:
            raise ValueError("rate_fps must be positive")

    def class_count_ranges(self):
        """Inclusive (lo, hi) packet-count range per class, 1-indexed."""
        edges = (0,) + self.bins + (self.max_count,)
        return {k: (edges[k - 1] + 1, edges[k]) for k in range(1, 6)}


def _pool(net: str):
    network = ipaddress.IPv4Network(net)
    return int(network.network_address) + 1, network.num_addresses - 2


def generate(cfg: TraceConfig) -> list:
    """n_flows FlowRecords in arrival order, fully determined by cfg.seed."""
    rng = np.random.default_rng(cfg.seed)
    ranges = cfg.class_count_ranges()
    src_base, src_span = _pool(cfg.src_net)
    dst_base, dst_span = _pool(cfg.dst_net)
    mean_gap_us = 1e6 / cfg.rate_fps
    records = []
    ts = 0.0
    for _ in range(cfg.n_flows):
        cls = int(rng.choice(5, p=cfg.class_mix)) + 1
        if rng.random() < cfg.signal:
            sigs = SIGNATURE_PORTS[cls]
            dst_port, proto = sigs[int(rng.integers(len(sigs)))]
        else:
            dst_port = int(rng.integers(EPHEMERAL_LOW, 65536))
            proto = 6 if rng.random() < 0.5 else 17
        lo, hi = ranges[cls]
        count = int(round(np.exp(rng.uniform(np.log(lo), np.log(hi)))))
        count = min(max(count, lo), hi)
        first_len = int(rng.integers(40, 1501))
        avg_pkt = rng.uniform(60.0, 1500.0)
        byte_count = max(int(count * avg_pkt), first_len, 20 * count)
        duration_ms = min(int(count * rng.uniform(0.5, 50.0)), cfg.max_duration_ms)
        ts += rng.exponential(mean_gap_us)
        pkt = FirstPacket(
            src_ip=src_base + int(rng.integers(src_span)),
            dst_ip=dst_base + int(rng.integers(dst_span)),
            src_port=int(rng.integers(EPHEMERAL_LOW, 65536)),
            dst_port=dst_port,
            proto=proto,
            tos=int(rng.choice(_TOS_POOL)),
            ttl=int(rng.choice(_TTL_POOL)),
            first_len=first_len,
            arrival_us=int(ts),
        )
        records.append(FlowRecord(first=pkt, packet_count=count,
                                  byte_count=byte_count, duration_ms=duration_ms))
    return records


def class_histogram(records, bins=DEFAULT_BINS):
    """Flow counts per class, [class1, ..., class5]."""
    counts = [0] * 5
    for rec in records:
        counts[label(rec.packet_count, bins) - 1] += 1
    return counts


def write_trace_csv(path, records):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for rec in records:
            p = rec.first
            writer.writerow([p.arrival_us, ip_to_str(p.src_ip), ip_to_str(p.dst_ip),
                             p.src_port, p.dst_port, p.proto, p.tos, p.ttl,
                             p.first_len, rec.packet_count, rec.byte_count,
                             rec.duration_ms])


def read_trace_csv(path) -> list:
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected trace header: {header}")
        for row in reader:
            if len(row) != len(CSV_HEADER):
                raise ValueError(f"bad trace row: {row}")
            pkt = FirstPacket(src_ip=str_to_ip(row[1]), dst_ip=str_to_ip(row[2]),
                              src_port=int(row[3]), dst_port=int(row[4]),
                              proto=int(row[5]), tos=int(row[6]), ttl=int(row[7]),
                              first_len=int(row[8]), arrival_us=int(row[0]))
            records.append(FlowRecord(first=pkt, packet_count=int(row[9]),
                                      byte_count=int(row[10]),
                                      duration_ms=int(row[11])))
    return records
