"""Feature, label, and one-hot encodings for first-packet classification.

The 16 features are byte-normalized header fields, all in [0, 1]:
octets of both addresses, port bytes, protocol, TOS, capped packet length,
and TTL.  Packet counts map onto 5 size classes via four ascending bin
thresholds (class 5 = largest flows = highest importance).
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .records import FirstPacket

N_FEATURES = 16
N_CLASSES = 5
DEFAULT_BINS = (2, 10, 100, 1000)


def validate_bins(bins):
    """Return bins as a tuple of 4 strictly ascending ints with t1 >= 1."""
    bins = tuple(int(b) for b in bins)
    if len(bins) != 4:
        raise ValueError(f"need exactly 4 bin thresholds, got {len(bins)}")
    if bins[0] < 1:
        raise ValueError("first threshold must be >= 1")
    if any(a >= b for a, b in zip(bins, bins[1:])):
        raise ValueError(f"thresholds must be strictly ascending: {bins}")
    return bins


def featurize(pkt: FirstPacket) -> np.ndarray:
    """Map a first packet to the 16-dim feature vector, each component in [0, 1]."""
    f = np.empty(N_FEATURES)
    f[0] = (pkt.src_ip >> 24) & 0xFF
    f[1] = (pkt.src_ip >> 16) & 0xFF
    f[2] = (pkt.src_ip >> 8) & 0xFF
    f[3] = pkt.src_ip & 0xFF
    f[4] = (pkt.dst_ip >> 24) & 0xFF
    f[5] = (pkt.dst_ip >> 16) & 0xFF
    f[6] = (pkt.dst_ip >> 8) & 0xFF
    f[7] = pkt.dst_ip & 0xFF
    f[8] = (pkt.src_port >> 8) & 0xFF
    f[9] = pkt.src_port & 0xFF
    f[10] = (pkt.dst_port >> 8) & 0xFF
    f[11] = pkt.dst_port & 0xFF
    f[12] = pkt.proto
    f[13] = pkt.tos
    f /= 255.0
    f[14] = min(pkt.first_len, 1500) / 1500.0
    f[15] = pkt.ttl / 255.0
    return f


def featurize_batch(packets) -> np.ndarray:
    """Stack featurize() over an iterable of packets into an (n, 16) matrix."""
    return np.array([featurize(p) for p in packets])


def label(packet_count: int, bins=DEFAULT_BINS) -> int:
    """Class 1..5 for a flow's packet count; bin k holds counts <= bins[k-1]."""
    if packet_count < 1:
        raise ValueError(f"packet_count must be >= 1, got {packet_count}")
    for k, threshold in enumerate(bins):
        if packet_count <= threshold:
            return k + 1
    return 5


def one_hot(cls: int) -> np.ndarray:
    if not 1 <= cls <= N_CLASSES:
        raise ValueError(f"class out of range [1, {N_CLASSES}]: {cls}")
    v = np.zeros(N_CLASSES)
    v[cls - 1] = 1.0
    return v


def decode_one_hot(outputs) -> int:
    """Argmax class of an output vector; ties go to the lowest index."""
    v = np.asarray(outputs, dtype=float)
    if v.size == 0:
        raise ValueError("empty output vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite output vector")
    return int(np.argmax(v)) + 1


class FirstPacketFeaturizer(TransformerMixin, BaseEstimator):
    """Stateless transformer from FirstPacket records to the feature matrix."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return featurize_batch(X)
