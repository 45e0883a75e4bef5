"""Windowed trace replay: rank-based admission into a half-size flow table,
online training between windows, and speedup/accuracy reporting.

Each window is scored with the network as it stood BEFORE training on that
window, i.e. what a deployed controller would have predicted, then the
window is used for training.  A fixed held-out set from the head of the
trace is never trained on.
"""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .encoding import DEFAULT_BINS, featurize_batch, one_hot, label

DEFAULT_WINDOW = 3247
DEFAULT_TEST = 1083
DEFAULT_EPOCHS = 5


@dataclass(frozen=True)
class WindowMetrics:
    index: int
    accuracy: float
    nn_packets: int
    fcfs_packets: int
    oracle_packets: int
    speedup: float
    oracle_ratio: float


@dataclass
class SimReport:
    windows: list
    config: dict

    def summary(self):
        speedups = [w.speedup for w in self.windows if not math.isnan(w.speedup)]
        accs = [w.accuracy for w in self.windows]
        return {
            "n_windows": len(self.windows),
            "mean_speedup": float(np.mean(speedups)) if speedups else float("nan"),
            "min_speedup": float(np.min(speedups)) if speedups else float("nan"),
            "max_speedup": float(np.max(speedups)) if speedups else float("nan"),
            "mean_accuracy": float(np.mean(accs)) if accs else float("nan"),
            "final_accuracy": accs[-1] if accs else float("nan"),
        }


def admit(records, ranks, capacity=None):
    """The `capacity` records with the highest ranks, ties to earlier arrival.

    records are in arrival order; capacity defaults to len(records) // 2.
    """
    if capacity is None:
        capacity = len(records) // 2
    if capacity > len(records):
        raise ValueError(f"capacity {capacity} exceeds window of {len(records)}")
    if len(ranks) != len(records):
        raise ValueError("one rank per record required")
    order = sorted(range(len(records)), key=lambda i: (-ranks[i], i))
    return [records[i] for i in order[:capacity]]


def window_speedup(records, ranks, capacity=None) -> WindowMetrics:
    """Packet-capture metrics of rank-based admission for one window.

    nn_packets counts packets of the admitted set, fcfs_packets those of the
    first `capacity` arrivals, oracle_packets the true top-`capacity` flows.
    speedup is nn/fcfs (NaN when fcfs is zero).
    """
    if not records:
        raise ValueError("empty window")
    if capacity is None:
        capacity = len(records) // 2
    admitted = admit(records, ranks, capacity)
    nn = sum(r.packet_count for r in admitted)
    fcfs = sum(r.packet_count for r in records[:capacity])
    oracle = sum(sorted((r.packet_count for r in records), reverse=True)[:capacity])
    speedup = nn / fcfs if fcfs else float("nan")
    ratio = oracle / fcfs if fcfs else float("nan")
    return WindowMetrics(index=0, accuracy=float("nan"), nn_packets=nn,
                         fcfs_packets=fcfs, oracle_packets=oracle,
                         speedup=speedup, oracle_ratio=ratio)


def run_online(records, net, window_size=DEFAULT_WINDOW, test_size=DEFAULT_TEST,
               epochs=DEFAULT_EPOCHS, capacity_frac=0.5, seed=0,
               bins=DEFAULT_BINS) -> SimReport:
    """Replay a trace through predict-then-train windows.

    The first test_size records form the fixed held-out set; the rest is cut
    into consecutive windows of window_size (a trailing partial window is
    dropped).  Per window: admission metrics with the current net, held-out
    accuracy, then `epochs` training epochs on the window.
    """
    if len(records) < window_size + test_size:
        raise ValueError(f"trace of {len(records)} flows is smaller than "
                         f"test {test_size} + window {window_size}")
    rng = np.random.default_rng(seed)
    held = records[:test_size]
    rest = records[test_size:]
    n_windows = len(rest) // window_size
    capacity = int(window_size * capacity_frac)
    held_x = featurize_batch(r.first for r in held)
    held_y = np.array([label(r.packet_count, bins) for r in held])
    windows = []
    for w in range(n_windows):
        window = rest[w * window_size:(w + 1) * window_size]
        win_x = featurize_batch(r.first for r in window)
        ranks = net.predict_batch(win_x)
        metrics = window_speedup(window, list(ranks), capacity)
        accuracy = float(np.mean(net.predict_batch(held_x) == held_y))
        windows.append(replace(metrics, index=w, accuracy=accuracy))
        samples = [(win_x[i], one_hot(label(window[i].packet_count, bins)))
                   for i in range(len(window))]
        for _ in range(epochs):
            net.train_epoch(samples, rng)
    config = {
        "window_size": window_size,
        "test_size": test_size,
        "epochs": epochs,
        "capacity_frac": capacity_frac,
        "capacity": capacity,
        "seed": seed,
        "bins": list(bins),
        "n_records": len(records),
    }
    return SimReport(windows=windows, config=config)


def report_to_json(report: SimReport) -> str:
    return json.dumps({
        "config": report.config,
        "summary": report.summary(),
        "windows": [asdict(w) for w in report.windows],
    }, indent=2)


def report_from_json(text: str) -> SimReport:
    data = json.loads(text)
    windows = [WindowMetrics(**w) for w in data["windows"]]
    return SimReport(windows=windows, config=data["config"])


def report_to_csv(report: SimReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["index", "accuracy", "nn_packets", "fcfs_packets",
                     "oracle_packets", "speedup", "oracle_ratio"])
    for w in report.windows:
        writer.writerow([w.index, f"{w.accuracy:.6f}", w.nn_packets,
                         w.fcfs_packets, w.oracle_packets,
                         f"{w.speedup:.6f}", f"{w.oracle_ratio:.6f}"])
    return out.getvalue()


def report_to_text(report: SimReport) -> str:
    lines = [f"{'win':>4} {'accuracy':>9} {'nn_pkts':>12} {'fcfs_pkts':>12} "
             f"{'oracle_pkts':>12} {'speedup':>8} {'oracle':>8}"]
    for w in report.windows:
        lines.append(f"{w.index:>4} {w.accuracy:>9.4f} {w.nn_packets:>12} "
                     f"{w.fcfs_packets:>12} {w.oracle_packets:>12} "
                     f"{w.speedup:>8.3f} {w.oracle_ratio:>8.3f}")
    s = report.summary()
    lines.append(f"mean speedup {s['mean_speedup']:.3f} "
                 f"(min {s['min_speedup']:.3f}, max {s['max_speedup']:.3f}); "
                 f"accuracy mean {s['mean_accuracy']:.4f}, "
                 f"final {s['final_accuracy']:.4f}")
    return "\n".join(lines)
