"""End-to-end acceptance suite.  Each test prints one [PASS] line with its
measured numbers; tolerances and budgets are pinned in the asserts.

Run: pytest tests/test_acceptance.py -v -s
"""

import multiprocessing
import random
import time
from pathlib import Path

import numpy as np

from flowcast import ofwire
from flowcast.controller import ControllerConfig, MockSwitch, make_server
from flowcast.nn import Network, gradient_check, sigmoid, sigmoid_deriv
from flowcast.ofwire import (
    CodecError,
    MatchFields,
    PacketIn,
    decode_message,
    encode_message,
)
from flowcast.simulator import run_online, window_speedup
from flowcast.tracegen import DEFAULT_CLASS_MIX, TraceConfig, generate
from helpers_wire import ALL_TYPES, random_message
from test_flowtable import run_oracle_sequence

GOLDEN_TRANSCRIPT = Path(__file__).parent / "data" / "e2e_transcript.sha256"


def test_criterion_1_gradient_oracle():
    start = time.monotonic()
    worst = gradient_check(n_cases=100, seed=2024)
    elapsed = time.monotonic() - start
    assert worst < 1e-4
    assert elapsed < 30.0
    print(f"\n[PASS] criterion 1 gradient oracle: max rel err {worst:.3e} "
          f"over 100 cases in {elapsed:.1f}s")


def test_criterion_2_closed_form_equivalence():
    # derivative identity, checked against the quotient form as well
    rng = np.random.default_rng(7)
    x = rng.uniform(-30, 30, 10_000)
    s = sigmoid(x)
    identity_gap = float(np.max(np.abs(sigmoid_deriv(x) - s * (1.0 - s))))
    quotient_gap = float(np.max(np.abs(
        sigmoid_deriv(x) - np.exp(-x) / (1.0 + np.exp(-x)) ** 2)))
    assert identity_gap < 1e-12
    assert quotient_gap < 1e-12

    # backprop deltas on all-sigmoid nets equal the closed forms:
    # output delta (O_k - t_k) O_k (1 - O_k); hidden delta
    # O_j (1 - O_j) sum_k delta_k w_jk; weight gradient O_j delta_k
    worst = 0.0
    for case in range(20):
        dims = [int(rng.integers(2, 9)) for _ in range(int(rng.integers(3, 6)))]
        net = Network(dims, seed=int(rng.integers(1 << 31)),
                      hidden_activation="sigmoid", dropout=0.0, loss_mode="mse")
        xin = rng.uniform(-1, 1, dims[0])
        t = np.zeros(dims[-1])
        t[rng.integers(dims[-1])] = 1.0
        trace = net.forward(xin)
        grads = net.backprop(trace, t)
        q = trace.outputs
        delta = (q - t) * q * (1.0 - q)
        for i in range(net.n_layers - 1, -1, -1):
            worst = max(worst, float(np.max(np.abs(grads.d_b[i] - delta))))
            worst = max(worst, float(np.max(np.abs(
                grads.d_w[i] - np.outer(trace.acts[i], delta)))))
            if i > 0:
                o = trace.acts[i]
                delta = o * (1.0 - o) * (net.weights[i] @ delta)
        assert worst < 1e-12
    print(f"\n[PASS] criterion 2 closed forms: delta gap {worst:.2e}, "
          f"derivative identity gap {identity_gap:.2e}, "
          f"quotient-form gap {quotient_gap:.2e}")


def test_criterion_3_codec_roundtrip_and_fuzz():
    rng = random.Random(404)
    per_type = 10_000
    for msg_type in ALL_TYPES:
        for _ in range(per_type):
            msg = random_message(rng, msg_type)
            assert decode_message(encode_message(msg)) == msg

    # the captured PACKET_IN field set: 0x05 / type 10 / NO_BUFFER /
    # reason APPLY_ACTION / table 0, length 102 with a lone in-port match
    capture = PacketIn(xid=0, total_len=60, reason=ofwire.OFPR_APPLY_ACTION,
                       table_id=0, cookie=0, match=MatchFields(in_port=1),
                       frame=b"\x00" * 60)
    wire = encode_message(capture)
    assert wire[:8] == bytes.fromhex("050A006600000000")
    assert len(wire) == 102
    assert decode_message(wire) == capture

    fuzzed = 0
    for _ in range(60):
        wire = encode_message(random_message(rng))
        for cut in range(len(wire)):
            try:
                decode_message(wire[:cut])
            except CodecError:
                pass
            fuzzed += 1
        blob = bytearray(wire)
        for _ in range(20):
            blob[rng.randrange(len(blob))] = rng.randrange(256)
            try:
                decode_message(bytes(blob))
            except CodecError:
                pass
            fuzzed += 1
    print(f"\n[PASS] criterion 3 codec: {per_type} roundtrips x "
          f"{len(ALL_TYPES)} types, capture vector exact, "
          f"{fuzzed} truncation/mutation decodes without a crash")


def test_criterion_4_flow_table_oracle():
    total_events = 0
    for seed in (101, 202, 303, 404, 505):
        events = run_oracle_sequence(seed, n_ops=1000, capacity=5)
        total_events += len(events)
    events = run_oracle_sequence(606, n_ops=1000, capacity=2)
    total_events += len(events)
    print(f"\n[PASS] criterion 4 flow-table oracle: 6 x 1000-op sequences "
          f"match the naive reference ({total_events} removal events compared)")


def test_criterion_5_admission_oracle():
    rng = random.Random(99)
    from test_simulator import rec  # minimal FlowRecord factory

    checked = 0
    for _ in range(100):
        n = rng.randrange(2, 40)
        records = [rec(rng.randrange(1, 10_000), arrival=i) for i in range(n)]
        capacity = n // 2
        if capacity == 0:
            continue
        counts = [r.packet_count for r in records]
        m = window_speedup(records, counts, capacity)
        brute = sum(sorted(counts, reverse=True)[:capacity])
        assert m.nn_packets == brute
        assert m.nn_packets <= m.oracle_packets
        assert m.fcfs_packets <= m.oracle_packets
        # dominance must also hold for arbitrary (imperfect) rankings
        ranks = [rng.randrange(1, 6) for _ in range(n)]
        w = window_speedup(records, ranks, capacity)
        assert w.nn_packets <= w.oracle_packets
        assert w.fcfs_packets <= w.oracle_packets
        checked += 1
    print(f"\n[PASS] criterion 5 admission oracle: perfect predictor equals "
          f"brute-force top-half on {checked} random windows; dominance held")


def _analogue_run(trace_seed, signal, net_seed=0):
    trace = generate(TraceConfig(n_flows=100_000, seed=trace_seed, signal=signal))
    net = Network([16, 50, 50, 50, 5], seed=net_seed)
    return run_online(trace, net, seed=net_seed)


def _analogue_worker(seed):
    report = _analogue_run(trace_seed=seed, signal=0.95, net_seed=seed)
    summary = report.summary()
    violations = [w.index for w in report.windows
                  if not (w.speedup <= w.oracle_ratio + 1e-12
                          and w.nn_packets <= w.oracle_packets
                          and w.fcfs_packets <= w.oracle_packets)]
    return {"seed": seed, "n_windows": len(report.windows),
            "final_accuracy": summary["final_accuracy"],
            "mean_speedup": summary["mean_speedup"],
            "violations": violations}


def test_criterion_6_synthetic_analogue_three_seeds():
    start = time.monotonic()
    # seeds are independent runs; execute them in parallel workers
    with multiprocessing.get_context("spawn").Pool(3) as pool:
        results = pool.map(_analogue_worker, [1, 2, 3])
    elapsed = time.monotonic() - start
    for r in results:
        assert r["n_windows"] >= 30
        assert r["violations"] == [], r  # speedup <= oracle_ratio everywhere
        assert r["final_accuracy"] >= 0.80, r
        assert r["mean_speedup"] >= 1.5, r
    assert elapsed < 300.0
    detail = ", ".join(f"seed {r['seed']}: acc {r['final_accuracy']:.3f}"
                       f"/speedup {r['mean_speedup']:.2f}" for r in results)
    print(f"\n[PASS] criterion 6 synthetic analogue (3/3 seeds in "
          f"{elapsed:.0f}s): {detail}")


def test_criterion_7_null_signal_control():
    report = _analogue_run(trace_seed=11, signal=0.0, net_seed=11)
    mean_acc = report.summary()["mean_accuracy"]
    baseline = max(DEFAULT_CLASS_MIX)
    assert abs(mean_acc - baseline) <= 0.05, (mean_acc, baseline)
    print(f"\n[PASS] criterion 7 null-signal control: mean accuracy "
          f"{mean_acc:.3f} vs majority baseline {baseline:.3f} (+-0.05)")


def _e2e_run():
    trace = generate(TraceConfig(n_flows=1000, seed=42))
    cfg = ControllerConfig(host="127.0.0.1", port=0, train_trigger=256, seed=0)
    net = Network([16, 50, 50, 50, 5], seed=0)
    server = make_server(cfg, net)
    import threading

    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        report = MockSwitch(trace, capacity=100_000).run("127.0.0.1",
                                                         server.bound_port)
    finally:
        server.shutdown()
        server.server_close()
    return report, server.controller


def test_criterion_8_end_to_end_conservation_and_golden_transcript():
    start = time.monotonic()
    report, controller = _e2e_run()
    second, _ = _e2e_run()
    elapsed = time.monotonic() - start
    assert not report.aborted
    assert report.packet_in_sent == 1000
    assert report.flow_mod_received == 1000
    assert controller.stats["packet_in"] == 1000
    assert controller.stats["flow_mod"] == 1000
    assert controller.stats["flow_removed_unknown"] == 0
    assert controller.stats["flow_removed_known"] == report.flow_removed_sent == 1000
    assert controller.stats["training_samples"] == 1000  # one sample per removal
    assert report.transcript_sha256 == second.transcript_sha256
    golden = GOLDEN_TRANSCRIPT.read_text().strip()
    assert report.transcript_sha256 == golden
    assert elapsed < 60.0
    print(f"\n[PASS] criterion 8 end-to-end: 1000/1000/1000 messages, "
          f"1000 training samples, transcript {report.transcript_sha256[:12]}... "
          f"matches golden, two runs identical, {elapsed:.1f}s for both")
