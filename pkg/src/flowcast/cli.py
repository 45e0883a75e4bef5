"""Command-line entrypoint: trace generation, simulation, training,
serving, the mock switch, gradient checking, and report rendering.

Exit codes: 0 success, 1 data/runtime error, 2 usage error.  Every
randomized subcommand takes --seed and records it in its outputs.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .controller import ControllerConfig, MockSwitch, serve
from .encoding import DEFAULT_BINS, featurize_batch, label, one_hot
from .nn import Network, gradient_check
from .simulator import (
    DEFAULT_EPOCHS,
    DEFAULT_TEST,
    DEFAULT_WINDOW,
    report_from_json,
    report_to_csv,
    report_to_json,
    report_to_text,
    run_online,
)
from .tracegen import (
    DEFAULT_CLASS_MIX,
    TraceConfig,
    generate,
    read_trace_csv,
    write_trace_csv,
)

DEFAULT_DIMS = (16, 50, 50, 50, 5)
GRAD_TOLERANCE = 1e-4


def _bins(text):
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("need 4 comma-separated thresholds")
    return tuple(parts)


def _mix(text):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 5:
        raise argparse.ArgumentTypeError("need 5 comma-separated probabilities")
    return tuple(parts)


def _dims(text):
    return tuple(int(p) for p in text.split(","))


def _hostport(text):
    host, _, port = text.rpartition(":")
    if not host:
        raise argparse.ArgumentTypeError("expected HOST:PORT")
    return host, int(port)


def _new_net(args):
    return Network(getattr(args, "dims", DEFAULT_DIMS), seed=args.seed,
                   dropout=getattr(args, "dropout", 0.2),
                   loss_mode=getattr(args, "loss", "cce"))


def _load_or_new_net(args):
    if getattr(args, "model", None) and os.path.exists(args.model):
        return Network.load(args.model)
    return _new_net(args)


def cmd_gen_trace(args):
    cfg = TraceConfig(n_flows=args.flows, seed=args.seed,
                      class_mix=args.class_mix or DEFAULT_CLASS_MIX,
                      signal=args.signal, bins=args.bins, rate_fps=args.rate)
    write_trace_csv(args.out, generate(cfg))
    print(f"wrote {args.flows} flows to {args.out} (seed {args.seed})")
    return 0


def cmd_simulate(args):
    trace = read_trace_csv(args.trace)
    net = _new_net(args)
    report = run_online(trace, net, window_size=args.window, test_size=args.test,
                        epochs=args.epochs, capacity_frac=args.capacity_frac,
                        seed=args.seed, bins=args.bins)
    with open(args.out_json, "w") as fh:
        fh.write(report_to_json(report))
    with open(args.out_csv, "w") as fh:
        fh.write(report_to_csv(report))
    if args.model_out:
        net.save(args.model_out)
    summary = report.summary()
    print(f"{summary['n_windows']} windows: mean speedup "
          f"{summary['mean_speedup']:.3f}, final accuracy "
          f"{summary['final_accuracy']:.4f} -> {args.out_json}, {args.out_csv}")
    return 0


def cmd_train(args):
    trace = read_trace_csv(args.trace)
    net = _new_net(args)
    X = featurize_batch(r.first for r in trace)
    samples = [(X[i], one_hot(label(trace[i].packet_count, args.bins)))
               for i in range(len(trace))]
    rng = np.random.default_rng(args.seed)
    final = None
    for _ in range(args.epochs):
        final = net.train_epoch(samples, rng)
    net.save(args.out)
    print(f"trained {args.epochs} epochs on {len(trace)} flows "
          f"(seed {args.seed}, final loss {final:.4f}) -> {args.out}")
    return 0


def cmd_serve(args):
    host, port = args.listen
    cfg = ControllerConfig(host=host, port=port, idle_timeout=args.idle,
                           hard_timeout=args.hard, bins=args.bins,
                           train_trigger=args.train_trigger, seed=args.seed,
                           model_path=args.model)
    serve(cfg, _load_or_new_net(args))
    return 0


def cmd_mock_switch(args):
    trace = read_trace_csv(args.trace)
    host, port = args.connect
    switch = MockSwitch(trace, capacity=args.capacity)
    report = switch.run(host, port)
    print(json.dumps({
        "packet_in_sent": report.packet_in_sent,
        "flow_mod_received": report.flow_mod_received,
        "flow_removed_sent": report.flow_removed_sent,
        "evictions": report.evictions,
        "aborted": report.aborted,
        "transcript_sha256": report.transcript_sha256,
    }, indent=2))
    return 1 if report.aborted else 0


def cmd_grad_check(args):
    worst = gradient_check(n_cases=args.count, seed=args.seed)
    ok = worst < GRAD_TOLERANCE
    print(f"max relative error {worst:.3e} over {args.count} cases "
          f"({'OK' if ok else 'FAIL'}, tolerance {GRAD_TOLERANCE:.0e})")
    return 0 if ok else 1


def cmd_report(args):
    with open(args.json) as fh:
        report = report_from_json(fh.read())
    if args.format == "csv":
        print(report_to_csv(report), end="")
    else:
        print(report_to_text(report))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="flowcast",
        description="first-packet flow-size prediction and flow-table admission")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-trace", help="write a synthetic flow trace CSV")
    p.add_argument("--flows", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--class-mix", type=_mix, default=None, dest="class_mix")
    p.add_argument("--signal", type=float, default=0.95)
    p.add_argument("--bins", type=_bins, default=DEFAULT_BINS)
    p.add_argument("--rate", type=float, default=1000.0,
                   help="mean arrival rate, flows/second")
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("simulate", help="windowed online-training replay")
    p.add_argument("--trace", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    p.add_argument("--test", type=int, default=DEFAULT_TEST)
    p.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    p.add_argument("--capacity-frac", type=float, default=0.5)
    p.add_argument("--bins", type=_bins, default=DEFAULT_BINS)
    p.add_argument("--dims", type=_dims, default=DEFAULT_DIMS)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--loss", choices=("cce", "mse"), default="cce")
    p.add_argument("--out-json", default="report.json")
    p.add_argument("--out-csv", default="report.csv")
    p.add_argument("--model-out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a model over a whole trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    p.add_argument("--bins", type=_bins, default=DEFAULT_BINS)
    p.add_argument("--dims", type=_dims, default=DEFAULT_DIMS)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--loss", choices=("cce", "mse"), default="cce")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("serve", help="run the OpenFlow controller")
    p.add_argument("--listen", type=_hostport, default=("127.0.0.1", 6653))
    p.add_argument("--idle", type=int, default=10)
    p.add_argument("--hard", type=int, default=30)
    p.add_argument("--bins", type=_bins, default=DEFAULT_BINS)
    p.add_argument("--train-trigger", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", default=None,
                   help="model checkpoint to load/save")
    p.add_argument("--dims", type=_dims, default=DEFAULT_DIMS)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("mock-switch", help="replay a trace against a controller")
    p.add_argument("--trace", required=True)
    p.add_argument("--connect", type=_hostport, required=True)
    p.add_argument("--capacity", type=int, default=100_000)
    p.set_defaults(func=cmd_mock_switch)

    p = sub.add_parser("grad-check", help="finite-difference gradient check")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("report", help="render a report.json")
    p.add_argument("--json", required=True)
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    logging.basicConfig(
        level=os.environ.get("FLOWCAST_LOG", "WARNING").upper(),
        format="%(name)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
