"""flowcast: predict a flow's size class from its first packet and use the
prediction to pack a capacity-limited flow table."""

from .records import FirstPacket, FlowRecord, ip_to_str, str_to_ip
from .encoding import (
    DEFAULT_BINS,
    FirstPacketFeaturizer,
    decode_one_hot,
    featurize,
    featurize_batch,
    label,
    one_hot,
)
from .nn import Network, gradient_check
from .classifier import FlowSizeClassifier
from .flowtable import FlowEntry, FlowTable, RemovalEvent, RemovalReason
from .ofwire import MatchFields, decode_message, encode_message, parse_frame
from .tracegen import TraceConfig, class_histogram, generate, read_trace_csv, write_trace_csv
from .simulator import SimReport, WindowMetrics, admit, run_online, window_speedup
from .controller import Controller, ControllerConfig, MockSwitch, make_server, serve

__version__ = "0.1.0"

__all__ = [
    "Controller",
    "ControllerConfig",
    "DEFAULT_BINS",
    "FirstPacket",
    "FirstPacketFeaturizer",
    "FlowEntry",
    "FlowRecord",
    "FlowSizeClassifier",
    "FlowTable",
    "MatchFields",
    "MockSwitch",
    "Network",
    "RemovalEvent",
    "RemovalReason",
    "SimReport",
    "TraceConfig",
    "WindowMetrics",
    "admit",
    "class_histogram",
    "decode_message",
    "decode_one_hot",
    "encode_message",
    "featurize",
    "featurize_batch",
    "generate",
    "gradient_check",
    "ip_to_str",
    "label",
    "make_server",
    "one_hot",
    "parse_frame",
    "read_trace_csv",
    "run_online",
    "serve",
    "str_to_ip",
    "window_speedup",
    "write_trace_csv",
]
