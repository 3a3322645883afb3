"""Federated averaging on small neural networks, from the math up.

The package trains image classifiers with plain numpy kernels, splits a
dataset across simulated or real TCP workers, averages their updates
sample-weighted each round, and accounts for every byte on the wire.
"""

from .errors import (
    ConsistencyError,
    DimensionError,
    EdgefedError,
    FormatError,
    ProtocolError,
    StateError,
    ValidationError,
)
from .fedavg import FedConfig, Worker, aggregate, init_global, run_repeats, run_until
from .metrics import ConvergenceLog, RoundRecord, bench_latency, first_hit, summarize
from .models import MODEL_KINDS, PARAM_COUNTS, build_model, evaluate
from .transport import (
    ControlMsg,
    GlobalModelMsg,
    LinkModel,
    LocalUpdateMsg,
    SimTransport,
    TcpServerTransport,
    TcpWorkerClient,
    TrafficMeter,
    decode,
    encode,
)

__version__ = "0.1.0"

__all__ = [
    "ConsistencyError",
    "ControlMsg",
    "ConvergenceLog",
    "DimensionError",
    "EdgefedError",
    "FedConfig",
    "FormatError",
    "GlobalModelMsg",
    "LinkModel",
    "LocalUpdateMsg",
    "MODEL_KINDS",
    "PARAM_COUNTS",
    "ProtocolError",
    "RoundRecord",
    "SimTransport",
    "StateError",
    "TcpServerTransport",
    "TcpWorkerClient",
    "TrafficMeter",
    "ValidationError",
    "Worker",
    "aggregate",
    "bench_latency",
    "build_model",
    "decode",
    "encode",
    "evaluate",
    "first_hit",
    "init_global",
    "run_repeats",
    "run_until",
    "summarize",
    "__version__",
]
