"""Federated averaging: run configuration, worker-side local training,
sample-weighted aggregation, and convergence-driven run loops.

A round is broadcast -> K local updates of E batches of size B -> a
barrier for all K updates -> weighted aggregation -> server-side
evaluation on the full test set. Workers always restart from the
broadcast weights; the only state they carry between rounds is the
position of their seeded batch stream.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import models
from .data import (
    BatchStream,
    Dataset,
    PARTITION_SCHEMES,
    partition_iid,
    partition_label_pairs,
)
from .errors import ProtocolError, ValidationError
from .metrics import ConvergenceLog, RoundRecord, Summary, summarize
from .nn import Parameter, ParameterSet, sgd_step, softmax_cross_entropy
from .transport import LinkModel, LocalUpdateMsg, SimTransport

DEFAULT_PAIRS = ((0, 1), (2, 3), (4, 5), (6, 7), (8, 9))


@dataclass
class FedConfig:
    k: int = 5
    e: int = 10
    b: int = 16
    lr: float = 0.05
    target_accuracy: float = 0.95
    max_rounds: int = 50
    seeds: tuple = (1,)
    scheme: str = "iid"
    model_kind: str = "cnn"
    pairs: tuple = DEFAULT_PAIRS
    stop_at_target: bool = True

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if self.e < 1:
            raise ValidationError(f"e must be >= 1, got {self.e}")
        if self.b < 1:
            raise ValidationError(f"b must be >= 1, got {self.b}")
        if not 0 < self.target_accuracy <= 1:
            raise ValidationError(
                f"target accuracy must be in (0, 1], got {self.target_accuracy}"
            )
        if self.max_rounds < 1:
            raise ValidationError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if self.lr < 0:
            raise ValidationError(f"lr must be >= 0, got {self.lr}")
        if self.scheme not in PARTITION_SCHEMES:
            raise ValidationError(
                f"scheme must be one of {PARTITION_SCHEMES}, got {self.scheme!r}"
            )
        if self.model_kind not in models.MODEL_KINDS:
            raise ValidationError(
                f"model kind must be one of {models.MODEL_KINDS}, got {self.model_kind!r}"
            )
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds or any(s < 0 for s in self.seeds):
            raise ValidationError(f"seeds must be non-empty, non-negative, got {self.seeds}")
        self.pairs = tuple(tuple(int(v) for v in pair) for pair in self.pairs)
        if self.scheme == "label_pairs" and len(self.pairs) != self.k:
            raise ValidationError(
                f"{len(self.pairs)} label pairs configured for k={self.k} workers"
            )


def init_global(model_kind: str, seed: int) -> ParameterSet:
    """Freshly initialized global weights for one model kind."""
    return models.build_model(model_kind, seed).params


def _xent_loss(logits: np.ndarray, labels: np.ndarray):
    loss, _, grad = softmax_cross_entropy(logits, labels)
    return loss, grad


class Worker:
    """One client: a model shell, a shard, and a persistent batch stream.

    Each local update overwrites the model with the broadcast weights,
    trains e batches of size b, and returns the result; with lr = 0 the
    forward/backward work still runs but no step is applied.
    """

    def __init__(
        self,
        worker_id: int,
        shard,
        cfg: FedConfig,
        model=None,
        loss=None,
        stream_seed=None,
        model_seed: int = 0,
    ):
        if worker_id < 0:
            raise ValidationError(f"worker id must be >= 0, got {worker_id}")
        self.worker_id = worker_id
        self.shard = shard
        self.cfg = cfg
        self.model = model if model is not None else models.build_model(cfg.model_kind, model_seed)
        self.loss = loss if loss is not None else _xent_loss
        seed = stream_seed if stream_seed is not None else (model_seed, worker_id)
        self.stream = BatchStream(shard, cfg.b, seed)

    def run_local(self, rnd: int, global_weights: ParameterSet) -> LocalUpdateMsg:
        params = self.model.params
        params.load_values(global_weights)
        net = self.model.net
        for x, y in self.stream.take(self.cfg.e):
            logits, cache = net.forward(x)
            _, grad = self.loss(logits, y)
            net.backward(cache, grad)
            if self.cfg.lr > 0:
                sgd_step(params, self.cfg.lr)
            else:
                params.zero_grads()
        return LocalUpdateMsg(
            round=rnd,
            weights=params.clone(),
            sample_count=self.cfg.e * self.cfg.b,
        )


def local_update(global_weights: ParameterSet, shard, cfg: FedConfig, worker_seed, rnd: int) -> LocalUpdateMsg:
    """One-shot local update from a fresh stream at the given seed."""
    worker = Worker(0, shard, cfg, stream_seed=worker_seed, model_seed=0)
    return worker.run_local(rnd, global_weights)


def aggregate(updates) -> ParameterSet:
    """Sample-count-weighted mean of the updates' weights.

    Accumulation runs in double precision in the given order (callers
    supply worker-id ascending) and is cast back to float32 at the end,
    so averaging identical sets reproduces them bit-exactly.
    """
    updates = list(updates)
    if not updates:
        raise ValidationError("aggregate needs at least one update")
    rounds = {u.round for u in updates}
    if len(rounds) != 1:
        raise ProtocolError(f"updates mix rounds {sorted(rounds)}")
    names = updates[0].weights.names()
    shapes = [p.value.shape for p in updates[0].weights]
    for u in updates[1:]:
        if u.weights.names() != names:
            raise ProtocolError(
                f"update tensor names differ: {u.weights.names()} vs {names}"
            )
        for p, shape in zip(u.weights, shapes):
            if p.value.shape != shape:
                raise ProtocolError(
                    f"shape mismatch for {p.name!r}: {p.value.shape} vs {shape}"
                )
    counts = [int(u.sample_count) for u in updates]
    if any(c < 1 for c in counts):
        raise ValidationError(f"sample counts must be >= 1, got {counts}")
    total = sum(counts)
    merged = []
    for ti, name in enumerate(names):
        acc = np.zeros(shapes[ti], dtype=np.float64)
        for u, count in zip(updates, counts):
            acc += u.weights[ti].value.astype(np.float64) * (count / total)
        merged.append(Parameter(name, acc.astype(np.float32)))
    return ParameterSet(merged)


@dataclass
class FedState:
    """Server-side state threaded through run_round."""

    cfg: FedConfig
    server_model: models.Model
    weights: ParameterSet
    test_data: Dataset
    log: ConvergenceLog
    round: int = 0
    wall_start: float = field(default_factory=time.perf_counter)


def make_state(cfg: FedConfig, test_data: Dataset, seed: int) -> FedState:
    model = models.build_model(cfg.model_kind, seed)
    return FedState(
        cfg=cfg,
        server_model=model,
        weights=model.params.clone(),
        test_data=test_data,
        log=ConvergenceLog(seed=seed),
    )


def run_round(state: FedState, transport, workers=()) -> RoundRecord:
    """One synchronous round: broadcast, barrier on all k updates,
    aggregate, evaluate on the server's full test set."""
    rnd = state.round + 1
    updates = transport.execute_round(rnd, state.weights, workers, state.cfg)
    if len(updates) != state.cfg.k:
        raise ProtocolError(
            f"round {rnd} collected {len(updates)} updates, expected {state.cfg.k}"
        )
    state.weights = aggregate(updates)
    state.round = rnd
    state.server_model.params.load_values(state.weights)
    eval_t0 = time.perf_counter()
    accuracy = models.evaluate(state.server_model, state.test_data)
    transport.record_eval(rnd, (time.perf_counter() - eval_t0) * 1e3)
    virtual_ms = transport.virtual_now()
    if transport.is_simulated:
        wall_ms = virtual_ms
    else:
        wall_ms = (time.perf_counter() - state.wall_start) * 1e3
    meter = transport.meter
    cum_bytes = max((meter.total(w) for w in meter.workers()), default=0)
    record = RoundRecord(rnd, virtual_ms, wall_ms, float(accuracy), int(cum_bytes))
    state.log.records.append(record)
    return record


def make_shards(cfg: FedConfig, train: Dataset, seed: int):
    if cfg.scheme == "iid":
        return partition_iid(train, cfg.k, seed)
    return partition_label_pairs(train, cfg.pairs, seed)


def run_until(cfg: FedConfig, datasets, transport, seed: int | None = None) -> ConvergenceLog:
    """Rounds until the target accuracy is first hit (or max_rounds).

    `datasets` is a (train, test) pair. Per-worker batch streams are
    seeded (seed, worker_id) and keep their position across rounds.
    """
    run_seed = int(cfg.seeds[0] if seed is None else seed)
    train, test = datasets
    shards = make_shards(cfg, train, run_seed)
    workers = [
        Worker(w, shards[w], cfg, model_seed=run_seed, stream_seed=(run_seed, w))
        for w in range(cfg.k)
    ]
    state = make_state(cfg, test, run_seed)
    log = state.log
    while state.round < cfg.max_rounds:
        record = run_round(state, transport, workers)
        if log.first_hit_round is None and record.accuracy >= cfg.target_accuracy:
            log.first_hit_round = record.round
            log.first_hit_virtual_ms = record.virtual_ms
            log.converged = True
            if cfg.stop_at_target:
                break
    log.phases = list(transport.phase_records)
    log.validate()
    return log


def run_repeats(cfg: FedConfig, datasets, transport_factory=None) -> tuple[list[ConvergenceLog], Summary]:
    """Independent runs, one per configured seed, plus their summary."""
    if transport_factory is None:
        transport_factory = lambda seed: SimTransport(LinkModel(), seed)
    logs = []
    for seed in cfg.seeds:
        transport = transport_factory(seed)
        logs.append(run_until(cfg, datasets, transport, seed))
    return logs, summarize(logs, cfg.target_accuracy)
