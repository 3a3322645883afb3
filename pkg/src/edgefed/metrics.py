"""Phase timing records, latency benchmarking, convergence summaries,
and CSV/JSON report emission.

Report schemas (stable):
    run-level rows:  seed, round, virtual_ms, wall_ms, accuracy, cum_bytes
    summary rows:    e, b, k, scheme, mean_round, min_round, max_round,
                     mean_ms, min_ms, max_ms, converged_runs
CSV numeric formatting: accuracies with 4 decimals, times as integer
milliseconds. The JSON form mirrors the same columns and quantization.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import models
from .data import synthetic_batch
from .errors import ValidationError
from .nn import softmax_cross_entropy

PHASES = ("Compute", "Send", "Receive", "Idle", "Eval")
DIRECTIONS = ("Forward", "Backward")
DEFAULT_BENCH_RUNS = 50

RUN_COLUMNS = ("seed", "round", "virtual_ms", "wall_ms", "accuracy", "cum_bytes")
SUMMARY_COLUMNS = (
    "e",
    "b",
    "k",
    "scheme",
    "mean_round",
    "min_round",
    "max_round",
    "mean_ms",
    "min_ms",
    "max_ms",
    "converged_runs",
)


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass
class PhaseRecord:
    """One worker's time in one phase of one round, on both clocks."""

    worker_id: int
    round: int
    phase: str
    virtual_ms: float
    host_ms: float

    def __post_init__(self) -> None:
        if self.phase not in PHASES:
            raise ValidationError(f"unknown phase {self.phase!r}; expected one of {PHASES}")
        if self.virtual_ms < 0 or self.host_ms < 0:
            raise ValidationError(
                f"phase durations must be >= 0, got virtual={self.virtual_ms}, "
                f"host={self.host_ms}"
            )


@dataclass
class RoundRecord:
    round: int
    virtual_ms: float
    wall_ms: float
    accuracy: float
    cum_bytes: int


@dataclass
class ConvergenceLog:
    """Per-round records of one run plus its first-hit outcome."""

    seed: int
    records: list = field(default_factory=list)
    converged: bool = False
    first_hit_round: int | None = None
    first_hit_virtual_ms: float | None = None
    phases: list = field(default_factory=list)

    def validate(self) -> None:
        for i, rec in enumerate(self.records):
            if rec.round != i + 1:
                raise ValidationError(
                    f"rounds must be contiguous from 1; record {i} has round {rec.round}"
                )
        totals = [r.cum_bytes for r in self.records]
        if any(cur < prev for prev, cur in zip(totals, totals[1:])):
            raise ValidationError("cumulative bytes must be non-decreasing")


@dataclass
class LatencySample:
    """All timed runs for one (model, direction, batch size) cell."""

    model_kind: str
    direction: str
    batch_size: int
    runs: list

    def __post_init__(self) -> None:
        if self.direction not in DIRECTIONS:
            raise ValidationError(
                f"direction must be one of {DIRECTIONS}, got {self.direction!r}"
            )
        if not self.runs:
            raise ValidationError("a latency cell needs at least one run")

    @property
    def mean(self) -> float:
        return float(np.mean(self.runs))

    @property
    def min(self) -> float:
        return float(np.min(self.runs))

    @property
    def max(self) -> float:
        return float(np.max(self.runs))

    @property
    def std(self) -> float:
        return float(np.std(self.runs))


# ---------------------------------------------------------------------------
# Latency benchmarking
# ---------------------------------------------------------------------------


def bench_latency(
    model_kind: str, batch_sizes, runs: int = DEFAULT_BENCH_RUNS, seed: int = 0
) -> list[LatencySample]:
    """Forward and backward host latency per batch size.

    The model is built once. For each batch size the synthetic input is
    allocated outside the timed region, then `runs` forward passes and
    `runs` forward+backward passes are timed; backward time is the
    forward+backward sample minus the mean forward time, since backward
    cannot run standalone.
    """
    batch_sizes = [int(b) for b in batch_sizes]
    if not batch_sizes or any(b < 1 for b in batch_sizes):
        raise ValidationError(f"batch sizes must be >= 1, got {batch_sizes}")
    if runs < 1:
        raise ValidationError(f"runs must be >= 1, got {runs}")
    model = models.build_model(model_kind, seed)
    net = model.net
    classes = model.spec.num_classes
    samples = []
    for b in batch_sizes:
        x = synthetic_batch(model_kind, b, seed=(seed, b))
        labels = np.random.default_rng((seed, b, 17)).integers(0, classes, b)
        for _ in range(2):  # warm caches outside the timed runs
            logits, cache = net.forward(x)
            _, _, grad = softmax_cross_entropy(logits, labels)
            net.backward(cache, grad)
            net.parameters().zero_grads()

        fwd = []
        for _ in range(runs):
            t0 = time.perf_counter()
            net.forward(x)
            fwd.append((time.perf_counter() - t0) * 1e3)

        fwd_bwd = []
        for _ in range(runs):
            t0 = time.perf_counter()
            logits, cache = net.forward(x)
            _, _, grad = softmax_cross_entropy(logits, labels)
            net.backward(cache, grad)
            fwd_bwd.append((time.perf_counter() - t0) * 1e3)
            net.parameters().zero_grads()

        mean_fwd = float(np.mean(fwd))
        samples.append(LatencySample(model_kind, "Forward", b, fwd))
        samples.append(
            LatencySample(model_kind, "Backward", b, [t - mean_fwd for t in fwd_bwd])
        )
    return samples


# ---------------------------------------------------------------------------
# Convergence summaries
# ---------------------------------------------------------------------------


@dataclass
class FirstHit:
    round: int
    virtual_ms: float


def first_hit(log: ConvergenceLog, target: float) -> FirstHit | None:
    """Earliest round whose accuracy meets the target; None if never."""
    for rec in log.records:
        if rec.accuracy >= target:
            return FirstHit(rec.round, rec.virtual_ms)
    return None


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class Summary:
    mean_round: int | None
    min_round: int | None
    max_round: int | None
    mean_ms: float | None
    min_ms: float | None
    max_ms: float | None
    converged_runs: int
    total_runs: int
    per_round_accuracy_mean: list
    per_round_accuracy_var: list


def summarize(logs, target: float) -> Summary:
    """Aggregate first-hit statistics and the per-round accuracy curve.

    Runs that never hit the target are excluded from the first-hit
    statistics but still counted in total_runs. The mean round is
    quantized to the nearest integer, half up. Per-round variance is the
    population variance across runs, truncated at the shortest log.
    """
    logs = list(logs)
    if not logs:
        raise ValidationError("summarize needs at least one log")
    hits = [h for h in (first_hit(log, target) for log in logs) if h is not None]
    if hits:
        rounds = [h.round for h in hits]
        times = [h.virtual_ms for h in hits]
        round_stats = (_round_half_up(float(np.mean(rounds))), min(rounds), max(rounds))
        time_stats = (float(np.mean(times)), float(min(times)), float(max(times)))
    else:
        round_stats = (None, None, None)
        time_stats = (None, None, None)
    shortest = min(len(log.records) for log in logs)
    acc = np.array(
        [[rec.accuracy for rec in log.records[:shortest]] for log in logs], dtype=np.float64
    )
    mean_curve = acc.mean(axis=0).tolist() if shortest else []
    var_curve = acc.var(axis=0).tolist() if shortest else []
    return Summary(
        mean_round=round_stats[0],
        min_round=round_stats[1],
        max_round=round_stats[2],
        mean_ms=time_stats[0],
        min_ms=time_stats[1],
        max_ms=time_stats[2],
        converged_runs=len(hits),
        total_runs=len(logs),
        per_round_accuracy_mean=mean_curve,
        per_round_accuracy_var=var_curve,
    )


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class RunTable:
    rows: list

    columns = RUN_COLUMNS
    kind = "runs"


@dataclass
class SummaryTable:
    rows: list

    columns = SUMMARY_COLUMNS
    kind = "summary"


def _int_ms(value: float) -> int:
    return int(round(float(value)))


def run_table(logs) -> RunTable:
    """Quantized run-level rows: times as integer ms, accuracy at 4 decimals."""
    rows = []
    for log in logs:
        for rec in log.records:
            rows.append(
                {
                    "seed": int(log.seed),
                    "round": int(rec.round),
                    "virtual_ms": _int_ms(rec.virtual_ms),
                    "wall_ms": _int_ms(rec.wall_ms),
                    "accuracy": round(float(rec.accuracy), 4),
                    "cum_bytes": int(rec.cum_bytes),
                }
            )
    return RunTable(rows)


def summary_row(e: int, b: int, k: int, scheme: str, summary: Summary) -> dict:
    def ms(value):
        return None if value is None else _int_ms(value)

    return {
        "e": int(e),
        "b": int(b),
        "k": int(k),
        "scheme": scheme,
        "mean_round": summary.mean_round,
        "min_round": summary.min_round,
        "max_round": summary.max_round,
        "mean_ms": ms(summary.mean_ms),
        "min_ms": ms(summary.min_ms),
        "max_ms": ms(summary.max_ms),
        "converged_runs": int(summary.converged_runs),
    }


def _format_cell(column: str, value) -> str:
    if value is None:
        return ""
    if column == "accuracy":
        return f"{value:.4f}"
    return str(value)


def write_report(table, path, format: str = "csv") -> None:
    """Write a RunTable or SummaryTable as CSV or JSON.

    An empty table still gets its header (CSV) or empty row list (JSON).
    """
    fmt = format.lower()
    if fmt not in ("csv", "json"):
        raise ValidationError(f"format must be 'csv' or 'json', got {format!r}")
    try:
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(table.columns)
                for row in table.rows:
                    writer.writerow(_format_cell(c, row.get(c)) for c in table.columns)
        else:
            payload = {
                "kind": table.kind,
                "columns": list(table.columns),
                "rows": table.rows,
            }
            with open(path, "w") as fh:
                json.dump(payload, fh, indent=2)
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc


def read_report(path):
    """Parse a JSON report back into its table form."""
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read report from {path}: {exc}") from exc
    if payload.get("kind") == "runs":
        return RunTable(payload["rows"])
    if payload.get("kind") == "summary":
        return SummaryTable(payload["rows"])
    raise ValidationError(f"unknown report kind {payload.get('kind')!r} in {path}")
