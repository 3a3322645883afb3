"""Command-line entry point.

Subcommands:
    bench   latency of forward/backward passes vs. batch size
    run     a federated experiment from a config file
    sweep   the same experiment across several E values
    worker  one TCP worker process for a tcp-mode config

Exit codes: 0 success/converged, 2 usage or config error,
3 not converged, 4 protocol error, 5 connectivity failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import data, fedavg, metrics, models, transport
from .config import ExperimentConfig, load_config
from .errors import EdgefedError, FormatError, ProtocolError, ValidationError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3
EXIT_PROTOCOL = 4
EXIT_CONNECT = 5


def _parse_int_list(raw: str, flag: str) -> list[int]:
    try:
        values = [int(part.strip()) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ValidationError(f"{flag}: expected comma-separated integers, got {raw!r}")
    if not values:
        raise ValidationError(f"{flag}: expected at least one value")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgefed",
        description="Federated averaging experiments at desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="time forward/backward passes per batch size")
    bench.add_argument("--model", required=True, choices=models.MODEL_KINDS)
    bench.add_argument("--batches", default="1,2,4,8,16,32",
                       help="comma-separated batch sizes")
    bench.add_argument("--runs", type=int, default=metrics.DEFAULT_BENCH_RUNS)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", default=None, help="CSV output path")
    bench.set_defaults(func=cmd_bench)

    run = sub.add_parser("run", help="run a federated experiment from a config file")
    run.add_argument("config", help="experiment config file")
    run.add_argument("--out-dir", default=None, help="override the output directory")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run the experiment across several E values")
    sweep.add_argument("config", help="experiment config file")
    sweep.add_argument("--e-values", default="10,20,30,40",
                       help="comma-separated local-batch counts")
    sweep.add_argument("--out-dir", default=None)
    sweep.set_defaults(func=cmd_sweep)

    worker = sub.add_parser("worker", help="one TCP worker process")
    worker.add_argument("config", help="experiment config file (tcp transport)")
    worker.add_argument("--worker-id", type=int, required=True)
    worker.set_defaults(func=cmd_worker)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

BENCH_COLUMNS = ("model", "direction", "batch_size", "mean_ms", "min_ms", "max_ms", "std_ms")


def _write_bench_csv(samples, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BENCH_COLUMNS)
        for s in samples:
            writer.writerow(
                [s.model_kind, s.direction.lower(), s.batch_size,
                 f"{s.mean:.3f}", f"{s.min:.3f}", f"{s.max:.3f}", f"{s.std:.3f}"]
            )


def _print_bench_table(samples) -> None:
    print(f"{'model':<6} {'direction':<9} {'batch':>5} "
          f"{'mean_ms':>9} {'min_ms':>9} {'max_ms':>9} {'std_ms':>8}")
    for s in samples:
        print(f"{s.model_kind:<6} {s.direction.lower():<9} {s.batch_size:>5} "
              f"{s.mean:>9.3f} {s.min:>9.3f} {s.max:>9.3f} {s.std:>8.3f}")


def cmd_bench(args) -> int:
    try:
        batch_sizes = _parse_int_list(args.batches, "--batches")
        samples = metrics.bench_latency(args.model, batch_sizes, runs=args.runs,
                                        seed=args.seed)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _print_bench_table(samples)
    if args.out:
        _write_bench_csv(samples, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# run / sweep
# ---------------------------------------------------------------------------


def _load_datasets(cfg: ExperimentConfig, seed: int):
    train = data.load_mnist(cfg.train_images, cfg.train_labels)
    test = data.load_mnist(cfg.test_images, cfg.test_labels)
    if cfg.subsample_train and cfg.subsample_train < len(train):
        train = data.subsample(train, cfg.subsample_train, seed)
    return train, test


def _print_first_hit_table(logs, target: float) -> None:
    print(f"{'seed':>6} {'converged':<9} {'first_round':>11} {'virtual_ms':>12} "
          f"{'final_acc':>9}")
    for log in logs:
        hit = metrics.first_hit(log, target)
        final = log.records[-1].accuracy if log.records else float("nan")
        if hit is None:
            print(f"{log.seed:>6} {'no':<9} {'-':>11} {'-':>12} {final:>9.4f}")
        else:
            print(f"{log.seed:>6} {'yes':<9} {hit.round:>11} "
                  f"{int(round(hit.virtual_ms)):>12} {final:>9.4f}")


def _execute_config(cfg: ExperimentConfig):
    """Run every configured seed and return (logs, summary)."""
    fed = cfg.fed
    if cfg.transport_mode == "tcp":
        seed = fed.seeds[0]
        datasets = _load_datasets(cfg, seed)
        server = transport.TcpServerTransport(cfg.host, cfg.port, fed.k)
        try:
            print(f"listening on {server.host}:{server.port}, "
                  f"waiting for {fed.k} workers")
            server.wait_for_workers()
            log = run_log = fedavg.run_until(fed, datasets, server, seed)
            server.shutdown(run_log.records[-1].round if run_log.records else 0)
        finally:
            server.close()
        return [log], metrics.summarize([log], fed.target_accuracy)

    logs = []
    for seed in fed.seeds:
        datasets = _load_datasets(cfg, seed)
        sim = transport.SimTransport(cfg.link, seed)
        logs.append(fedavg.run_until(fed, datasets, sim, seed))
    return logs, metrics.summarize(logs, fed.target_accuracy)


def _resolve_out_dir(cfg: ExperimentConfig, override) -> Path:
    out_dir = Path(override) if override else cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        logs, summary = _execute_config(cfg)
    except (ProtocolError, FormatError) as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except ConnectionError as exc:
        print(f"connection error: {exc}", file=sys.stderr)
        return EXIT_CONNECT
    except EdgefedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out_dir = _resolve_out_dir(cfg, args.out_dir)
    fed = cfg.fed
    metrics.write_report(metrics.run_table(logs), out_dir / "runs.csv", "csv")
    row = metrics.summary_row(fed.e, fed.b, fed.k, fed.scheme, summary)
    metrics.write_report(metrics.SummaryTable([row]), out_dir / "summary.csv", "csv")
    metrics.write_report(metrics.SummaryTable([row]), out_dir / "summary.json", "json")
    _print_first_hit_table(logs, fed.target_accuracy)
    print(f"converged {summary.converged_runs}/{summary.total_runs} runs; "
          f"reports in {out_dir}")
    return EXIT_OK if summary.converged_runs == summary.total_runs else EXIT_NOT_CONVERGED


def cmd_sweep(args) -> int:
    try:
        cfg = load_config(args.config)
        e_values = _parse_int_list(args.e_values, "--e-values")
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    rows = []
    all_converged = True
    for e in e_values:
        cell = replace(cfg, fed=replace(cfg.fed, e=e))
        try:
            logs, summary = _execute_config(cell)
        except EdgefedError as exc:
            print(f"E={e}: failed: {exc}", file=sys.stderr)
            rows.append(metrics.summary_row(e, cfg.fed.b, cfg.fed.k, cfg.fed.scheme,
                                            metrics.Summary(None, None, None, None,
                                                            None, None, 0, 0, [], [])))
            all_converged = False
            continue
        rows.append(metrics.summary_row(e, cfg.fed.b, cfg.fed.k, cfg.fed.scheme, summary))
        print(f"E={e}: converged {summary.converged_runs}/{summary.total_runs}, "
              f"mean round {summary.mean_round}")
        if summary.converged_runs != summary.total_runs:
            all_converged = False

    out_dir = _resolve_out_dir(cfg, args.out_dir)
    metrics.write_report(metrics.SummaryTable(rows), out_dir / "sweep.csv", "csv")
    metrics.write_report(metrics.SummaryTable(rows), out_dir / "sweep.json", "json")
    print(f"sweep reports in {out_dir}")
    return EXIT_OK if all_converged else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------------------
# worker
# ---------------------------------------------------------------------------


def cmd_worker(args) -> int:
    try:
        cfg = load_config(args.config)
        if cfg.transport_mode != "tcp":
            raise ValidationError("[transport] mode: worker needs a tcp-mode config")
        if not 0 <= args.worker_id < cfg.fed.k:
            raise ValidationError(
                f"--worker-id: must be in [0, {cfg.fed.k}), got {args.worker_id}"
            )
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    fed = cfg.fed
    seed = fed.seeds[0]
    train, _ = _load_datasets(cfg, seed)
    shards = fedavg.make_shards(fed, train, seed)
    worker = fedavg.Worker(
        args.worker_id, shards[args.worker_id], fed,
        model_seed=seed, stream_seed=(seed, args.worker_id),
    )
    client = transport.TcpWorkerClient(cfg.host, cfg.port, args.worker_id)
    try:
        client.connect()
        client.register()
        rounds = client.serve(worker)
    except ConnectionError as exc:
        print(f"connection error: {exc}", file=sys.stderr)
        return EXIT_CONNECT
    except (ProtocolError, FormatError, EdgefedError) as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    finally:
        client.close()
    print(f"worker {args.worker_id} done after {rounds} rounds")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
