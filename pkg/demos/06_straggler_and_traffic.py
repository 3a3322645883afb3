"""What one slow worker does to a synchronous round.

Worker 2 computes at 1.5x everyone else's time. The barrier makes the
round as long as the straggler's path, so the other four workers buy
idle time with their speed. The byte meter shows the flip side: traffic
per round is identical for everyone, slow or not.
"""

import tempfile
from pathlib import Path

import numpy as np

from edgefed import data, demodata, fedavg, transport

corpus = Path(tempfile.mkdtemp(prefix="edgefed-corpus-"))
demodata.write_corpus(corpus, train_n=1000, test_n=200, seed=7)
train = data.load_mnist(corpus / "train-images-idx3-ubyte",
                        corpus / "train-labels-idx1-ubyte")
test = data.load_mnist(corpus / "t10k-images-idx3-ubyte",
                       corpus / "t10k-labels-idx1-ubyte")

cfg = fedavg.FedConfig(k=5, e=2, b=16, lr=0.05, target_accuracy=1.0,
                       max_rounds=3, seeds=(1,), scheme="iid", model_kind="cnn")
link = transport.LinkModel(compute_multipliers={2: 1.5})
sim = transport.SimTransport(link, seed=1)
log = fedavg.run_until(cfg, (train, test), sim)

rounds = [rec.round for rec in log.records]
print(f"{len(rounds)} rounds with worker 2 at a 1.5x compute multiplier\n")
print(f"{'worker':>6} {'receive':>8} {'compute':>8} {'send':>7} {'idle':>8}   ms/round")
for wid in range(cfg.k):
    means = {}
    for phase in ("Receive", "Compute", "Send", "Idle"):
        cells = [p.virtual_ms for p in log.phases
                 if p.worker_id == wid and p.phase == phase]
        means[phase] = float(np.mean(cells))
    tag = "  <- straggler" if wid == 2 else ""
    print(f"{wid:>6} {means['Receive']:>8.1f} {means['Compute']:>8.1f} "
          f"{means['Send']:>7.1f} {means['Idle']:>8.1f}{tag}")

print("\nbytes per round per worker (broadcast down + update up):")
for wid in range(cfg.k):
    per_round = {sim.meter.round_total(wid, r) for r in rounds}
    assert len(per_round) == 1, "traffic should not vary by round"
    print(f"  worker {wid}: {per_round.pop():,} bytes every round")
