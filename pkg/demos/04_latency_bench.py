"""Time forward and backward passes against batch size.

Two properties worth seeing on any host: the backward pass costs more
than the forward pass once batches are non-trivial, and forward latency
grows monotonically with batch size. The CLI equivalent is
`edgefed bench --model cnn`.
"""

from edgefed import metrics

BATCHES = (1, 2, 4, 8, 16, 32)

for kind in ("cnn", "lstm"):
    samples = metrics.bench_latency(kind, BATCHES, runs=10, seed=0)
    print(f"{kind} latency, ms per pass (10 runs per cell):")
    print(f"  {'batch':>5} {'forward':>9} {'backward':>9} {'ratio':>6}")
    forward = {s.batch_size: s for s in samples if s.direction == "Forward"}
    backward = {s.batch_size: s for s in samples if s.direction == "Backward"}
    for b in BATCHES:
        f, back = forward[b].mean, backward[b].mean
        print(f"  {b:>5} {f:>9.3f} {back:>9.3f} {back / f:>6.2f}")
    print()
