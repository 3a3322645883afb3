"""Split a dataset across workers two ways: IID and by label pairs.

IID sharding hands every worker a lookalike slice of the whole
distribution. Label-pair sharding gives each worker only two digit
classes, the classic pathological split for federated averaging: no
worker can learn the full task alone.
"""

import tempfile
from collections import Counter
from pathlib import Path

from edgefed import data, demodata

# A self-contained corpus of rendered digit glyphs, written in the same
# IDX container format the loaders expect from the real files.
corpus = Path(tempfile.mkdtemp(prefix="edgefed-corpus-"))
demodata.write_corpus(corpus, train_n=2000, test_n=400, seed=7)
train = data.load_mnist(corpus / "train-images-idx3-ubyte",
                        corpus / "train-labels-idx1-ubyte")
print(f"corpus: {len(train)} training samples in {corpus}\n")


def label_histogram(shard):
    counts = Counter(shard.shard_labels().tolist())
    return " ".join(f"{d}:{counts.get(d, 0)}" for d in range(10))


print("IID split, 5 workers:")
for shard in data.partition_iid(train, k=5, seed=1):
    print(f"  worker {shard.worker_id}: {len(shard):>4} samples  "
          f"{label_histogram(shard)}")

pairs = ((0, 1), (2, 3), (4, 5), (6, 7), (8, 9))
print("\nlabel-pair split, one digit pair per worker:")
for shard in data.partition_label_pairs(train, pairs, seed=1):
    print(f"  worker {shard.worker_id}: {len(shard):>4} samples  "
          f"{label_histogram(shard)}")

# Batch streams draw from a shard with a fresh shuffle per epoch, and
# their position survives between rounds, so training never repeats the
# same batch order.
shard = data.partition_iid(train, k=5, seed=1)[0]
stream = data.BatchStream(shard, b=16, seed=(1, 0))
first = [int(y[0]) for _, y in stream.take(3)]
print(f"\nfirst label of three streamed batches from worker 0: {first}")
