"""Dataset ingestion from IDX containers, worker partitioning, seeded
batch streams, and synthetic benchmark inputs.

The IDX container is the classic big-endian binary layout: a 4-byte magic
(two zero bytes, a type code, and the rank), one 4-byte big-endian size
per dimension, then the raw unsigned-byte payload.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConsistencyError, FormatError, ValidationError

IDX_UBYTE = 0x08
IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

SYNTHETIC_SHAPES = {
    "cnn": (1, 28, 28),
    "lstm": (8, 1024),
    "mlp": (3072,),
}
_KIND_TAGS = {"cnn": 11, "lstm": 12, "mlp": 13}

PARTITION_SCHEMES = ("iid", "label_pairs")


def _seed_tuple(seed) -> tuple:
    if isinstance(seed, (int, np.integer)):
        seed = (int(seed),)
    try:
        out = tuple(int(s) for s in seed)
    except (TypeError, ValueError):
        raise ValidationError(f"seed must be an int or a sequence of ints, got {seed!r}")
    if any(s < 0 for s in out):
        raise ValidationError(f"seed components must be non-negative, got {out}")
    return out


# ---------------------------------------------------------------------------
# IDX container
# ---------------------------------------------------------------------------


def read_idx(path) -> np.ndarray:
    """Parse one IDX file into a uint8 array of the rank the header declares."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4:
        raise OSError(f"truncated IDX file {path}: {len(raw)} bytes, header needs 4")
    if raw[0] != 0 or raw[1] != 0 or raw[2] != IDX_UBYTE:
        magic = struct.unpack(">I", raw[:4])[0]
        raise FormatError(f"bad IDX magic 0x{magic:08x} in {path}", offset=0)
    ndim = raw[3]
    if ndim < 1 or ndim > 3:
        raise FormatError(f"unsupported IDX rank {ndim} in {path}", offset=3)
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise OSError(
            f"truncated IDX file {path}: {len(raw)} bytes, header needs {header_len}"
        )
    dims = struct.unpack(f">{ndim}I", raw[4:header_len])
    count = 1
    for d in dims:
        count *= d
    found = len(raw) - header_len
    if found < count:
        raise OSError(
            f"truncated IDX file {path}: payload has {found} bytes, header declares {count}"
        )
    if found > count:
        raise FormatError(
            f"{found - count} trailing bytes after IDX payload in {path}",
            offset=header_len + count,
        )
    return np.frombuffer(raw, np.uint8, count, header_len).reshape(dims).copy()


def write_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array of rank 1-3 as an IDX file."""
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise ValidationError(f"IDX payload must be uint8, got {array.dtype}")
    if array.ndim < 1 or array.ndim > 3:
        raise ValidationError(f"IDX rank must be 1-3, got {array.ndim}")
    with open(path, "wb") as fh:
        fh.write(bytes([0, 0, IDX_UBYTE, array.ndim]))
        fh.write(struct.pack(f">{array.ndim}I", *array.shape))
        fh.write(array.tobytes())


# ---------------------------------------------------------------------------
# Dataset and shards
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Dataset:
    """Float32 inputs in [0,1] plus integer labels, index-aligned."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1:
            raise ValidationError(f"labels must be 1-D, got {self.labels.ndim}-D")
        if self.images.shape[0] != self.labels.shape[0]:
            raise ConsistencyError(
                f"{self.images.shape[0]} images vs {self.labels.shape[0]} labels"
            )
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise ValidationError(
                f"pixels must lie in [0,1], got range "
                f"[{self.images.min():.4g}, {self.images.max():.4g}]"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= 10):
            raise ValidationError(
                f"labels must lie in [0,10), got range "
                f"[{self.labels.min()}, {self.labels.max()}]"
            )

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(self.images[indices], self.labels[indices])


def load_mnist(images_path, labels_path) -> Dataset:
    """Load an images/labels IDX pair; pixels are scaled by 1/255."""
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.ndim != 3:
        raise FormatError(
            f"expected images magic 0x{IMAGES_MAGIC:08x} in {images_path}, "
            f"found rank-{images.ndim} data (magic 0x{0x800 | images.ndim:08x})",
            offset=0,
        )
    if labels.ndim != 1:
        raise FormatError(
            f"expected labels magic 0x{LABELS_MAGIC:08x} in {labels_path}, "
            f"found rank-{labels.ndim} data (magic 0x{0x800 | labels.ndim:08x})",
            offset=0,
        )
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(
            f"image/label count mismatch: {images.shape[0]} images in {images_path}, "
            f"{labels.shape[0]} labels in {labels_path}"
        )
    scaled = images.astype(np.float32) / np.float32(255.0)
    return Dataset(scaled[:, None, :, :], labels.astype(np.int64))


def subsample(ds: Dataset, n: int, seed) -> Dataset:
    """Seeded without-replacement subsample of n items."""
    if n < 1 or n > len(ds):
        raise ValidationError(f"subsample size must be in [1, {len(ds)}], got {n}")
    idx = np.random.default_rng(_seed_tuple(seed)).permutation(len(ds))[:n]
    return ds.subset(idx)


@dataclass(eq=False, frozen=True)
class Shard:
    """Immutable index view of one worker's slice of a dataset."""

    dataset: Dataset
    indices: np.ndarray
    worker_id: int
    scheme: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))
        if self.scheme not in PARTITION_SCHEMES:
            raise ValidationError(
                f"unknown partition scheme {self.scheme!r}; expected one of {PARTITION_SCHEMES}"
            )
        if self.worker_id < 0:
            raise ValidationError(f"worker id must be non-negative, got {self.worker_id}")
        if len(np.unique(self.indices)) != len(self.indices):
            raise ValidationError(f"shard for worker {self.worker_id} repeats indices")
        if self.indices.size and (
            self.indices.min() < 0 or self.indices.max() >= len(self.dataset)
        ):
            raise ValidationError(f"shard indices out of range for worker {self.worker_id}")

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    def shard_labels(self) -> np.ndarray:
        return self.dataset.labels[self.indices]

    def batch(self, positions) -> tuple[np.ndarray, np.ndarray]:
        """Materialize the samples at the given within-shard positions."""
        idx = self.indices[np.asarray(positions)]
        return self.dataset.images[idx], self.dataset.labels[idx]


def partition_iid(ds: Dataset, k: int, seed) -> list[Shard]:
    """Seeded global shuffle split into k near-equal contiguous slices.

    The remainder of len(ds) mod k goes to the first shards, one extra
    sample each.
    """
    if k < 1:
        raise ValidationError(f"worker count must be >= 1, got {k}")
    if k > len(ds):
        raise ValidationError(f"worker count {k} exceeds dataset size {len(ds)}")
    perm = np.random.default_rng(_seed_tuple(seed)).permutation(len(ds))
    base, rem = divmod(len(ds), k)
    shards = []
    start = 0
    for i in range(k):
        size = base + (1 if i < rem else 0)
        shards.append(Shard(ds, perm[start : start + size], i, "iid"))
        start += size
    return shards


def partition_label_pairs(ds: Dataset, pairs, seed=0) -> list[Shard]:
    """One shard per label pair; shard i holds exactly the samples whose
    label is in pairs[i], in seeded-shuffled order."""
    pairs = [tuple(int(v) for v in pair) for pair in pairs]
    if not pairs:
        raise ValidationError("at least one label pair is required")
    flat: list[int] = []
    for pair in pairs:
        flat.extend(pair)
    if len(set(flat)) != len(flat):
        dupes = sorted({v for v in flat if flat.count(v) > 1})
        raise ValidationError(f"label pairs overlap on labels {dupes}")
    present = set(np.unique(ds.labels).tolist())
    missing = sorted(present - set(flat))
    if missing:
        raise ValidationError(f"dataset labels {missing} not covered by any pair")
    base = _seed_tuple(seed)
    shards = []
    for i, pair in enumerate(pairs):
        idx = np.flatnonzero(np.isin(ds.labels, pair))
        order = np.random.default_rng((*base, i)).permutation(len(idx))
        shards.append(Shard(ds, idx[order], i, "label_pairs"))
    return shards


# ---------------------------------------------------------------------------
# Batch streams
# ---------------------------------------------------------------------------


class BatchStream:
    """Seeded without-replacement batch iterator over one shard.

    Each epoch is a fresh permutation keyed by (seed, epoch). When fewer
    than a full batch remains, the stream reshuffles into the next epoch
    and continues there, so every request yields full batches only.
    """

    def __init__(self, shard: Shard, b: int, seed):
        if b < 1:
            raise ValidationError(f"batch size must be >= 1, got {b}")
        if b > len(shard):
            raise ValidationError(f"batch size {b} exceeds shard size {len(shard)}")
        self.shard = shard
        self.b = b
        self._seed = _seed_tuple(seed)
        self._epoch = 0
        self._pos = 0
        self._perm = self._permutation(0)

    def _permutation(self, epoch: int) -> np.ndarray:
        rng = np.random.default_rng((*self._seed, epoch))
        return rng.permutation(len(self.shard))

    def take(self, count: int) -> list[tuple[np.ndarray, np.ndarray]]:
        if count < 0:
            raise ValidationError(f"batch count must be >= 0, got {count}")
        out = []
        for _ in range(count):
            if self._pos + self.b > len(self.shard):
                self._epoch += 1
                self._perm = self._permutation(self._epoch)
                self._pos = 0
            positions = self._perm[self._pos : self._pos + self.b]
            self._pos += self.b
            out.append(self.shard.batch(positions))
        return out


def batches(shard: Shard, b: int, seed, count: int):
    """Exactly `count` full batches from a fresh stream."""
    return BatchStream(shard, b, seed).take(count)


def synthetic_batch(kind: str, b: int, seed=0) -> np.ndarray:
    """Seeded uniform-[0,1) input tensor of the given model kind's shape."""
    if kind not in SYNTHETIC_SHAPES:
        raise ValidationError(
            f"unknown input kind {kind!r}; expected one of {tuple(SYNTHETIC_SHAPES)}"
        )
    if b < 1:
        raise ValidationError(f"batch size must be >= 1, got {b}")
    rng = np.random.default_rng((*_seed_tuple(seed), _KIND_TAGS[kind], b))
    return rng.random((b, *SYNTHETIC_SHAPES[kind]), dtype=np.float32)
