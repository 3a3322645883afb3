"""Procedurally generated digit corpus in the IDX container format.

Ten fixed 5x7 glyphs are rendered at 3x scale onto a 28x28 canvas with
randomized placement, dilation, intensity, blur, and pixel noise. The
result is a self-contained stand-in corpus that exercises the full
ingestion -> partitioning -> training -> transport stack on machines
where the reference handwritten-digit files are not provisioned.
Published accuracy or timing comparisons should use the real dataset
(see the data-provisioning notes in the README).
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .data import write_idx

GLYPHS = [
    ".###.|#...#|#...#|#...#|#...#|#...#|.###.",  # 0
    "..#..|.##..|..#..|..#..|..#..|..#..|.###.",  # 1
    ".###.|#...#|....#|...#.|..#..|.#...|#####",  # 2
    ".###.|#...#|....#|..##.|....#|#...#|.###.",  # 3
    "...#.|..##.|.#.#.|#..#.|#####|...#.|...#.",  # 4
    "#####|#....|####.|....#|....#|#...#|.###.",  # 5
    "..##.|.#...|#....|####.|#...#|#...#|.###.",  # 6
    "#####|....#|...#.|...#.|..#..|..#..|..#..",  # 7
    ".###.|#...#|#...#|.###.|#...#|#...#|.###.",  # 8
    ".###.|#...#|#...#|.####|....#|...#.|.##..",  # 9
]

SCALE = 3
CANVAS = 28

TRAIN_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
TEST_FILES = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


def _glyph_masks() -> np.ndarray:
    masks = np.zeros((10, 7, 5), dtype=np.float64)
    for digit, glyph in enumerate(GLYPHS):
        for r, row in enumerate(glyph.split("|")):
            for c, ch in enumerate(row):
                masks[digit, r, c] = 1.0 if ch == "#" else 0.0
    return masks


_MASKS = _glyph_masks()
_GLYPH_H = 7 * SCALE
_GLYPH_W = 5 * SCALE


def _box_blur(img: np.ndarray) -> np.ndarray:
    padded = np.pad(img, 1, mode="edge")
    acc = np.zeros_like(img)
    for dy in range(3):
        for dx in range(3):
            acc += padded[dy : dy + CANVAS, dx : dx + CANVAS]
    return acc / 9.0


def render_digit(digit: int, rng: np.random.Generator) -> np.ndarray:
    """One randomized 28x28 uint8 rendering of the given digit."""
    glyph = np.kron(_MASKS[digit], np.ones((SCALE, SCALE)))
    oy = int(rng.integers(0, CANVAS - _GLYPH_H + 1))
    ox = int(rng.integers(0, CANVAS - _GLYPH_W + 1))
    intensity = rng.uniform(0.65, 1.0)
    dilate = rng.random() < 0.5
    if dilate:
        padded = np.pad(glyph, ((0, 1), (0, 1)))
        glyph = np.maximum(
            glyph, np.maximum(padded[1:, :-1], padded[:-1, 1:])
        )
    canvas = np.zeros((CANVAS, CANVAS), dtype=np.float64)
    canvas[oy : oy + _GLYPH_H, ox : ox + _GLYPH_W] = glyph * intensity
    canvas = _box_blur(canvas)
    canvas += rng.normal(0.0, 0.06, canvas.shape)
    np.clip(canvas, 0.0, 1.0, out=canvas)
    return (canvas * 255).astype(np.uint8)


def make_arrays(n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """n rendered images (n,28,28) uint8 with uniform-random labels."""
    rng = np.random.default_rng((int(seed), 5309))
    labels = rng.integers(0, 10, n).astype(np.uint8)
    images = np.empty((n, CANVAS, CANVAS), dtype=np.uint8)
    for i in range(n):
        images[i] = render_digit(int(labels[i]), rng)
    return images, labels


def write_corpus(out_dir, train_n: int = 12_000, test_n: int = 2_000, seed: int = 7) -> dict:
    """Write train/test IDX pairs under out_dir; returns the four paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_images, train_labels = make_arrays(train_n, seed)
    test_images, test_labels = make_arrays(test_n, seed + 1)
    paths = {
        "train_images": out / TRAIN_FILES[0],
        "train_labels": out / TRAIN_FILES[1],
        "test_images": out / TEST_FILES[0],
        "test_labels": out / TEST_FILES[1],
    }
    write_idx(paths["train_images"], train_images)
    write_idx(paths["train_labels"], train_labels)
    write_idx(paths["test_images"], test_images)
    write_idx(paths["test_labels"], test_labels)
    return paths


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Generate the synthetic digit corpus as IDX files."
    )
    parser.add_argument("out_dir", help="directory for the four IDX files")
    parser.add_argument("--train-n", type=int, default=12_000)
    parser.add_argument("--test-n", type=int, default=2_000)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)
    paths = write_corpus(args.out_dir, args.train_n, args.test_n, args.seed)
    for key, path in paths.items():
        print(f"{key:13s} {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
