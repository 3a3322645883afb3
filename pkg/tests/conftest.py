import os
import re
from pathlib import Path

import pytest
from hypothesis import settings

from edgefed import data, demodata

settings.register_profile("suite", deadline=None, max_examples=25)
settings.load_profile("suite")

MNIST_FILES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)

MNIST_HINT = (
    "real MNIST IDX files not found: set EDGEFED_MNIST_DIR or place the four "
    "files under ./data/mnist (see demos/fetch_mnist.py); the synthetic demo "
    "corpus is not a stand-in for accuracy targets"
)


def mnist_dir():
    candidates = []
    env = os.environ.get("EDGEFED_MNIST_DIR")
    if env:
        candidates.append(Path(env))
    candidates.append(Path(__file__).resolve().parent.parent / "data" / "mnist")
    for cand in candidates:
        if all((cand / name).exists() for name in MNIST_FILES):
            return cand
    return None


@pytest.fixture(scope="session")
def mnist():
    """(train, test) Datasets from real MNIST IDX files, if provisioned."""
    found = mnist_dir()
    if found is None:
        pytest.skip(MNIST_HINT)
    train = data.load_mnist(found / MNIST_FILES[0], found / MNIST_FILES[1])
    test = data.load_mnist(found / MNIST_FILES[2], found / MNIST_FILES[3])
    return train, test


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """Synthetic glyph corpus written as IDX files."""
    out = tmp_path_factory.mktemp("corpus")
    demodata.write_corpus(out, train_n=4000, test_n=800, seed=7)
    return out


@pytest.fixture(scope="session")
def corpus(corpus_dir):
    train = data.load_mnist(
        corpus_dir / "train-images-idx3-ubyte", corpus_dir / "train-labels-idx1-ubyte"
    )
    test = data.load_mnist(
        corpus_dir / "t10k-images-idx3-ubyte", corpus_dir / "t10k-labels-idx1-ubyte"
    )
    return train, test


_CRITERION = re.compile(r"::test_criterion_(\d+[a-z]?)_(\w+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = {}
    for outcome, verdict in (("passed", "PASS"), ("failed", "FAIL"),
                             ("error", "FAIL"), ("skipped", "SKIP")):
        for rep in terminalreporter.stats.get(outcome, ""):
            match = _CRITERION.search(getattr(rep, "nodeid", ""))
            if not match:
                continue
            label, name = match.groups()
            note = ""
            if verdict == "SKIP" and isinstance(rep.longrepr, tuple):
                note = " (" + rep.longrepr[2].removeprefix("Skipped: ") + ")"
            lines[label] = f"CRITERION {label} {name}: {verdict}{note}"
    if lines:
        terminalreporter.section("acceptance criteria")
        for label in sorted(lines):
            terminalreporter.write_line(lines[label])
