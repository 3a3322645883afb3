"""Download the four MNIST IDX files into ./data/mnist.

Needs outbound network access, so run it on a connected machine and
copy the directory over if this one is sandboxed. The accuracy-target
tests and the stock configs look for the files under ./data/mnist or
$EDGEFED_MNIST_DIR.
"""

import gzip
import sys
import urllib.error
import urllib.request
from pathlib import Path

FILES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)

MIRRORS = (
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
)

out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data/mnist")
out_dir.mkdir(parents=True, exist_ok=True)

for name in FILES:
    target = out_dir / name
    if target.exists():
        print(f"{target} already present, skipping")
        continue
    for mirror in MIRRORS:
        url = f"{mirror}{name}.gz"
        try:
            print(f"fetching {url}")
            with urllib.request.urlopen(url, timeout=60) as resp:
                target.write_bytes(gzip.decompress(resp.read()))
            print(f"  wrote {target} ({target.stat().st_size:,} bytes)")
            break
        except (urllib.error.URLError, OSError) as exc:
            print(f"  failed: {exc}")
    else:
        sys.exit(f"could not fetch {name} from any mirror")

print(f"\nall four files ready under {out_dir}")
