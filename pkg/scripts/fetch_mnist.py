#!/usr/bin/env python3
"""Download the MNIST IDX files into data/mnist/ (or a given directory).

Repository tooling only: the library itself never touches the network, and
the test suite skips the MNIST-dependent cases when these files are absent.

Usage:
    python3 scripts/fetch_mnist.py [--out data/mnist]
"""

from __future__ import annotations

import argparse
import gzip
import sys
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


def fetch(name: str, out_dir: Path) -> None:
    target = out_dir / name
    if target.exists():
        print(f"{target} already present")
        return
    last_err: Exception | None = None
    for mirror in MIRRORS:
        url = f"{mirror}{name}.gz"
        try:
            print(f"downloading {url}")
            with urllib.request.urlopen(url, timeout=60) as resp:
                payload = gzip.decompress(resp.read())
            target.write_bytes(payload)
            print(f"wrote {target} ({len(payload)} bytes)")
            return
        except Exception as exc:  # try the next mirror
            last_err = exc
            print(f"  failed: {exc}")
    raise SystemExit(f"could not download {name}: {last_err}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/mnist", help="target directory")
    args = parser.parse_args()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in FILES:
        fetch(name, out_dir)
    print(f"done; point CYBER0_MNIST_DIR at {out_dir} if it is not the default")
    return 0


if __name__ == "__main__":
    sys.exit(main())
