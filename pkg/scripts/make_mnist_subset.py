"""Write the 5000-image MNIST subset shipped with mlxtend as gzipped IDX files.

Usage: python3 scripts/make_mnist_subset.py [OUT_DIR]

OUT_DIR defaults to $QENSEMBLE_DATA_DIR/mnist (or ~/.cache/qensemble/mnist),
which is where `qensemble prepare mnist-*` looks. Use this when the full
MNIST files cannot be downloaded; the subset has 500 images per digit.
"""

import sys
from pathlib import Path

import numpy as np
from mlxtend.data import mnist_data

from qensemble.cli import data_dir
from qensemble.data import write_idx


def main(argv):
    out = Path(argv[1]) if len(argv) > 1 else data_dir() / "mnist"
    out.mkdir(parents=True, exist_ok=True)
    x, y = mnist_data()
    write_idx(out / "train-images-idx3-ubyte.gz", out / "train-labels-idx1-ubyte.gz",
              x.astype(np.uint8).reshape(-1, 28, 28), y)
    print(f"wrote {len(y)} images to {out}")


if __name__ == "__main__":
    main(sys.argv)
