#!/usr/bin/env python3
"""Write IDX files from the 5000-digit MNIST subset shipped in the mlxtend wheel.

Usage: extract_mnist_subset.py <mlxtend wheel or mnist_5k.csv.gz> <out dir>

Each CSV row is 784 pixel bytes followed by the label.
"""
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_rows(src: Path):
    if src.suffix == ".whl":
        with zipfile.ZipFile(src) as z:
            raw = z.read(MEMBER)
    else:
        raw = src.read_bytes()
    text = gzip.decompress(raw).decode()
    rows = []
    for line in io.StringIO(text):
        line = line.strip()
        if not line:
            continue
        values = [int(float(v)) for v in line.split(",")]
        if len(values) != 785:
            raise ValueError(f"expected 785 columns, got {len(values)}")
        rows.append(values)
    return rows


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    rows = read_rows(Path(sys.argv[1]))
    out = Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    n = len(rows)
    with open(out / "train-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        for r in rows:
            f.write(bytes(r[:784]))
    with open(out / "train-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(bytes(r[784] for r in rows))
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    main()
