#!/usr/bin/env python3
"""Write a 5,000-image MNIST subset as gzipped IDX files.

The images come from the mnist_5k.csv.gz table bundled in the mlxtend wheel
(784 pixel columns followed by the label). The wheel is fetched with pip when
no local copy is given. Images are split per class, 4/5 into the training
files and 1/5 into the test files, keeping the original order.
"""
import argparse
import gzip
import io
import pathlib
import struct
import subprocess
import sys
import tempfile
import zipfile

CSV_MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def fetch_wheel(dest: pathlib.Path) -> pathlib.Path:
    subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps",
                    "-d", str(dest), "mlxtend==0.24.0"], check=True)
    return next(dest.glob("mlxtend-*.whl"))


def write_idx(path: pathlib.Path, magic: int, dims, payload: bytes) -> None:
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    # mtime=0 keeps the archives byte-stable across regenerations.
    with open(path, "wb") as raw:
        with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as gz:
            gz.write(header + payload)


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--wheel", type=pathlib.Path)
    ap.add_argument("--out", type=pathlib.Path, default=pathlib.Path("data/mnist5k"))
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel or fetch_wheel(pathlib.Path(tmp))
        with zipfile.ZipFile(wheel) as z:
            text = gzip.decompress(z.read(CSV_MEMBER)).decode()

    by_class = {c: [] for c in range(10)}
    for line in text.splitlines():
        cols = [int(float(v)) for v in line.split(",")]
        pixels, label = cols[:-1], cols[-1]
        assert len(pixels) == 784 and 0 <= label <= 9
        by_class[label].append(bytes(pixels))

    train, test = [], []
    for c in range(10):
        rows = by_class[c]
        cut = len(rows) * 4 // 5
        train += [(c, r) for r in rows[:cut]]
        test += [(c, r) for r in rows[cut:]]

    args.out.mkdir(parents=True, exist_ok=True)
    for prefix, rows in (("train", train), ("t10k", test)):
        write_idx(args.out / f"{prefix}-images-idx3-ubyte.gz", 0x00000803,
                  (len(rows), 28, 28), b"".join(r for _, r in rows))
        write_idx(args.out / f"{prefix}-labels-idx1-ubyte.gz", 0x00000801,
                  (len(rows),), bytes(c for c, _ in rows))
        print(f"{prefix}: {len(rows)} images")
    return 0


if __name__ == "__main__":
    sys.exit(main())
