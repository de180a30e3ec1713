"""IDX parsing, the MNIST fetcher and a synthetic shift-invariant image prior."""

from __future__ import annotations

import gzip
import hashlib
import json
import struct
import urllib.request
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
UBYTE = 0x08

MNIST_FILES = {
    "train-images": "train-images-idx3-ubyte",
    "train-labels": "train-labels-idx1-ubyte",
    "test-images": "t10k-images-idx3-ubyte",
    "test-labels": "t10k-labels-idx1-ubyte",
}
MNIST_MIRRORS = (
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
)
SUBSET_PREFIX = "mnist5k"


class IDXError(ValueError):
    pass


class IDXMagicError(IDXError):
    pass


class IDXTruncatedError(IDXError):
    pass


class IDXDimensionError(IDXError):
    pass


def _read_bytes(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_idx(path, expected_magic: int | None = None) -> np.ndarray:
    """Parse a big-endian unsigned-byte IDX file (optionally gzipped)."""
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise IDXTruncatedError(f"{path}: shorter than the 4-byte magic")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic >> 16 != 0 or (magic >> 8) & 0xFF != UBYTE:
        raise IDXMagicError(f"{path}: magic 0x{magic:08x} is not an unsigned-byte IDX header")
    if expected_magic is not None and magic != expected_magic:
        raise IDXMagicError(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IDXTruncatedError(f"{path}: dimension header cut short")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims)) if ndim else 1
    if len(raw) < header + count:
        raise IDXTruncatedError(f"{path}: {len(raw) - header} payload bytes, header promises {count}")
    if len(raw) > header + count:
        raise IDXDimensionError(f"{path}: {len(raw) - header - count} bytes beyond the declared dimensions")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)


def write_idx(path, array) -> None:
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        raise TypeError("IDX writer handles unsigned bytes only")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", (UBYTE << 8) | arr.ndim))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def load_mnist(images_path, labels_path=None):
    """Images as (N, 784) rows in [0, 1]; labels (N,) or None."""
    imgs = read_idx(images_path, IMAGES_MAGIC)
    if imgs.ndim != 3:
        raise IDXDimensionError(f"image file has {imgs.ndim} dimensions, expected 3")
    x = imgs.reshape(imgs.shape[0], -1).astype(np.float64) / 255.0
    if labels_path is None:
        return x, None
    labels = read_idx(labels_path, LABELS_MAGIC)
    if labels.ndim != 1 or labels.shape[0] != imgs.shape[0]:
        raise IDXDimensionError(f"{labels.shape} labels for {imgs.shape[0]} images")
    return x, labels.astype(np.int64)


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _fetch_web(dest: Path, timeout: float):
    written = []
    for name in MNIST_FILES.values():
        last = None
        for mirror in MNIST_MIRRORS:
            try:
                with urllib.request.urlopen(mirror + name + ".gz", timeout=timeout) as resp:
                    (dest / name).write_bytes(gzip.decompress(resp.read()))
                break
            except Exception as exc:  # noqa: BLE001 - try the next mirror
                last = exc
        else:
            raise ConnectionError(f"could not download {name}: {last}")
        written.append(dest / name)
    return written


def _fetch_mlxtend(dest: Path):
    try:
        from mlxtend.data import mnist_data
    except ImportError as exc:
        raise ImportError("the bundled MNIST subset needs the optional 'mlxtend' package") from exc
    x, labels = mnist_data()
    imgs = np.asarray(x, dtype=np.uint8).reshape(-1, 28, 28)
    paths = (dest / f"{SUBSET_PREFIX}-images-idx3-ubyte", dest / f"{SUBSET_PREFIX}-labels-idx1-ubyte")
    write_idx(paths[0], imgs)
    write_idx(paths[1], np.asarray(labels, dtype=np.uint8))
    return list(paths)


def fetch(dest, source: str = "auto", timeout: float = 30.0) -> dict[str, str]:
    """Write raw MNIST IDX files into ``dest`` plus a ``checksums.json``.

    ``web`` downloads the official files; ``mlxtend`` writes the 5000-image
    subset bundled with mlxtend; ``auto`` tries the web first.
    """
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    if source == "web":
        paths = _fetch_web(dest, timeout)
    elif source == "mlxtend":
        paths = _fetch_mlxtend(dest)
    elif source == "auto":
        try:
            paths = _fetch_web(dest, timeout)
        except ConnectionError:
            paths = _fetch_mlxtend(dest)
    else:
        raise ValueError(f"unknown source {source!r}")
    sums = {p.name: sha256(p) for p in paths}
    (dest / "checksums.json").write_text(json.dumps(sums, indent=2, sort_keys=True) + "\n")
    return sums


def find_mnist(root):
    """(images, labels) paths in ``root``: the full training set if present, else the subset."""
    root = Path(root)
    for images, labels in ((MNIST_FILES["train-images"], MNIST_FILES["train-labels"]),
                           (f"{SUBSET_PREFIX}-images-idx3-ubyte", f"{SUBSET_PREFIX}-labels-idx1-ubyte")):
        for suffix in ("", ".gz"):
            if (root / (images + suffix)).exists():
                return root / (images + suffix), root / (labels + suffix)
    raise FileNotFoundError(f"no MNIST IDX files under {root}; run the fetch subcommand first")


def blob_images(count: int, side: int = 16, blobs: int = 3, seed=0) -> np.ndarray:
    """Sums of periodic Gaussian bumps at uniformly random torus positions.

    The law is invariant to cyclic shifts of the grid.  Values lie in [0, 1].
    """
    rng = np.random.default_rng(seed)
    r = np.arange(side)
    out = np.zeros((count, side, side))
    for i in range(count):
        for _ in range(blobs):
            cy, cx = rng.uniform(0, side, size=2)
            width = rng.uniform(1.0, 2.5)
            amp = rng.uniform(0.4, 1.0)
            dy = (r - cy + side / 2) % side - side / 2
            dx = (r - cx + side / 2) % side - side / 2
            out[i] += amp * np.exp(-(dy[:, None] ** 2 + dx[None, :] ** 2) / (2 * width**2))
    return np.clip(out, 0.0, 1.0).reshape(count, side * side)
