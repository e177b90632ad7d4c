"""Datasets, IID partitioning and IDX / CSV readers."""

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from robustfed.errors import DataError, FormatError, UsageError

# IDX type code -> (numpy big-endian dtype, byte width)
IDX_TYPES = {
    0x08: (">u1", 1),
    0x09: (">i1", 1),
    0x0B: (">i2", 2),
    0x0C: (">i4", 4),
    0x0D: (">f4", 4),
    0x0E: (">f8", 8),
}
IDX_CODES = {np.dtype(v[0]).newbyteorder("="): k for k, v in IDX_TYPES.items()}


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim != 2:
            raise DataError(f"features must be a 2-D matrix, got shape {x.shape}")
        y = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if y.shape[0] != x.shape[0]:
            raise DataError(f"{x.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.all(np.isfinite(x)):
            raise DataError("features contain non-finite values")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise DataError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)

    def head(self, n: Optional[int]) -> "Dataset":
        if n is None or n >= len(self):
            return self
        return self.subset(np.arange(n))


def partition_iid(dataset: Dataset, num_clients: int, rng: np.random.Generator) -> List[Dataset]:
    """Shuffle and split into ``num_clients`` disjoint shards of near-equal size.

    The remainder goes one example each to the first shards, so 101 examples
    over 10 clients gives sizes [11, 10, ..., 10].
    """
    if num_clients < 1:
        raise UsageError("num_clients must be >= 1")
    if num_clients > len(dataset):
        raise UsageError(f"cannot split {len(dataset)} examples over {num_clients} clients")
    order = rng.permutation(len(dataset))
    base, extra = divmod(len(dataset), num_clients)
    shards, start = [], 0
    for i in range(num_clients):
        size = base + (1 if i < extra else 0)
        shards.append(dataset.subset(order[start : start + size]))
        start += size
    return shards


# -- IDX ---------------------------------------------------------------------


def _read_bytes(path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx(raw: bytes) -> np.ndarray:
    """Decode an IDX byte string (big-endian header, then the payload)."""
    if len(raw) < 4:
        raise FormatError("truncated IDX magic number", offset=len(raw))
    zero, code, ndim = struct.unpack(">HBB", raw[:4])
    if zero != 0 or code not in IDX_TYPES or ndim == 0:
        raise FormatError(f"bad IDX magic number 0x{int.from_bytes(raw[:4], 'big'):08x}", offset=0)
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise FormatError("truncated IDX dimension header", offset=len(raw))
    shape = struct.unpack(f">{ndim}I", raw[4:header_end])
    dtype, width = IDX_TYPES[code]
    expected = int(np.prod(shape, dtype=np.int64)) * width
    payload = raw[header_end:]
    if len(payload) != expected:
        raise FormatError(
            f"IDX payload holds {len(payload)} bytes, shape {shape} needs {expected}",
            offset=header_end + min(len(payload), expected),
        )
    return np.frombuffer(payload, dtype=dtype).reshape(shape).astype(dtype[1:])


def read_idx(path) -> np.ndarray:
    return parse_idx(_read_bytes(path))


def write_idx(path, array: np.ndarray) -> None:
    array = np.asarray(array)
    code = IDX_CODES.get(array.dtype.newbyteorder("="))
    if code is None:
        raise UsageError(f"dtype {array.dtype} has no IDX type code")
    header = struct.pack(">HBB", 0, code, array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    payload = array.astype(IDX_TYPES[code][0]).tobytes()
    Path(path).write_bytes(header + payload)


def _scale_features(x: np.ndarray, source: str) -> np.ndarray:
    if x.dtype == np.uint8:
        return x.astype(np.float64) / 255.0
    x = x.astype(np.float64)
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise FormatError(f"{source}: non-byte features must already lie in [0, 1]")
    return x


def load_idx(images_path, labels_path=None, num_classes: Optional[int] = None) -> Dataset:
    """Read an IDX image file (and optional label file) into a flattened dataset.

    Byte pixels are divided by 255. Without a label file every label is 0.
    """
    images = read_idx(images_path)
    x = _scale_features(images.reshape(images.shape[0], -1), str(images_path))
    if labels_path is None:
        y = np.zeros(x.shape[0], dtype=np.int64)
    else:
        y = read_idx(labels_path).reshape(-1).astype(np.int64)
    if num_classes is None:
        num_classes = int(y.max()) + 1 if y.size else 1
    return Dataset(x, y, num_classes)


# -- CSV ---------------------------------------------------------------------


def load_csv(path, num_classes: Optional[int] = None) -> Dataset:
    """Read ``label,f1,f2,...`` rows. A non-numeric first row is taken as a header.

    Features already in [0, 1] are kept; features in [0, 255] are divided by 255.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if lines:
        try:
            float(lines[0].split(",")[0])
        except ValueError:
            lines = lines[1:]
    if not lines:
        raise FormatError(f"{path}: no data rows")
    rows = []
    for lineno, ln in enumerate(lines, 1):
        try:
            rows.append([float(v) for v in ln.split(",")])
        except ValueError as exc:
            raise FormatError(f"{path}: row {lineno}: {exc}") from None
    widths = {len(r) for r in rows}
    if len(widths) != 1 or widths.pop() < 2:
        raise FormatError(f"{path}: rows must all have a label and at least one feature")
    m = np.array(rows)
    y = m[:, 0]
    if not np.all(y == np.round(y)):
        raise FormatError(f"{path}: labels must be integers")
    x = m[:, 1:]
    if x.min() >= 0.0 and x.max() > 1.0 and x.max() <= 255.0:
        x = x / 255.0
    elif x.min() < 0.0 or x.max() > 1.0:
        raise FormatError(f"{path}: features must lie in [0, 1] or [0, 255]")
    y = y.astype(np.int64)
    if num_classes is None:
        num_classes = int(y.max()) + 1
    return Dataset(x, y, num_classes)


# -- built-in desk-scale data ------------------------------------------------


def load_digits(test_size: int = 500, seed: int = 0) -> Tuple[Dataset, Dataset]:
    """The 8x8 handwritten-digit set shipped with scikit-learn, split train/test.

    Pixel intensities (0..16) are scaled into [0, 1]. The split is a fixed
    shuffle under ``seed``.
    """
    from sklearn.datasets import load_digits as _sk_digits

    bunch = _sk_digits()
    x = bunch.data / 16.0
    y = bunch.target.astype(np.int64)
    order = np.random.default_rng(seed).permutation(len(y))
    test, train = order[:test_size], order[test_size:]
    return Dataset(x[train], y[train], 10), Dataset(x[test], y[test], 10)
