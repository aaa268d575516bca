"""Bit-exact reader/writer for the IDX image/label file format.

Layout (all integers big-endian):
  images: magic 0x00000803, count, rows, cols, then count*rows*cols uint8 pixels
  labels: magic 0x00000801, count, then count uint8 labels

Files ending in ``.gz`` are transparently decompressed/compressed.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Magic number or header does not match the IDX spec."""


class IdxConsistencyError(ValueError):
    """Image and label files disagree on the item count."""


class IdxIOError(IOError):
    """Payload is truncated or otherwise unreadable."""


def _open(path: str | Path, mode: str):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode)
    return open(path, mode)


def _read_exact(f, n: int, path, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise IdxIOError(f"{path}: truncated {what} (wanted {n} bytes, got {len(data)})")
    return data


def read_idx_images(path: str | Path) -> np.ndarray:
    """Read an IDX image file into a uint8 array of shape (n, rows, cols)."""
    with _open(path, "rb") as f:
        header = _read_exact(f, 16, path, "image header")
        magic, n, rows, cols = struct.unpack(">IIII", header)
        if magic != IMAGES_MAGIC:
            raise IdxFormatError(
                f"{path}: bad image magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}"
            )
        payload = _read_exact(f, n * rows * cols, path, "image payload")
        extra = f.read(1)
    if extra:
        raise IdxFormatError(f"{path}: trailing bytes after image payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(n, rows, cols)


def read_idx_labels(path: str | Path) -> np.ndarray:
    """Read an IDX label file into a uint8 array of shape (n,)."""
    with _open(path, "rb") as f:
        header = _read_exact(f, 8, path, "label header")
        magic, n = struct.unpack(">II", header)
        if magic != LABELS_MAGIC:
            raise IdxFormatError(
                f"{path}: bad label magic 0x{magic:08x}, expected 0x{LABELS_MAGIC:08x}"
            )
        payload = _read_exact(f, n, path, "label payload")
        extra = f.read(1)
    if extra:
        raise IdxFormatError(f"{path}: trailing bytes after label payload")
    return np.frombuffer(payload, dtype=np.uint8)


def read_idx_pair(images_path: str | Path, labels_path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read an (images, labels) IDX pair, checking the counts agree."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxConsistencyError(
            f"item count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels"
        )
    return images, labels


def write_idx_images(path: str | Path, images: np.ndarray) -> None:
    """Write a uint8 (n, rows, cols) array as an IDX image file."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError(f"expected (n, rows, cols), got shape {images.shape}")
    n, rows, cols = images.shape
    with _open(path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGES_MAGIC, n, rows, cols))
        f.write(images.tobytes())


def write_idx_labels(path: str | Path, labels: np.ndarray) -> None:
    """Write a uint8 (n,) array as an IDX label file."""
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if labels.ndim != 1:
        raise ValueError(f"expected (n,), got shape {labels.shape}")
    with _open(path, "wb") as f:
        f.write(struct.pack(">II", LABELS_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())
