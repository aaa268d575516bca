"""Core dataset types: image pools, labeled/unlabeled partitions, challenge specs.

Images live as float32 arrays of shape (N, 28, 28) with values in [0, 1];
every example carries a provenance tag (clean / ambiguous / duplicated).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .idx import read_idx_pair

TAG_CLEAN = 0
TAG_AMBIGUOUS = 1
TAG_DUPLICATED = 2
TAG_NAMES = {TAG_CLEAN: "clean", TAG_AMBIGUOUS: "ambiguous", TAG_DUPLICATED: "duplicated"}


class DatasetError(ValueError):
    """A dataset violates its structural invariants."""


@dataclass
class ImageDataset:
    """Images, integer labels and per-example provenance tags for one split."""

    images: np.ndarray  # float32 (N, 28, 28) in [0, 1]
    labels: np.ndarray  # int64 (N,) in {0..num_classes-1}
    source_tags: np.ndarray  # uint8 (N,), TAG_* codes
    num_classes: int

    def __len__(self) -> int:
        return self.images.shape[0]

    def subset(self, indices: np.ndarray) -> "ImageDataset":
        indices = np.asarray(indices)
        return ImageDataset(
            images=self.images[indices],
            labels=self.labels[indices],
            source_tags=self.source_tags[indices],
            num_classes=self.num_classes,
        )

    def content_hash(self) -> str:
        """SHA-256 over raw array bytes; stable across container formats."""
        h = hashlib.sha256()
        h.update(np.int64(self.images.shape).tobytes())
        h.update(np.ascontiguousarray(self.images, dtype=np.float32).tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.source_tags, dtype=np.uint8).tobytes())
        h.update(np.int64(self.num_classes).tobytes())
        return h.hexdigest()


def validate_dataset(ds: ImageDataset) -> None:
    """Raise DatasetError if any ImageDataset invariant is violated."""
    n = ds.images.shape[0]
    if n <= 0:
        raise DatasetError("dataset is empty")
    if ds.images.ndim != 3:
        raise DatasetError(f"images must be (N, H, W), got shape {ds.images.shape}")
    if ds.labels.shape != (n,):
        raise DatasetError(f"labels shape {ds.labels.shape} != ({n},)")
    if ds.source_tags.shape != (n,):
        raise DatasetError(f"source_tags shape {ds.source_tags.shape} != ({n},)")
    if ds.images.min() < 0.0 or ds.images.max() > 1.0:
        raise DatasetError("pixel values outside [0, 1]")
    if ds.labels.min() < 0 or ds.labels.max() >= ds.num_classes:
        raise DatasetError(f"labels outside 0..{ds.num_classes - 1}")
    if not np.isin(ds.source_tags, list(TAG_NAMES)).all():
        raise DatasetError("unknown source tag code")


def make_dataset(images: np.ndarray, labels: np.ndarray, num_classes: int,
                 tags: np.ndarray | None = None) -> ImageDataset:
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if tags is None:
        tags = np.full(len(labels), TAG_CLEAN, dtype=np.uint8)
    ds = ImageDataset(images=images, labels=labels,
                      source_tags=np.asarray(tags, dtype=np.uint8), num_classes=num_classes)
    validate_dataset(ds)
    return ds


def load_idx(images_path: str | Path, labels_path: str | Path,
             num_classes: int = 10) -> ImageDataset:
    """Ingest an IDX image/label pair, scaling pixels to [0, 1] by 1/255."""
    images, labels = read_idx_pair(images_path, labels_path)
    return make_dataset(images.astype(np.float32) / 255.0, labels, num_classes)


@dataclass(frozen=True)
class PoolPartition:
    """Disjoint labeled/unlabeled index sets over a training dataset.

    ``labeled_idx`` preserves acquisition order and is append-only across
    rounds; ``unlabeled_idx`` is kept sorted ascending.
    """

    labeled_idx: tuple[int, ...]
    unlabeled_idx: tuple[int, ...]

    @classmethod
    def initial(cls, n: int, labeled: "np.ndarray | list[int] | tuple[int, ...]" = ()) -> "PoolPartition":
        labeled = tuple(int(i) for i in labeled)
        rest = sorted(set(range(n)) - set(labeled))
        part = cls(labeled_idx=labeled, unlabeled_idx=tuple(rest))
        part.validate(n)
        return part

    def with_labeled(self, new_indices) -> "PoolPartition":
        """Move ``new_indices`` from the unlabeled to the labeled side, in order."""
        new = tuple(int(i) for i in new_indices)
        unlabeled = set(self.unlabeled_idx)
        for i in new:
            if i not in unlabeled:
                raise DatasetError(f"index {i} is not in the unlabeled pool")
        if len(set(new)) != len(new):
            raise DatasetError("duplicate indices in acquisition batch")
        return PoolPartition(
            labeled_idx=self.labeled_idx + new,
            unlabeled_idx=tuple(sorted(unlabeled - set(new))),
        )

    def validate(self, n: int) -> None:
        lab, unl = set(self.labeled_idx), set(self.unlabeled_idx)
        if len(lab) != len(self.labeled_idx):
            raise DatasetError("labeled_idx contains duplicates")
        if lab & unl:
            raise DatasetError("labeled and unlabeled sets overlap")
        if lab | unl != set(range(n)):
            raise DatasetError("partition does not cover 0..N-1")


class ChallengeKind(str, Enum):
    BCI = "bci"
    BCS = "bcs"
    WCI = "wci"
    NONE = "none"


@dataclass(frozen=True)
class ChallengeSpec:
    """Parameters for one challenge construction; only the active kind's fields are read."""

    kind: ChallengeKind
    seed: int = 0
    minority_fraction: float = 0.1  # BCI
    minority_class_count: int | None = None  # BCI, default C // 2
    clean_fraction: float = 0.05  # BCS
    subclusters_k: int = 300  # WCI
    noise_sigma: float = 0.05  # WCI

    def __post_init__(self):
        for name in ("minority_fraction", "clean_fraction"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        if self.subclusters_k < 1:
            raise ValueError(f"subclusters_k must be >= 1, got {self.subclusters_k}")
        if self.noise_sigma < 0.0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


def class_histogram(ds: ImageDataset) -> np.ndarray:
    """Per-class example counts; zero counts are reported, counts sum to N."""
    return np.bincount(ds.labels, minlength=ds.num_classes)


def distance_profile(ds: ImageDataset, mode: str, probe_size: int,
                     seed: int = 0) -> np.ndarray:
    """Summed pixel-space distances of each probe example to probe peers.

    ``mode`` is "within_class" (distances to same-class probe members) or
    "between_class" (distances to other-class probe members). Returns the
    per-example sums sorted descending; examples with no peer in the chosen
    relation are omitted, so a single-class dataset yields an empty
    between-class summary.
    """
    if mode not in ("within_class", "between_class"):
        raise ValueError(f"unknown mode {mode!r}")
    if probe_size > len(ds):
        raise ValueError(f"probe_size {probe_size} exceeds dataset size {len(ds)}")
    rng = np.random.default_rng(seed)
    probe = rng.choice(len(ds), size=probe_size, replace=False)
    flat = ds.images[probe].reshape(probe_size, -1).astype(np.float64)
    labels = ds.labels[probe]
    sums, counts = np.zeros(probe_size), np.zeros(probe_size, dtype=np.int64)
    # Chunked pairwise distances keep memory flat for large probes.
    for start in range(0, probe_size, 512):
        stop = min(start + 512, probe_size)
        d = np.sqrt(np.maximum(
            ((flat[start:stop, None, :] - flat[None, :, :]) ** 2).sum(-1), 0.0))
        same = labels[start:stop, None] == labels[None, :]
        if mode == "within_class":
            rel = same.copy()
            rel[np.arange(start, stop) - start, np.arange(start, stop)] = False
        else:
            rel = ~same
        sums[start:stop] = (d * rel).sum(axis=1)
        counts[start:stop] = rel.sum(axis=1)
    out = sums[counts > 0]
    return np.sort(out)[::-1]


# ---------------------------------------------------------------------------
# Challenge manifests and on-disk artifacts
# ---------------------------------------------------------------------------

MANIFEST_SCHEMA_VERSION = 1


def challenge_manifest(ds: ImageDataset, spec: ChallengeSpec,
                       minority_classes: list[int] | None = None) -> dict:
    hist = class_histogram(ds)
    tags = {TAG_NAMES[code]: int((ds.source_tags == code).sum()) for code in TAG_NAMES}
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "kind": spec.kind.value,
        "seed": spec.seed,
        "spec": {
            "minority_fraction": spec.minority_fraction,
            "minority_class_count": spec.minority_class_count,
            "clean_fraction": spec.clean_fraction,
            "subclusters_k": spec.subclusters_k,
            "noise_sigma": spec.noise_sigma,
        },
        "n": len(ds),
        "num_classes": ds.num_classes,
        "per_class_counts": hist.tolist(),
        "tag_counts": tags,
        "content_hash": ds.content_hash(),
    }
    if minority_classes is not None:
        manifest["minority_classes"] = [int(c) for c in minority_classes]
    return manifest


def save_challenge(dir_path: str | Path, name: str, ds: ImageDataset,
                   manifest: dict) -> tuple[Path, Path]:
    """Write <name>.npz + <name>.manifest.json; returns both paths."""
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    data_path = dir_path / f"{name}.npz"
    manifest_path = dir_path / f"{name}.manifest.json"
    np.savez_compressed(
        data_path, images=ds.images, labels=ds.labels,
        source_tags=ds.source_tags, num_classes=np.int64(ds.num_classes))
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return data_path, manifest_path


def load_challenge(dir_path: str | Path, name: str) -> tuple[ImageDataset, dict]:
    dir_path = Path(dir_path)
    with np.load(dir_path / f"{name}.npz") as z:
        ds = ImageDataset(
            images=z["images"], labels=z["labels"],
            source_tags=z["source_tags"], num_classes=int(z["num_classes"]))
    manifest = json.loads((dir_path / f"{name}.manifest.json").read_text())
    return ds, manifest


def verify_manifest(ds: ImageDataset, manifest: dict) -> list[str]:
    """Recompute the manifest's certificates; returns a list of problems (empty = ok)."""
    problems = []
    if manifest.get("content_hash") != ds.content_hash():
        problems.append("content hash mismatch")
    if manifest.get("n") != len(ds):
        problems.append(f"size mismatch: manifest {manifest.get('n')} vs data {len(ds)}")
    if manifest.get("per_class_counts") != class_histogram(ds).tolist():
        problems.append("per-class counts mismatch")
    tags = {TAG_NAMES[code]: int((ds.source_tags == code).sum()) for code in TAG_NAMES}
    if manifest.get("tag_counts") != tags:
        problems.append("tag counts mismatch")
    try:
        validate_dataset(ds)
    except DatasetError as e:
        problems.append(f"invariant violation: {e}")
    return problems
