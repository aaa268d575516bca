"""Constructors for the three challenge variants of a base image corpus.

All generators are pure functions of (inputs, spec): identical arguments give
bit-identical outputs.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.cluster import KMeans

from .datasets import (
    TAG_AMBIGUOUS,
    TAG_CLEAN,
    TAG_DUPLICATED,
    ChallengeKind,
    ChallengeSpec,
    DatasetError,
    ImageDataset,
    class_histogram,
    validate_dataset,
)


class ChallengeGenerationError(ValueError):
    """The challenge spec is infeasible for the supplied base corpus."""


def pick_minority_classes(num_classes: int, spec: ChallengeSpec) -> np.ndarray:
    """Seed-determined choice of floor(C/2) (or spec override) minority classes."""
    count = spec.minority_class_count
    if count is None:
        count = num_classes // 2
    if not 0 < count < num_classes:
        raise ChallengeGenerationError(
            f"minority class count {count} must be in 1..{num_classes - 1}")
    rng = np.random.default_rng(spec.seed)
    return np.sort(rng.choice(num_classes, size=count, replace=False))


def generate_bci(base: ImageDataset, spec: ChallengeSpec) -> ImageDataset:
    """Between-class imbalance: subsample half the classes to ~10% of their size.

    Minority classes are drawn uniformly per challenge seed; survivors keep
    their relative order, non-minority classes pass through untouched.
    """
    if spec.kind is not ChallengeKind.BCI:
        raise ValueError(f"spec kind is {spec.kind}, expected BCI")
    minority = pick_minority_classes(base.num_classes, spec)
    hist = class_histogram(base)
    targets = {int(c): int(round(spec.minority_fraction * hist[c])) for c in minority}
    if min(targets.values()) < 1:
        raise ChallengeGenerationError(
            f"minority_fraction {spec.minority_fraction} leaves an empty class "
            f"(smallest target {min(targets.values())})")
    rng = np.random.default_rng(spec.seed + 1)
    keep = np.ones(len(base), dtype=bool)
    for c in minority:
        members = np.flatnonzero(base.labels == c)
        survivors = rng.choice(members, size=targets[int(c)], replace=False)
        keep[members] = False
        keep[survivors] = True
    return base.subset(np.flatnonzero(keep))


def generate_bcs(base: ImageDataset, ambiguous: ImageDataset,
                 spec: ChallengeSpec) -> ImageDataset:
    """Between-class similarity: mix a clean sliver of the base corpus into an
    ambiguous pool (default 5% clean / 95% ambiguous), shuffled by seed."""
    if spec.kind is not ChallengeKind.BCS:
        raise ValueError(f"spec kind is {spec.kind}, expected BCS")
    if base.images.shape[1:] != ambiguous.images.shape[1:]:
        raise ChallengeGenerationError("base and ambiguous image shapes differ")
    if base.num_classes != ambiguous.num_classes:
        raise ChallengeGenerationError("base and ambiguous class counts differ")
    n_out = len(base)
    n_clean = int(round(spec.clean_fraction * n_out))
    n_amb = n_out - n_clean
    if n_amb > len(ambiguous):
        raise ChallengeGenerationError(
            f"ambiguous pool has {len(ambiguous)} examples, {n_amb} required")
    rng = np.random.default_rng(spec.seed)
    clean_part = base.subset(rng.choice(len(base), size=n_clean, replace=False))
    clean_part.source_tags[:] = TAG_CLEAN
    parts = [clean_part]
    if n_amb > 0:
        amb_part = ambiguous.subset(rng.choice(len(ambiguous), size=n_amb, replace=False))
        amb_part.source_tags[:] = TAG_AMBIGUOUS
        parts.append(amb_part)
    images = np.concatenate([p.images for p in parts])
    labels = np.concatenate([p.labels for p in parts])
    tags = np.concatenate([p.source_tags for p in parts])
    order = rng.permutation(n_out)
    return ImageDataset(images=images[order], labels=labels[order],
                        source_tags=tags[order], num_classes=base.num_classes)


def generate_wci(base: ImageDataset, spec: ChallengeSpec) -> ImageDataset:
    """Within-class imbalance via per-class subclustering.

    Per class: k-means (k = spec.subclusters_k, seeded) on flattened pixels;
    the largest cluster (ties: lowest cluster index) becomes the majority
    subclass. Each non-majority cluster keeps exactly one instance, the one
    nearest its centroid (tagged clean). The class is refilled to its original
    count with noisy copies of the majority-cluster instances (tagged
    duplicated): copies tile the majority members round-robin and receive
    i.i.d. Gaussian pixel noise clipped to [0, 1].
    """
    if spec.kind is not ChallengeKind.WCI:
        raise ValueError(f"spec kind is {spec.kind}, expected WCI")
    k = spec.subclusters_k
    hist = class_histogram(base)
    if hist.min() < k:
        raise ChallengeGenerationError(
            f"smallest class has {hist.min()} instances, fewer than k={k}")
    images_out, labels_out, tags_out = [], [], []
    for c in range(base.num_classes):
        members = np.flatnonzero(base.labels == c)
        flat = base.images[members].reshape(len(members), -1)
        km = KMeans(n_clusters=k, init="k-means++", n_init=1, max_iter=100,
                    tol=1e-4, random_state=spec.seed + c)
        assign = km.fit_predict(flat)
        sizes = np.bincount(assign, minlength=k)
        majority = int(np.argmax(sizes))  # argmax takes the lowest index on ties
        singles = []
        for cluster in range(k):
            if cluster == majority:
                continue
            in_cluster = np.flatnonzero(assign == cluster)
            d = ((flat[in_cluster] - km.cluster_centers_[cluster]) ** 2).sum(axis=1)
            singles.append(members[in_cluster[np.argmin(d)]])
        singles = np.array(sorted(singles))
        majority_members = members[assign == majority]
        n_copies = len(members) - len(singles)
        sources = majority_members[np.arange(n_copies) % len(majority_members)]
        rng = np.random.default_rng(spec.seed + 1000 + c)
        copies = base.images[sources]
        if spec.noise_sigma > 0:
            noise = rng.normal(0.0, spec.noise_sigma, size=copies.shape)
            copies = np.clip(copies + noise, 0.0, 1.0).astype(np.float32)
        images_out.append(base.images[singles])
        images_out.append(copies)
        labels_out.append(np.full(len(singles) + n_copies, c, dtype=np.int64))
        tags_out.append(np.full(len(singles), TAG_CLEAN, dtype=np.uint8))
        tags_out.append(np.full(n_copies, TAG_DUPLICATED, dtype=np.uint8))
    return ImageDataset(
        images=np.concatenate(images_out),
        labels=np.concatenate(labels_out),
        source_tags=np.concatenate(tags_out),
        num_classes=base.num_classes,
    )


def generate_challenge(base: ImageDataset, spec: ChallengeSpec,
                       ambiguous: ImageDataset | None = None) -> ImageDataset:
    """Dispatch on spec.kind; NONE passes the base corpus through unchanged."""
    if spec.kind is ChallengeKind.NONE:
        return base
    if spec.kind is ChallengeKind.BCI:
        out = generate_bci(base, spec)
    elif spec.kind is ChallengeKind.WCI:
        out = generate_wci(base, spec)
    elif spec.kind is ChallengeKind.BCS:
        if ambiguous is None:
            raise ChallengeGenerationError("BCS requires an ambiguous corpus")
        out = generate_bcs(base, ambiguous, spec)
    else:
        raise ValueError(f"unknown challenge kind {spec.kind}")
    validate_dataset(out)
    return out


# ---------------------------------------------------------------------------
# Ambiguous corpus: external-artifact adapter and offline fallback synthesizer
# ---------------------------------------------------------------------------


def load_ambiguous_corpus(samples_path: str | Path, labels_path: str | Path,
                          num_classes: int = 10) -> ImageDataset:
    """Adapter for published ambiguous-corpus tensor files.

    Accepts samples shaped (N, 28, 28) or (N, 1, 28, 28) and labels shaped
    (N,) or (N, K); multi-label rows are expanded by repeating each sample
    once per label, matching the artifact's published usage.
    """
    import torch

    samples = torch.load(Path(samples_path), map_location="cpu")
    labels = torch.load(Path(labels_path), map_location="cpu")
    images = np.asarray(samples, dtype=np.float32)
    if images.ndim == 4:
        images = images.squeeze(1)
    if images.ndim != 3:
        raise DatasetError(f"ambiguous samples have shape {images.shape}")
    if images.max() > 1.0 + 1e-6:
        images = images / 255.0
    images = np.clip(images, 0.0, 1.0)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim == 2:
        reps = labels.shape[1]
        images = np.repeat(images, reps, axis=0)
        labels = labels.reshape(-1)
    tags = np.full(len(labels), TAG_AMBIGUOUS, dtype=np.uint8)
    ds = ImageDataset(images=images, labels=labels, source_tags=tags,
                      num_classes=num_classes)
    validate_dataset(ds)
    return ds


def synthesize_ambiguous_corpus(base: ImageDataset, n: int, seed: int = 0) -> ImageDataset:
    """Offline stand-in for the external ambiguous corpus.

    Each output is a convex pixel blend of two base instances from different
    classes; the label is inherited from the dominant component and the
    secondary blend weight is drawn from U[0.35, 0.5].
    """
    rng = np.random.default_rng(seed)
    a = rng.integers(0, len(base), size=n)
    b = rng.integers(0, len(base), size=n)
    clash = base.labels[a] == base.labels[b]
    while clash.any():
        b[clash] = rng.integers(0, len(base), size=int(clash.sum()))
        clash = base.labels[a] == base.labels[b]
    w = rng.uniform(0.35, 0.5, size=n).astype(np.float32)[:, None, None]
    images = np.clip((1.0 - w) * base.images[a] + w * base.images[b], 0.0, 1.0)
    ds = ImageDataset(
        images=images.astype(np.float32),
        labels=base.labels[a].copy(),
        source_tags=np.full(n, TAG_AMBIGUOUS, dtype=np.uint8),
        num_classes=base.num_classes,
    )
    validate_dataset(ds)
    return ds
