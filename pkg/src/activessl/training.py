"""Seeded training engine: cross-entropy on the labeled pool with the
train-to-99%-accuracy early-stopping rule."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch
import torch.nn.functional as F

from .datasets import ImageDataset, PoolPartition
from .network import ModelState


class EmptyPoolError(ValueError):
    """Training requires at least one labeled example."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    max_epochs: int = 50
    early_stop_train_acc: float = 0.99
    batch_size_labeled: int = 64
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.early_stop_train_acc <= 1.0:
            raise ValueError("early_stop_train_acc must be in (0, 1]")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.batch_size_labeled < 1:
            raise ValueError("batch_size_labeled must be >= 1")


def mix_seed(*parts: int) -> int:
    """Deterministic seed derivation for independent RNG streams."""
    h = np.uint64(0x9E3779B97F4A7C15)
    for p in parts:
        h = (h ^ np.uint64(p & 0xFFFFFFFFFFFFFFFF)) * np.uint64(0xBF58476D1CE4E5B9)
        h &= np.uint64(0xFFFFFFFFFFFFFFFF)
    return int(h % np.uint64(2**63 - 1))


def dataset_tensors(ds: ImageDataset) -> tuple[torch.Tensor, torch.Tensor]:
    images = torch.as_tensor(ds.images).unsqueeze(1)
    labels = torch.as_tensor(ds.labels)
    return images, labels


def labeled_accuracy(net, images: torch.Tensor, labels: torch.Tensor,
                     idx: torch.Tensor, batch_size: int = 2048) -> float:
    """Un-augmented accuracy over the labeled pool (drives early stopping)."""
    correct = 0
    with torch.no_grad():
        for start in range(0, len(idx), batch_size):
            batch = idx[start:start + batch_size]
            pred = net(images[batch]).argmax(dim=1)
            correct += int((pred == labels[batch]).sum())
    return correct / len(idx)


def fit_supervised(m: ModelState, ds: ImageDataset, pool: PoolPartition,
                   tc: TrainConfig,
                   on_epoch_end: Callable[[int, object], None] | None = None) -> ModelState:
    """Train a copy of ``m`` on the labeled pool only.

    Runs at most tc.max_epochs epochs, stopping after the first epoch whose
    labeled-pool accuracy reaches tc.early_stop_train_acc. The per-epoch
    (mean batch loss, train accuracy) pairs land in the returned state's
    train_log.
    """
    if len(pool.labeled_idx) == 0:
        raise EmptyPoolError("labeled pool is empty")
    state = m.clone()
    state.train_log = []
    net = state.net
    images, labels = dataset_tensors(ds)
    lab = torch.as_tensor(np.asarray(pool.labeled_idx, dtype=np.int64))
    opt = torch.optim.Adam(net.parameters(), lr=tc.learning_rate)
    g = torch.Generator().manual_seed(tc.seed)
    b = min(tc.batch_size_labeled, len(lab))
    for epoch in range(tc.max_epochs):
        perm = lab[torch.randperm(len(lab), generator=g)]
        losses = []
        for start in range(0, len(perm), b):
            batch = perm[start:start + b]
            loss = F.cross_entropy(net(images[batch]), labels[batch])
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        acc = labeled_accuracy(net, images, labels, lab)
        state.train_log.append((float(np.mean(losses)), acc))
        if on_epoch_end is not None:
            on_epoch_end(epoch, net)
        if acc >= tc.early_stop_train_acc:
            break
    return state


def evaluate_accuracy(m: ModelState, test: ImageDataset) -> float:
    """Fraction of argmax predictions matching the test labels."""
    if len(test) == 0:
        raise ValueError("test set is empty")
    from .network import predict_logits

    pred = predict_logits(m, test.images).argmax(axis=1)
    return float((pred == test.labels).mean())
