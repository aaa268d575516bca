"""The four training regimes: supervised, pseudo-labeling, FixMatch-style
consistency, and FlexMatch-style curriculum thresholds.

Shared rules across learners:
  * labeled examples always enter the loss with weight 1;
  * an unlabeled example only ever contributes its model-predicted
    pseudo-label, never its ground truth (ground truth feeds diagnostics
    records exclusively);
  * with an empty unlabeled pool every learner reduces to the supervised
    engine with identical seeds, hence identical parameter trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
import torch
import torch.nn.functional as F

from .augment import AugmentationPolicy, strong_augment, weak_augment
from .datasets import ImageDataset, PoolPartition
from .network import ModelState, NetworkConfig, init_model, predict_proba
from .training import (
    EmptyPoolError,
    TrainConfig,
    dataset_tensors,
    fit_supervised,
    labeled_accuracy,
    mix_seed,
)


class Learner(str, Enum):
    SPV = "spv"
    PL = "pl"
    FIXMATCH = "fixmatch"
    FLEXMATCH = "flexmatch"


@dataclass(frozen=True)
class LearnerKind:
    kind: Learner = Learner.SPV
    tau: float = 0.95  # confidence threshold for pseudo-labels
    lambda_u: float = 1.0  # unlabeled loss weight
    mu: int = 7  # unlabeled:labeled batch ratio for consistency learners

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must be in (0, 1)")
        if self.lambda_u < 0.0:
            raise ValueError("lambda_u must be >= 0")
        if self.mu < 1:
            raise ValueError("mu must be >= 1")


@dataclass
class PseudoLabelRecord:
    """Per-epoch bookkeeping of the pseudo-labels admitted over the threshold."""

    round: int
    epoch: int
    class_counts: np.ndarray  # length-C confident counts per predicted class
    confident_correct: int
    confident_total: int
    class_thresholds: np.ndarray | None = None  # FlexMatch tau_c snapshot

    def __post_init__(self):
        if self.confident_total != int(self.class_counts.sum()):
            raise ValueError("confident_total must equal the class-count sum")
        if self.confident_correct > self.confident_total:
            raise ValueError("confident_correct exceeds confident_total")


@dataclass
class FlexThresholdState:
    """Curriculum state: per-class learning counters and effective thresholds."""

    sigma: np.ndarray  # per-class counts of confidently pseudo-labeled pool points
    thresholds: np.ndarray  # effective per-class thresholds, in (0, tau]
    warmup: bool  # True while unused pool points dominate the counters


def select_confident(probs: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rows whose max probability reaches tau: (row indices, argmax labels,
    confidences), in stable input order."""
    probs = np.asarray(probs)
    conf = probs.max(axis=1)
    labels = probs.argmax(axis=1)
    rows = np.flatnonzero(conf >= tau)
    return rows, labels[rows], conf[rows]


def flex_threshold_state(status: np.ndarray, num_classes: int, tau: float) -> FlexThresholdState:
    """FlexMatch curriculum thresholds from the learning-status array.

    ``status`` holds -1 for pool points never confidently predicted, else the
    class of their latest confident prediction. Normalization follows the
    cited curriculum scheme with threshold warm-up:
    beta_c = sigma_c / max(max_c sigma_c, #unused), tau_c = tau * beta_c/(2-beta_c),
    floored at 1/C (a max-probability never falls below 1/C, so the floor
    only keeps thresholds in their documented range).
    """
    sigma = np.bincount(status[status >= 0], minlength=num_classes)
    unused = int((status < 0).sum())
    if unused == len(status):
        return FlexThresholdState(sigma=sigma, thresholds=np.full(num_classes, tau),
                                  warmup=True)
    denom = max(int(sigma.max()), unused)
    beta = sigma / denom
    thresholds = np.maximum(tau * beta / (2.0 - beta), 1.0 / num_classes)
    return FlexThresholdState(sigma=sigma, thresholds=thresholds,
                              warmup=unused > int(sigma.max()))


def _record_from_stats(stats: dict[int, tuple[int, bool]], num_classes: int,
                       round_index: int, epoch: int,
                       thresholds: np.ndarray | None = None) -> PseudoLabelRecord:
    counts = np.zeros(num_classes, dtype=np.int64)
    correct = 0
    for pl, ok in stats.values():
        counts[pl] += 1
        correct += int(ok)
    return PseudoLabelRecord(
        round=round_index, epoch=epoch, class_counts=counts,
        confident_correct=correct, confident_total=int(counts.sum()),
        class_thresholds=None if thresholds is None else thresholds.copy())


def fit_pseudo_label(ds: ImageDataset, pool: PoolPartition, tc: TrainConfig,
                     kind: LearnerKind = LearnerKind(Learner.PL),
                     net_cfg: NetworkConfig = NetworkConfig(),
                     round_index: int = 0,
                     on_epoch_end: Callable[[int, object], None] | None = None,
                     ) -> tuple[ModelState, list[PseudoLabelRecord]]:
    """Pseudo-labeling: each epoch re-scores the unlabeled pool with the
    current model, keeps predictions over kind.tau, and trains one epoch on
    labeled + pseudo-labeled examples with weight kind.lambda_u on the
    pseudo part."""
    if len(pool.labeled_idx) == 0:
        raise EmptyPoolError("labeled pool is empty")
    if len(pool.unlabeled_idx) == 0:
        return fit_supervised(init_model(net_cfg, tc.seed), ds, pool, tc,
                              on_epoch_end=on_epoch_end), []
    state = init_model(net_cfg, tc.seed)
    net = state.net
    images, labels = dataset_tensors(ds)
    lab = np.asarray(pool.labeled_idx, dtype=np.int64)
    unl = np.asarray(pool.unlabeled_idx, dtype=np.int64)
    true_unl = ds.labels[unl]  # diagnostics only
    opt = torch.optim.Adam(net.parameters(), lr=tc.learning_rate)
    g = torch.Generator().manual_seed(tc.seed)
    records: list[PseudoLabelRecord] = []
    for epoch in range(tc.max_epochs):
        probs = predict_proba(state, ds.images[unl])
        rows, pls, _ = select_confident(probs, kind.tau)
        counts = np.bincount(pls, minlength=ds.num_classes)
        records.append(PseudoLabelRecord(
            round=round_index, epoch=epoch, class_counts=counts,
            confident_correct=int((pls == true_unl[rows]).sum()),
            confident_total=int(counts.sum())))
        combined = torch.as_tensor(np.concatenate([lab, unl[rows]]))
        targets = torch.as_tensor(np.concatenate([ds.labels[lab], pls]))
        weights = torch.cat([torch.ones(len(lab)),
                             torch.full((len(rows),), float(kind.lambda_u))])
        perm = torch.randperm(len(combined), generator=g)
        b = min(tc.batch_size_labeled, len(lab))
        losses = []
        for start in range(0, len(perm), b):
            sel = perm[start:start + b]
            w = weights[sel]
            if float(w.sum()) == 0.0:
                continue
            ce = F.cross_entropy(net(images[combined[sel]]), targets[sel],
                                 reduction="none")
            loss = (ce * w).sum() / w.sum()
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        lab_t = torch.as_tensor(lab)
        acc = labeled_accuracy(net, images, labels, lab_t)
        state.train_log.append((float(np.mean(losses)) if losses else 0.0, acc))
        if on_epoch_end is not None:
            on_epoch_end(epoch, net)
        if acc >= tc.early_stop_train_acc:
            break
    return state, records


class _PoolCycler:
    """Endless seeded stream over unlabeled pool positions, reshuffled per pass."""

    def __init__(self, n: int, g: torch.Generator):
        self.n = n
        self.g = g
        self.buffer = torch.empty(0, dtype=torch.int64)

    def take(self, k: int) -> torch.Tensor:
        while len(self.buffer) < k:
            self.buffer = torch.cat(
                [self.buffer, torch.randperm(self.n, generator=self.g)])
        out, self.buffer = self.buffer[:k], self.buffer[k:]
        return out


def _fit_consistency(ds: ImageDataset, pool: PoolPartition, tc: TrainConfig,
                     aug: AugmentationPolicy, kind: LearnerKind,
                     net_cfg: NetworkConfig, flex: bool, round_index: int,
                     on_epoch_end: Callable[[int, object], None] | None,
                     ) -> tuple[ModelState, list[PseudoLabelRecord]]:
    if len(pool.labeled_idx) == 0:
        raise EmptyPoolError("labeled pool is empty")
    if len(pool.unlabeled_idx) == 0:
        return fit_supervised(init_model(net_cfg, tc.seed), ds, pool, tc,
                              on_epoch_end=on_epoch_end), []
    state = init_model(net_cfg, tc.seed)
    net = state.net
    images, labels = dataset_tensors(ds)
    lab = torch.as_tensor(np.asarray(pool.labeled_idx, dtype=np.int64))
    unl = np.asarray(pool.unlabeled_idx, dtype=np.int64)
    unl_t = torch.as_tensor(unl)
    true_unl = torch.as_tensor(ds.labels[unl])  # diagnostics only
    opt = torch.optim.Adam(net.parameters(), lr=tc.learning_rate)
    g_batch = torch.Generator().manual_seed(tc.seed)
    g_unlab = torch.Generator().manual_seed(mix_seed(tc.seed, 1))
    g_aug = torch.Generator().manual_seed(mix_seed(tc.seed, aug.seed, 2))
    cycler = _PoolCycler(len(unl), g_unlab)
    status = np.full(len(unl), -1, dtype=np.int64)  # FlexMatch learning status
    records: list[PseudoLabelRecord] = []
    b = min(tc.batch_size_labeled, len(lab))
    for epoch in range(tc.max_epochs):
        if flex:
            flex_state = flex_threshold_state(status, ds.num_classes, kind.tau)
            thresholds = torch.as_tensor(flex_state.thresholds, dtype=torch.float32)
        else:
            thresholds = torch.full((ds.num_classes,), kind.tau)
        stats: dict[int, tuple[int, bool]] = {}
        losses = []
        perm = lab[torch.randperm(len(lab), generator=g_batch)]
        for start in range(0, len(perm), b):
            batch = perm[start:start + b]
            xb = weak_augment(images[batch], g_aug, aug)
            upos = cycler.take(kind.mu * len(batch))
            ux = images[unl_t[upos]]
            uw = weak_augment(ux, g_aug, aug)
            us = strong_augment(ux, g_aug, aug)
            with torch.no_grad():
                pw = F.softmax(net(uw), dim=1)
                conf, pl = pw.max(dim=1)
            mask = conf >= thresholds[pl]
            if flex:
                over_base = conf >= kind.tau
                status[upos[over_base].numpy()] = pl[over_base].numpy()
            ce_u = F.cross_entropy(net(us), pl, reduction="none")
            loss_u = (ce_u * mask.float()).mean()
            loss = F.cross_entropy(net(xb), labels[batch]) + kind.lambda_u * loss_u
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
            hit = torch.nonzero(mask).flatten()
            correct = pl[hit] == true_unl[upos[hit]]
            for pos, cls, ok in zip(upos[hit].tolist(), pl[hit].tolist(),
                                    correct.tolist()):
                stats[pos] = (cls, ok)
        records.append(_record_from_stats(
            stats, ds.num_classes, round_index, epoch,
            thresholds=flex_state.thresholds if flex else None))
        acc = labeled_accuracy(net, images, labels, lab)
        state.train_log.append((float(np.mean(losses)), acc))
        if on_epoch_end is not None:
            on_epoch_end(epoch, net)
        if acc >= tc.early_stop_train_acc:
            break
    return state, records


def fit_fixmatch(ds: ImageDataset, pool: PoolPartition, tc: TrainConfig,
                 aug: AugmentationPolicy = AugmentationPolicy(),
                 kind: LearnerKind = LearnerKind(Learner.FIXMATCH),
                 net_cfg: NetworkConfig = NetworkConfig(),
                 round_index: int = 0,
                 on_epoch_end: Callable[[int, object], None] | None = None,
                 ) -> tuple[ModelState, list[PseudoLabelRecord]]:
    """FixMatch-style consistency: per step, cross-entropy on a weakly
    augmented labeled batch plus lambda_u times the mean over mu*b unlabeled
    of masked cross-entropy between the strong view's prediction and the
    weak view's argmax (mask: weak confidence >= tau)."""
    return _fit_consistency(ds, pool, tc, aug, kind, net_cfg, flex=False,
                            round_index=round_index, on_epoch_end=on_epoch_end)


def fit_flexmatch(ds: ImageDataset, pool: PoolPartition, tc: TrainConfig,
                  aug: AugmentationPolicy = AugmentationPolicy(),
                  kind: LearnerKind = LearnerKind(Learner.FLEXMATCH),
                  net_cfg: NetworkConfig = NetworkConfig(),
                  round_index: int = 0,
                  on_epoch_end: Callable[[int, object], None] | None = None,
                  ) -> tuple[ModelState, list[PseudoLabelRecord]]:
    """FixMatch objective with per-class curriculum thresholds recomputed at
    every epoch from the confident-prediction counters (warm-up included);
    records carry the tau_c trajectory."""
    return _fit_consistency(ds, pool, tc, aug, kind, net_cfg, flex=True,
                            round_index=round_index, on_epoch_end=on_epoch_end)


def fit_learner(kind: LearnerKind, ds: ImageDataset, pool: PoolPartition,
                tc: TrainConfig, aug: AugmentationPolicy,
                net_cfg: NetworkConfig, round_index: int = 0,
                ) -> tuple[ModelState, list[PseudoLabelRecord]]:
    """Dispatch a training run for the configured learner kind."""
    if kind.kind is Learner.SPV:
        return fit_supervised(init_model(net_cfg, tc.seed), ds, pool, tc), []
    if kind.kind is Learner.PL:
        return fit_pseudo_label(ds, pool, tc, kind, net_cfg, round_index)
    if kind.kind is Learner.FIXMATCH:
        return fit_fixmatch(ds, pool, tc, aug, kind, net_cfg, round_index)
    if kind.kind is Learner.FLEXMATCH:
        return fit_flexmatch(ds, pool, tc, aug, kind, net_cfg, round_index)
    raise ValueError(f"unknown learner {kind.kind}")
