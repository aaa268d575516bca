"""Query strategies: random, margin uncertainty, k-center-greedy coverage,
k-means representative, and inverse-frequency balanced sampling.

All strategies are pure functions of a QueryContext: given equal context and
seed they return equal selections. Ties are always broken toward the lowest
pool (dataset) index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.cluster import KMeans

from .datasets import PoolPartition

STRATEGY_NAMES = ("Rnd", "Unc", "Cov", "Bal", "Rep")


class QueryError(ValueError):
    """The context is missing inputs or the budget is infeasible."""


@dataclass
class QueryContext:
    """Model outputs and pool state consumed by the strategies.

    ``probs`` rows align with ``pool.unlabeled_idx`` order; ``embeddings``
    holds one row per dataset index (labeled and unlabeled alike).
    """

    pool: PoolPartition
    budget_b: int
    seed: int = 0
    probs: np.ndarray | None = None
    embeddings: np.ndarray | None = None
    labeled_class_counts: np.ndarray | None = None

    def __post_init__(self):
        if not 0 < self.budget_b <= len(self.pool.unlabeled_idx):
            raise QueryError(
                f"budget {self.budget_b} infeasible for pool of "
                f"{len(self.pool.unlabeled_idx)} unlabeled points")
        if self.probs is not None and len(self.probs) != len(self.pool.unlabeled_idx):
            raise QueryError("probs row count does not match the unlabeled pool")

    def require(self, name: str) -> np.ndarray:
        value = getattr(self, name)
        if value is None:
            raise QueryError(f"strategy requires ctx.{name}")
        return np.asarray(value)


@dataclass
class QueryResult:
    selected: np.ndarray  # budget_b distinct unlabeled indices, selection order
    scores: np.ndarray | None = None  # per-selected diagnostics


def _finish(ctx: QueryContext, selected: np.ndarray,
            scores: np.ndarray | None = None) -> QueryResult:
    selected = np.asarray(selected, dtype=np.int64)
    assert len(selected) == ctx.budget_b
    assert len(np.unique(selected)) == len(selected)
    assert set(selected.tolist()) <= set(ctx.pool.unlabeled_idx)
    return QueryResult(selected=selected, scores=scores)


def query_random(ctx: QueryContext) -> QueryResult:
    """Seeded uniform sample without replacement from the unlabeled pool."""
    rng = np.random.default_rng(ctx.seed)
    unl = np.asarray(ctx.pool.unlabeled_idx, dtype=np.int64)
    return _finish(ctx, rng.choice(unl, size=ctx.budget_b, replace=False))


def query_margin(ctx: QueryContext) -> QueryResult:
    """Smallest top-two probability gap first (min-margin uncertainty)."""
    probs = ctx.require("probs")
    unl = np.asarray(ctx.pool.unlabeled_idx, dtype=np.int64)
    top2 = np.partition(probs, probs.shape[1] - 2, axis=1)[:, -2:]
    margins = top2[:, 1] - top2[:, 0]
    order = np.lexsort((unl, margins))[:ctx.budget_b]
    return _finish(ctx, unl[order], scores=margins[order])


def query_coverage_kcenter(ctx: QueryContext) -> QueryResult:
    """k-center-greedy coverage in embedding space.

    Repeatedly picks the unlabeled point with the largest distance to its
    nearest already-covered point (labeled and selected-so-far). With no
    labeled points and nothing selected, the first pick maximizes distance
    to the unlabeled pool mean.
    """
    emb = ctx.require("embeddings")
    unl = np.asarray(ctx.pool.unlabeled_idx, dtype=np.int64)
    lab = np.asarray(ctx.pool.labeled_idx, dtype=np.int64)
    cand = emb[unl].astype(np.float64)

    def dists_to(point: np.ndarray) -> np.ndarray:
        return np.sqrt(np.maximum(((cand - point) ** 2).sum(axis=1), 0.0))

    selected, gaps = [], []
    if len(lab):
        covered = emb[lab].astype(np.float64)
        c2 = (covered ** 2).sum(axis=1)
        min_d2 = np.full(len(cand), np.inf)
        for start in range(0, len(covered), 1024):
            block = covered[start:start + 1024]
            d2 = ((cand ** 2).sum(axis=1)[:, None] - 2.0 * cand @ block.T
                  + c2[start:start + 1024][None, :])
            min_d2 = np.minimum(min_d2, d2.min(axis=1))
        min_dist = np.sqrt(np.maximum(min_d2, 0.0))
    else:
        min_dist = dists_to(cand.mean(axis=0))
    for _ in range(ctx.budget_b):
        pick = int(np.argmax(min_dist))  # first max = lowest pool index on ties
        selected.append(unl[pick])
        gaps.append(min_dist[pick])
        min_dist = np.minimum(min_dist, dists_to(cand[pick]))
        min_dist[pick] = -np.inf
    return _finish(ctx, np.array(selected), scores=np.array(gaps))


def query_representative(ctx: QueryContext) -> QueryResult:
    """One pick per k-means cluster (k = budget) over the unlabeled embeddings:
    the instance nearest the centroid. When a centroid's nearest instance is
    already claimed by an earlier cluster, the next-nearest unclaimed one is
    taken instead."""
    emb = ctx.require("embeddings")
    unl = np.asarray(ctx.pool.unlabeled_idx, dtype=np.int64)
    cand = np.ascontiguousarray(emb[unl], dtype=np.float64)
    distinct = len(np.unique(cand.view([("", cand.dtype)] * cand.shape[1])))
    if ctx.budget_b > distinct:
        raise QueryError(
            f"budget {ctx.budget_b} exceeds {distinct} distinct embedding rows")
    km = KMeans(n_clusters=ctx.budget_b, init="k-means++", n_init=1,
                max_iter=100, tol=1e-4, random_state=ctx.seed)
    km.fit(cand)
    claimed = np.zeros(len(cand), dtype=bool)
    selected, dists = [], []
    for cluster in range(ctx.budget_b):
        d = ((cand - km.cluster_centers_[cluster]) ** 2).sum(axis=1)
        d = np.where(claimed, np.inf, d)
        pick = int(np.argmin(d))  # first min = lowest pool index on ties
        claimed[pick] = True
        selected.append(unl[pick])
        dists.append(np.sqrt(d[pick]))
    return _finish(ctx, np.array(selected), scores=np.array(dists))


def query_balanced(ctx: QueryContext, mode: str = "weighted") -> QueryResult:
    """Inverse-class-frequency balanced sampling.

    Default "weighted": score(x) = sum_c w_c p(c|x) with w_c = 1/(n_c + 1)
    normalized to sum 1 (Laplace smoothing keeps zero-count classes finite).
    Alternative "additive": score(x) = w_argmax(x) + max-prob(x).
    Highest scores win; ties break toward the lowest pool index.
    """
    probs = ctx.require("probs")
    counts = ctx.require("labeled_class_counts")
    unl = np.asarray(ctx.pool.unlabeled_idx, dtype=np.int64)
    w = 1.0 / (counts.astype(np.float64) + 1.0)
    w = w / w.sum()
    if mode == "weighted":
        scores = probs @ w
    elif mode == "additive":
        top = probs.argmax(axis=1)
        scores = w[top] + probs.max(axis=1)
    else:
        raise ValueError(f"unknown balanced mode {mode!r}")
    order = np.lexsort((unl, -scores))[:ctx.budget_b]
    return _finish(ctx, unl[order], scores=scores[order])


STRATEGIES = {
    "Rnd": query_random,
    "Unc": query_margin,
    "Cov": query_coverage_kcenter,
    "Bal": query_balanced,
    "Rep": query_representative,
}
