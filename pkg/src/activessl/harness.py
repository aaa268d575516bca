"""Active-learning loop orchestration and confirmation-bias diagnostics.

One ExperimentConfig describes one grid cell (challenge x learner x strategy)
run over several seeds and a budget schedule. Each round queries with the
previous round's model, retrains the learner from scratch on the enlarged
labeled pool, evaluates on the untouched test split, and appends one
RunRecord per (seed, budget) to a line-delimited record stream.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .acquisition import STRATEGIES, QueryContext
from .augment import AugmentationPolicy
from .datasets import ChallengeSpec, ImageDataset, PoolPartition
from .learners import Learner, LearnerKind, PseudoLabelRecord, fit_learner
from .network import ModelState, NetworkConfig, embed, predict_proba
from .training import TrainConfig, evaluate_accuracy, mix_seed

RECORD_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ExperimentConfig:
    challenge: ChallengeSpec
    learner: LearnerKind
    strategy: str
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    initial_budget: int = 20
    budget_schedule: tuple[int, ...] = (50, 100, 150, 200, 250)
    train: TrainConfig = TrainConfig()
    network: NetworkConfig = NetworkConfig()
    augment: AugmentationPolicy = AugmentationPolicy()
    balanced_mode: str = "weighted"
    output_dir: Path | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if any(b >= a for a, b in zip(self.budget_schedule, self.budget_schedule[1:])):
            raise ValueError("budget_schedule must be strictly increasing")
        if not self.budget_schedule:
            raise ValueError("budget_schedule is empty")
        if not 0 < self.initial_budget < self.budget_schedule[0]:
            raise ValueError("initial_budget must be positive and below the first budget")
        if not self.seeds:
            raise ValueError("seeds is empty")

    def cell_name(self) -> str:
        return f"{self.challenge.kind.value}_{self.learner.kind.value}_{self.strategy}"


@dataclass
class RunRecord:
    challenge: str
    learner: str
    strategy: str
    seed: int
    budget: int
    test_accuracy: float
    pl_entropy: float
    wrong_pl_fraction: float
    confident_total: int
    selected_indices: list[int]
    wall_time_s: float
    hashes: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.test_accuracy <= 1.0:
            raise ValueError("test_accuracy outside [0, 1]")
        if not 0.0 <= self.wrong_pl_fraction <= 1.0:
            raise ValueError("wrong_pl_fraction outside [0, 1]")
        if self.pl_entropy < 0.0:
            raise ValueError("pl_entropy negative")


def compute_pl_entropy(record: PseudoLabelRecord) -> float:
    """Shannon entropy (nats) of the confident-count class distribution;
    zero when nothing cleared the threshold."""
    total = record.confident_total
    if total == 0:
        return 0.0
    p = record.class_counts[record.class_counts > 0] / total
    return float(-(p * np.log(p)).sum())


def compute_wrong_pl_fraction(record: PseudoLabelRecord) -> float:
    """Fraction of over-threshold pseudo-labels disagreeing with ground truth."""
    if record.confident_total == 0:
        return 0.0
    return (record.confident_total - record.confident_correct) / record.confident_total


def _query_seed(cfg: ExperimentConfig, seed: int, budget: int) -> int:
    return mix_seed(seed, budget, 11)


def _train_seed(seed: int, budget: int) -> int:
    # Pure function of (run seed, budget): retraining from scratch must not
    # depend on earlier rounds except through the selected indices.
    return mix_seed(seed, budget, 23)


def _build_context(cfg: ExperimentConfig, model: ModelState | None,
                   ds: ImageDataset, pool: PoolPartition, budget_b: int,
                   qseed: int) -> QueryContext:
    probs = embeddings = counts = None
    if cfg.strategy in ("Unc", "Bal"):
        unl = np.asarray(pool.unlabeled_idx, dtype=np.int64)
        probs = predict_proba(model, ds.images[unl])
    if cfg.strategy in ("Cov", "Rep"):
        embeddings = embed(model, ds.images)
    if cfg.strategy == "Bal":
        counts = np.bincount(ds.labels[np.asarray(pool.labeled_idx, dtype=np.int64)],
                             minlength=ds.num_classes)
    return QueryContext(pool=pool, budget_b=budget_b, seed=qseed, probs=probs,
                        embeddings=embeddings, labeled_class_counts=counts)


def run_seed_trajectory(cfg: ExperimentConfig, train_ds: ImageDataset,
                        test_ds: ImageDataset, seed: int,
                        on_record: Callable[[RunRecord], None] | None = None,
                        ) -> list[RunRecord]:
    """One (seed, strategy, learner) trajectory across the budget schedule."""
    rng = np.random.default_rng(mix_seed(seed, 7))
    initial = rng.choice(len(train_ds), size=cfg.initial_budget, replace=False)
    pool = PoolPartition.initial(len(train_ds), initial)
    query_fn = STRATEGIES[cfg.strategy]
    prev_model: ModelState | None = None
    dataset_hash = train_ds.content_hash()
    records = []
    for budget in cfg.budget_schedule:
        need = budget - len(pool.labeled_idx)
        if cfg.strategy != "Rnd" and prev_model is None:
            # Round-0 model: the query model for the first scheduled budget.
            tc0 = _replace_seed(cfg.train, _train_seed(seed, cfg.initial_budget))
            prev_model, _ = fit_learner(cfg.learner, train_ds, pool, tc0,
                                        cfg.augment, cfg.network)
        ctx = _build_context(cfg, prev_model, train_ds, pool, need,
                             _query_seed(cfg, seed, budget))
        if cfg.strategy == "Bal":
            result = query_fn(ctx, mode=cfg.balanced_mode)
        else:
            result = query_fn(ctx)
        pool = pool.with_labeled(result.selected)
        start = time.perf_counter()
        tc = _replace_seed(cfg.train, _train_seed(seed, budget))
        model, pl_records = fit_learner(cfg.learner, train_ds, pool, tc,
                                        cfg.augment, cfg.network,
                                        round_index=len(records))
        wall = time.perf_counter() - start
        last = pl_records[-1] if pl_records else None
        record = RunRecord(
            challenge=cfg.challenge.kind.value,
            learner=cfg.learner.kind.value,
            strategy=cfg.strategy,
            seed=seed,
            budget=budget,
            test_accuracy=evaluate_accuracy(model, test_ds),
            pl_entropy=compute_pl_entropy(last) if last else 0.0,
            wrong_pl_fraction=compute_wrong_pl_fraction(last) if last else 0.0,
            confident_total=last.confident_total if last else 0,
            selected_indices=[int(i) for i in result.selected],
            wall_time_s=wall,
            hashes={"model": model.content_hash(), "dataset": dataset_hash},
        )
        records.append(record)
        if on_record is not None:
            on_record(record)
        prev_model = model
    return records


def _replace_seed(tc: TrainConfig, seed: int) -> TrainConfig:
    return TrainConfig(learning_rate=tc.learning_rate, max_epochs=tc.max_epochs,
                       early_stop_train_acc=tc.early_stop_train_acc,
                       batch_size_labeled=tc.batch_size_labeled, seed=seed)


def run_active_loop(cfg: ExperimentConfig, train_ds: ImageDataset,
                    test_ds: ImageDataset,
                    on_record: Callable[[RunRecord], None] | None = None,
                    ) -> list[RunRecord]:
    """All seeds of one grid cell; errors gain run context."""
    records = []
    for seed in cfg.seeds:
        try:
            records.extend(run_seed_trajectory(cfg, train_ds, test_ds, seed,
                                               on_record=on_record))
        except Exception as e:
            raise RuntimeError(f"cell {cfg.cell_name()} seed {seed} failed: {e}") from e
    return records


# ---------------------------------------------------------------------------
# Record streams and aggregation
# ---------------------------------------------------------------------------


def record_to_json(record: RunRecord) -> str:
    payload = {"schema_version": RECORD_SCHEMA_VERSION}
    payload.update(record.__dict__)
    return json.dumps(payload, sort_keys=True)


def record_from_json(line: str) -> RunRecord:
    payload = json.loads(line)
    payload.pop("schema_version", None)
    return RunRecord(**payload)


class RecordWriter:
    """Append-only JSONL sink, flushed per record for crash tolerance."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._f = open(self.path, "a")

    def __call__(self, record: RunRecord) -> None:
        self._f.write(record_to_json(record) + "\n")
        self._f.flush()

    def close(self) -> None:
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_records(path: str | Path) -> list[RunRecord]:
    records = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(record_from_json(line))
    return records


def read_record_dir(dir_path: str | Path) -> list[RunRecord]:
    records = []
    for path in sorted(Path(dir_path).glob("*.jsonl")):
        records.extend(read_records(path))
    return records


@dataclass
class CellAggregate:
    mean: float
    std: float
    values: list[float]
    seeds: list[int]


def aggregate_seeds(records: Iterable[RunRecord],
                    metric: str = "test_accuracy",
                    ) -> dict[tuple[str, str, str, int], CellAggregate]:
    """Mean and sample spread per (challenge, learner, strategy, budget)."""
    cells: dict[tuple[str, str, str, int], list[RunRecord]] = {}
    for r in records:
        cells.setdefault((r.challenge, r.learner, r.strategy, r.budget), []).append(r)
    out = {}
    for key, rs in sorted(cells.items()):
        if not rs:
            raise ValueError(f"empty cell {key}")
        rs = sorted(rs, key=lambda r: r.seed)
        values = [float(getattr(r, metric)) for r in rs]
        mean = float(np.mean(values))
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        out[key] = CellAggregate(mean=mean, std=std, values=values,
                                 seeds=[r.seed for r in rs])
    if not out:
        raise ValueError("no records to aggregate")
    return out
