"""Command-line front door: generate challenge datasets, run experiment
grids, render reports, validate artifacts.

Exit codes: 0 ok, 2 validation error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import itertools
import sys
from pathlib import Path

import numpy as np
import yaml

from .augment import AugmentationPolicy
from .challenges import (
    generate_challenge,
    load_ambiguous_corpus,
    pick_minority_classes,
    synthesize_ambiguous_corpus,
)
from .datasets import (
    TAG_AMBIGUOUS,
    TAG_CLEAN,
    ChallengeKind,
    ChallengeSpec,
    class_histogram,
    challenge_manifest,
    load_challenge,
    load_idx,
    save_challenge,
    validate_dataset,
    verify_manifest,
)
from .harness import ExperimentConfig, RecordWriter, read_record_dir, run_active_loop
from .learners import Learner, LearnerKind
from .network import NetworkConfig
from .reporting import write_report
from .training import TrainConfig

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

IDX_NAMES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


class CliValidationError(ValueError):
    pass


def _find_idx(data_dir: Path, key: str) -> Path | None:
    base = data_dir / IDX_NAMES[key]
    for cand in (base, base.with_name(base.name + ".gz")):
        if cand.exists():
            return cand
    return None


def _load_base(args) -> tuple:
    data_dir = Path(args.data_dir)
    paths = {k: _find_idx(data_dir, k) for k in IDX_NAMES}
    if any(p is None for p in paths.values()):
        if getattr(args, "standin", False):
            from .standin import StandinConfig, write_standin_idx

            cfg = StandinConfig(train_size=args.standin_train,
                                test_size=args.standin_test)
            print(f"base corpus missing; synthesizing stand-in digits "
                  f"({cfg.train_size} train / {cfg.test_size} test) into {data_dir}")
            paths = write_standin_idx(data_dir, cfg, seed=args.standin_seed)
        else:
            missing = [IDX_NAMES[k] for k, p in paths.items() if p is None]
            raise CliValidationError(
                f"base corpus not found in {data_dir} (missing {', '.join(missing)}). "
                "Place the IDX files there, or pass --standin to synthesize the "
                "offline stand-in corpus.")
    train = load_idx(paths["train_images"], paths["train_labels"])
    test = load_idx(paths["test_images"], paths["test_labels"])
    return train, test


def _resolve_ambiguous(args, base):
    if args.ambiguous_samples or args.ambiguous_labels:
        if not (args.ambiguous_samples and args.ambiguous_labels):
            raise CliValidationError(
                "--ambiguous-samples and --ambiguous-labels must be given together")
        return load_ambiguous_corpus(args.ambiguous_samples, args.ambiguous_labels,
                                     num_classes=base.num_classes)
    if args.ambiguous_synth:
        n = max(len(base) * 2, 1)
        return synthesize_ambiguous_corpus(base, n, seed=args.ambiguous_seed)
    raise CliValidationError(
        "BCS needs an ambiguous corpus: pass --ambiguous-samples/--ambiguous-labels "
        "to ingest the published tensor files, or --ambiguous-synth to use the "
        "offline blend synthesizer.")


def cmd_generate(args) -> int:
    train, test = _load_base(args)
    out = Path(args.out)
    kinds = [ChallengeKind(k) for k in
             (("bci", "bcs", "wci", "none") if args.challenge == "all"
              else (args.challenge,))]
    jobs = [("test", None, test)] + [(k.value, k, train) for k in kinds]
    for name, kind, source in jobs:
        if (out / f"{name}.npz").exists() and (out / f"{name}.manifest.json").exists():
            ds, manifest = load_challenge(out, name)
            problems = verify_manifest(ds, manifest)
            if problems:
                raise CliValidationError(
                    f"existing artifact {name} fails verification: {problems}")
            print(f"{name}: unchanged (hash {manifest['content_hash'][:12]})")
            continue
        if kind is None or kind is ChallengeKind.NONE:
            ds = source
            spec = ChallengeSpec(kind=ChallengeKind.NONE, seed=args.seed)
            manifest = challenge_manifest(ds, spec)
        else:
            spec = ChallengeSpec(
                kind=kind, seed=args.seed,
                minority_fraction=args.minority_fraction,
                clean_fraction=args.clean_fraction,
                subclusters_k=args.subclusters_k,
                noise_sigma=args.noise_sigma)
            ambiguous = _resolve_ambiguous(args, train) if kind is ChallengeKind.BCS else None
            ds = generate_challenge(train, spec, ambiguous=ambiguous)
            minority = (pick_minority_classes(train.num_classes, spec).tolist()
                        if kind is ChallengeKind.BCI else None)
            manifest = challenge_manifest(ds, spec, minority_classes=minority)
            manifest["base_per_class_counts"] = class_histogram(train).tolist()
            manifest["base_hash"] = train.content_hash()
        save_challenge(out, name, ds, manifest)
        print(f"{name}: written (hash {manifest['content_hash'][:12]})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Grid config
# ---------------------------------------------------------------------------

_KNOWN_KEYS = {
    "data_dir", "records_dir", "challenges", "learners", "strategies", "seeds",
    "initial_budget", "budgets", "train", "learner", "network", "augment",
    "balanced_mode",
}
_TRAIN_KEYS = {"learning_rate", "max_epochs", "early_stop_train_acc",
               "batch_size_labeled"}
_LEARNER_KEYS = {"tau", "lambda_u", "mu"}
_NETWORK_KEYS = {"num_classes", "conv_blocks", "fc_sizes"}
_AUGMENT_KEYS = {"weak_shift_px", "strong_shift_px", "strong_rotation_deg",
                 "erase_min_px", "erase_max_px", "brightness_range",
                 "contrast_range", "seed"}


def validate_grid_config(cfg: dict) -> list[str]:
    problems = []
    unknown = set(cfg) - _KNOWN_KEYS
    if unknown:
        problems.append(f"unknown config keys: {sorted(unknown)}")
    for key in ("data_dir", "records_dir", "challenges", "learners",
                "strategies", "seeds", "budgets"):
        if key not in cfg:
            problems.append(f"missing required key: {key}")
    for key, allowed in (("learners", {l.value for l in Learner}),
                         ("strategies", {"Rnd", "Unc", "Cov", "Bal", "Rep"}),
                         ("challenges", {k.value for k in ChallengeKind})):
        bad = [v for v in cfg.get(key, []) if v not in allowed]
        if bad:
            problems.append(f"{key}: unknown entries {bad}")
    for key, sub in (("train", _TRAIN_KEYS), ("learner", _LEARNER_KEYS),
                     ("network", _NETWORK_KEYS), ("augment", _AUGMENT_KEYS)):
        extra = set(cfg.get(key, {}) or {}) - sub
        if extra:
            problems.append(f"{key}: unknown entries {sorted(extra)}")
    budgets = cfg.get("budgets", [])
    if budgets and any(b >= a for a, b in zip(budgets, budgets[1:])):
        problems.append("budgets must be strictly increasing")
    if budgets and cfg.get("initial_budget", 20) >= budgets[0]:
        problems.append("initial_budget must be below the first budget")
    return problems


def load_grid_config(path: str | Path) -> dict:
    cfg = yaml.safe_load(Path(path).read_text())
    if not isinstance(cfg, dict):
        raise CliValidationError(f"config {path} is not a mapping")
    problems = validate_grid_config(cfg)
    if problems:
        raise CliValidationError(f"invalid config {path}: " + "; ".join(problems))
    return cfg


def build_grid(cfg: dict) -> list[ExperimentConfig]:
    train = TrainConfig(**(cfg.get("train") or {}))
    network_raw = dict(cfg.get("network") or {})
    for key in ("conv_blocks", "fc_sizes"):
        if key in network_raw:
            value = network_raw[key]
            network_raw[key] = tuple(tuple(v) if isinstance(v, list) else v
                                     for v in value)
    network = NetworkConfig(**network_raw)
    augment_raw = dict(cfg.get("augment") or {})
    for key in ("brightness_range", "contrast_range"):
        if key in augment_raw:
            augment_raw[key] = tuple(augment_raw[key])
    augment = AugmentationPolicy(**augment_raw)
    learner_params = cfg.get("learner") or {}
    cells = []
    for challenge, learner, strategy in itertools.product(
            cfg["challenges"], cfg["learners"], cfg["strategies"]):
        cells.append(ExperimentConfig(
            challenge=ChallengeSpec(kind=ChallengeKind(challenge)),
            learner=LearnerKind(kind=Learner(learner), **learner_params),
            strategy=strategy,
            seeds=tuple(cfg["seeds"]),
            initial_budget=cfg.get("initial_budget", 20),
            budget_schedule=tuple(cfg["budgets"]),
            train=train,
            network=network,
            augment=augment,
            balanced_mode=cfg.get("balanced_mode", "weighted"),
            output_dir=Path(cfg["records_dir"]),
        ))
    return cells


def cmd_run(args) -> int:
    cfg = load_grid_config(args.config)
    if args.records_dir:
        cfg["records_dir"] = args.records_dir
    if args.data_dir:
        cfg["data_dir"] = args.data_dir
    cells = build_grid(cfg)
    data_dir = Path(cfg["data_dir"])
    records_dir = Path(cfg["records_dir"])
    expected = len(cfg["seeds"]) * len(cfg["budgets"])
    plan = []
    for cell in cells:
        path = records_dir / f"{cell.cell_name()}.jsonl"
        done = 0
        if path.exists():
            done = sum(1 for line in path.read_text().splitlines() if line.strip())
        plan.append((cell, path, done))
    if args.dry_run:
        for cell, path, done in plan:
            status = "complete" if done >= expected else f"{done}/{expected}"
            print(f"{cell.cell_name()}: {status}")
        return EXIT_OK
    test_ds, _ = load_challenge(data_dir, "test")
    failures = []
    for cell, path, done in plan:
        if done >= expected:
            print(f"{cell.cell_name()}: complete, skipping")
            continue
        if done:  # partial file: cell granularity resume, start clean
            path.unlink()
        train_ds, _ = load_challenge(data_dir, cell.challenge.kind.value)
        print(f"{cell.cell_name()}: running {len(cell.seeds)} seeds "
              f"x {len(cell.budget_schedule)} budgets")
        try:
            with RecordWriter(path) as sink:
                run_active_loop(cell, train_ds, test_ds, on_record=sink)
        except Exception as e:
            failures.append((cell.cell_name(), str(e)))
            print(f"{cell.cell_name()}: FAILED ({e})", file=sys.stderr)
    if failures:
        print(f"{len(failures)} cell(s) failed:", file=sys.stderr)
        for name, err in failures:
            print(f"  {name}: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_report(args) -> int:
    records = read_record_dir(args.records)
    if not records:
        raise CliValidationError(f"no records found under {args.records}")
    budgets = None if args.budgets == "all" else tuple(
        int(b) for b in args.budgets.split(","))
    written = write_report(records, args.out, budgets=budgets)
    for group, paths in written.items():
        for path in paths:
            print(f"{group}: {path}")
    return EXIT_OK


def _validate_challenge_artifact(name: str, ds, manifest) -> list[str]:
    problems = verify_manifest(ds, manifest)
    kind = manifest.get("kind")
    spec = manifest.get("spec", {})
    hist = class_histogram(ds)
    if kind == "bci" and "minority_classes" in manifest:
        base_counts = manifest.get("base_per_class_counts")
        minority = set(manifest["minority_classes"])
        majority = [c for c in range(ds.num_classes) if c not in minority]
        for c in minority:
            for m in majority:
                ratio = hist[c] / hist[m]
                if not 0.08 <= ratio <= 0.12:
                    problems.append(
                        f"BCI ratio {ratio:.4f} for minority {c} vs majority {m} "
                        "outside [0.08, 0.12]")
        if base_counts:
            for m in majority:
                if hist[m] != base_counts[m]:
                    problems.append(f"BCI majority class {m} count changed")
    if kind == "bcs":
        n_clean = int(round(spec.get("clean_fraction", 0.05) * len(ds)))
        actual = int((ds.source_tags == TAG_CLEAN).sum())
        if actual != n_clean:
            problems.append(f"BCS clean tag count {actual} != {n_clean}")
        if int((ds.source_tags == TAG_AMBIGUOUS).sum()) != len(ds) - n_clean:
            problems.append("BCS ambiguous tag count mismatch")
    if kind == "wci":
        k = spec.get("subclusters_k")
        base_counts = manifest.get("base_per_class_counts")
        if base_counts and hist.tolist() != base_counts:
            problems.append("WCI per-class counts differ from base")
        clean_per_class = np.bincount(ds.labels[ds.source_tags == TAG_CLEAN],
                                      minlength=ds.num_classes)
        if not (clean_per_class == k - 1).all():
            problems.append(
                f"WCI clean singletons per class {clean_per_class.tolist()} != k-1={k - 1}")
    return problems


def cmd_validate(args) -> int:
    ok = True
    if args.data:
        data_dir = Path(args.data)
        names = sorted(p.stem for p in data_dir.glob("*.npz"))
        if not names:
            raise CliValidationError(f"no artifacts found under {data_dir}")
        for name in names:
            ds, manifest = load_challenge(data_dir, name)
            problems = _validate_challenge_artifact(name, ds, manifest)
            if problems:
                ok = False
                print(f"{name}: INVALID")
                for p in problems:
                    print(f"  - {p}")
            else:
                print(f"{name}: ok (hash {manifest['content_hash'][:12]})")
    if args.config:
        problems = validate_grid_config(yaml.safe_load(Path(args.config).read_text()) or {})
        if problems:
            ok = False
            print(f"{args.config}: INVALID")
            for p in problems:
                print(f"  - {p}")
        else:
            print(f"{args.config}: ok")
    if not args.data and not args.config:
        raise CliValidationError("nothing to validate: pass --data and/or --config")
    return EXIT_OK if ok else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="activessl",
        description="Challenge datasets, active+semi-supervised training grids, reports.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="build challenge datasets + manifests")
    g.add_argument("--data-dir", required=True, help="IDX base corpus directory")
    g.add_argument("--out", required=True, help="challenge artifact directory")
    g.add_argument("--challenge", default="all",
                   choices=["bci", "bcs", "wci", "none", "all"])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--minority-fraction", type=float, default=0.1)
    g.add_argument("--clean-fraction", type=float, default=0.05)
    g.add_argument("--subclusters-k", type=int, default=300)
    g.add_argument("--noise-sigma", type=float, default=0.05)
    g.add_argument("--standin", action="store_true",
                   help="synthesize the offline stand-in corpus if IDX files are missing")
    g.add_argument("--standin-train", type=int, default=60000)
    g.add_argument("--standin-test", type=int, default=10000)
    g.add_argument("--standin-seed", type=int, default=0)
    g.add_argument("--ambiguous-samples", help="published ambiguous corpus samples (.pt)")
    g.add_argument("--ambiguous-labels", help="published ambiguous corpus labels (.pt)")
    g.add_argument("--ambiguous-synth", action="store_true",
                   help="use the offline blend synthesizer for the ambiguous pool")
    g.add_argument("--ambiguous-seed", type=int, default=0)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="execute an experiment grid")
    r.add_argument("--config", required=True, help="grid config (YAML)")
    r.add_argument("--records-dir", help="override records_dir from the config")
    r.add_argument("--data-dir", help="override data_dir from the config")
    r.add_argument("--dry-run", action="store_true",
                   help="list grid cells and their status, train nothing")
    r.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="render tables and figures from records")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--budgets", default="50,250",
                   help='summary-table budgets, e.g. "50,250" or "all"')
    p.set_defaults(func=cmd_report)

    v = sub.add_parser("validate", help="check artifacts and configs")
    v.add_argument("--data", help="challenge artifact directory")
    v.add_argument("--config", help="grid config (YAML)")
    v.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliValidationError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
