"""End-to-end experiment driver: data, augmentation, distillation, baseline, reports."""
from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import distill as dst
from . import metrics
from .config import ConfigError, ExperimentConfig, config_to_text
from .dataset import (LabeledDataset, inject_noise, load_csv_dataset, load_partition_csv,
                      make_synthetic_blobs, save_partition_csv, split_clean_noisy)
from .learner import one_hot, train_classifier
from .pu_augment import apply_corrections, augment_clean_set, save_augmented_csv
from .rng import derive_seed, make_rng

log = logging.getLogger(__name__)

WORKERS_ENV = "NOISEPU_WORKERS"
SWEEP_AXES = ("r", "pi", "eta", "lambda", "label_mode")
# ablation grid: (name, mixup on, entropy regularisation on)
ABLATION_VARIANTS = (("standard", False, False), ("mixup", True, False),
                     ("entropy", False, True), ("mixup+entropy", True, True))


class PipelineError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage


class _Stage:
    """Context manager that re-raises any failure tagged with the stage name."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, exc) from exc
        return False


@dataclass
class AccuracyRow:
    run_id: str
    noise_kind: str
    r: float
    pi: float
    label_mode: str
    accuracy: float
    baseline_accuracy: float
    variant: str = ""


def load_data(cfg: ExperimentConfig, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Training set and held-out evaluation set for one trial."""
    d = cfg.data
    if d.source == "synthetic":
        train = make_synthetic_blobs(d.num_classes, d.per_class, d.dim, d.separation,
                                     derive_seed(seed, "train-data"))
        test = make_synthetic_blobs(d.num_classes, d.test_per_class, d.dim, d.separation,
                                    derive_seed(seed, "test-data"))
        return train, test
    full = load_csv_dataset(d.path, d.num_classes)
    if d.test_path:
        return full, load_csv_dataset(d.test_path, d.num_classes)
    if d.partition:
        raise ConfigError("data.test_path: required when data.partition is given")
    # the held-out split is drawn once from the base seed so every trial sees the same data
    rng = make_rng(derive_seed(cfg.base_seed, "holdout"))
    order = rng.permutation(full.n_samples)
    n_test = max(1, int(full.n_samples * d.test_fraction))
    te, tr = np.sort(order[:n_test]), np.sort(order[n_test:])
    return (LabeledDataset(full.features[tr], full.labels[tr], full.num_classes),
            LabeledDataset(full.features[te], full.labels[te], full.num_classes))


def _partition(cfg, train, seed):
    if cfg.data.partition:
        return load_partition_csv(train, cfg.data.partition, cfg.pi_percent)
    return split_clean_noisy(train, cfg.pi_percent, seed)


def _variants(cfg):
    if not cfg.ablation:
        return [("", cfg.distill)]
    out = []
    for name, mix, ent in ABLATION_VARIANTS:
        def tweak(tc):
            return replace(tc, mixup_mu=tc.mixup_mu if mix else 0.0,
                           entropy_weight=tc.entropy_weight if ent else 0.0)
        dp = cfg.distill
        out.append((name, replace(dp, teacher_train_config=tweak(dp.teacher_train_config),
                                  student_train_config=tweak(dp.student_train_config))))
    return out


def run_trial(cfg: ExperimentConfig, trial: int, out: Path) -> list[AccuracyRow]:
    """One full pipeline pass with seed ``base_seed + trial``; writes into ``out``."""
    seed = cfg.base_seed + trial
    out.mkdir(parents=True, exist_ok=True)
    with _Stage("data"):
        train, test = load_data(cfg, seed)
        clean_split = _partition(cfg, train, seed)
    # augmentation never reads noisy given labels, so one pass serves every noise kind
    with _Stage("augment"):
        aug = augment_clean_set(clean_split, cfg.pu, derive_seed(seed, "augment"))
        save_augmented_csv(aug, out / "augmented.csv")
        metrics.write_precision_csv(metrics.augmentation_report(aug, clean_split), out / "precision.csv")
    rows = []
    for variant, dp in _variants(cfg):
        vdir = out / variant if variant else out
        vdir.mkdir(exist_ok=True)
        with _Stage("teacher"):
            teacher = dst.train_teacher_ensemble(aug, apply_corrections(clean_split, aug), dp,
                                                 derive_seed(seed, "teacher"))
            metrics.write_threshold_csv(
                metrics.threshold_sweep(teacher, test.features, test.labels, cfg.etas), vdir / "threshold.csv")
        for spec in cfg.noise:
            kdir = vdir / spec.kind
            kdir.mkdir(exist_ok=True)
            with _Stage("noise"):
                pd = clean_split if cfg.data.partition else inject_noise(clean_split, spec, seed)
                corrected = apply_corrections(pd, aug)
                save_partition_csv(pd, kdir / "partition.csv")
            with _Stage("student"):
                noisy = corrected.noisy_indices
                t_out = teacher.predict(corrected.features[noisy]) if noisy.size else np.empty((0, pd.num_classes))
                targets, confident = dst.student_targets(corrected, t_out, dp)
                dst.save_pseudo_label_csv(noisy, targets[noisy], confident, dp.label_mode,
                                          kdir / "pseudo_labels.csv")
                student = dst.train_student(corrected, targets, dp, derive_seed(seed, "student"))
            with _Stage("baseline"):
                # same architecture, optimiser and seed as the student; only the targets differ
                baseline = train_classifier(pd.features, one_hot(pd.given_labels, pd.num_classes),
                                            dst.student_config(dp, derive_seed(seed, "student")))
            with _Stage("evaluate"):
                acc = metrics.test_accuracy(student, test.features, test.labels)
                base_acc = metrics.test_accuracy(baseline, test.features, test.labels)
            run_id = f"{variant}/trial_{trial}" if variant else f"trial_{trial}"
            rows.append(AccuracyRow(run_id, spec.kind, spec.level_r, cfg.pi_percent, dp.label_mode,
                                    acc, base_acc, variant))
            log.info("trial %d %s %s: student %.4f baseline %.4f", trial, variant or "-", spec.kind, acc, base_acc)
    return rows


def _worker_count():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _run_trial_star(args):
    return run_trial(*args)


def aggregate(rows: list[AccuracyRow]) -> list[dict]:
    groups: dict[tuple, list[AccuracyRow]] = {}
    for r in rows:
        groups.setdefault((r.variant, r.noise_kind, r.r, r.pi, r.label_mode), []).append(r)
    out = []
    for (variant, kind, r, pi, mode), members in groups.items():
        acc = np.array([m.accuracy for m in members])
        base = np.array([m.baseline_accuracy for m in members])
        ddof = 1 if len(members) > 1 else 0
        out.append(dict(variant=variant, noise_kind=kind, r=r, pi=pi, label_mode=mode, trials=len(members),
                        accuracy_mean=float(acc.mean()), accuracy_std=float(acc.std(ddof=ddof)),
                        baseline_mean=float(base.mean()), baseline_std=float(base.std(ddof=ddof))))
    return out


ACCURACY_HEADER = ["run_id", "noise_kind", "r", "pi", "label_mode", "accuracy", "baseline_accuracy"]


def write_accuracy_csv(rows, summary, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ACCURACY_HEADER)
        for r in rows:
            w.writerow([r.run_id, r.noise_kind, repr(r.r), repr(r.pi), r.label_mode,
                        repr(r.accuracy), repr(r.baseline_accuracy)])
        for s in summary:
            prefix = f"{s['variant']}/" if s["variant"] else ""
            for stat in ("mean", "std"):
                w.writerow([prefix + stat, s["noise_kind"], repr(s["r"]), repr(s["pi"]), s["label_mode"],
                            repr(s[f"accuracy_{stat}"]), repr(s[f"baseline_{stat}"])])


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> Path:
    """Run every trial, then write ``accuracy.csv`` and ``manifest.txt`` under the report directory.

    Returns the report directory.  Per-trial artefacts live in ``trial_<t>/``.
    """
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.txt").write_text(config_to_text(cfg), encoding="utf-8")
    jobs = [(cfg, t, out / f"trial_{t}") for t in range(cfg.trials)]
    workers = min(_worker_count(), cfg.trials)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial_star, jobs))
    else:
        results = [run_trial(*job) for job in jobs]
    rows = [r for trial_rows in results for r in trial_rows]
    write_accuracy_csv(rows, aggregate(rows), out / "accuracy.csv")
    return out


def _apply_axis(cfg: ExperimentConfig, axis: str, value: str) -> ExperimentConfig:
    try:
        if axis == "r":
            return replace(cfg, noise=tuple(replace(n, level_r=float(value)) for n in cfg.noise))
        if axis == "pi":
            return replace(cfg, pi_percent=float(value))
        if axis == "eta":
            return replace(cfg, distill=replace(cfg.distill, confidence_eta=float(value)))
        if axis == "lambda":
            return replace(cfg, distill=replace(cfg.distill, lam=float(value)))
        if axis == "label_mode":
            return replace(cfg, distill=replace(cfg.distill, label_mode=value.strip()))
    except ValueError as exc:
        raise ConfigError(f"{axis}: invalid sweep value {value!r} ({exc})") from None
    raise ConfigError(f"{axis}: unknown sweep axis (choose from {', '.join(SWEEP_AXES)})")


SWEEP_HEADER = ["axis", "value", "variant", "noise_kind", "r", "pi", "label_mode", "trials",
                "accuracy_mean", "accuracy_std", "baseline_mean", "baseline_std"]


def run_sweep(cfg: ExperimentConfig, axis: str, values, out_dir=None) -> Path:
    """One :func:`run_experiment` per value, plus a long-format ``sweep.csv`` for plotting."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"{axis}: unknown sweep axis (choose from {', '.join(SWEEP_AXES)})")
    points = [(str(v).strip(), _apply_axis(cfg, axis, str(v))) for v in values]
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for value, point_cfg in points:
        sub = run_experiment(point_cfg, out / f"{axis}={value}")
        rows = _read_trial_rows(sub / "accuracy.csv")
        for s in aggregate(rows):
            lines.append([axis, value, s["variant"], s["noise_kind"], repr(s["r"]), repr(s["pi"]),
                          s["label_mode"], s["trials"], repr(s["accuracy_mean"]), repr(s["accuracy_std"]),
                          repr(s["baseline_mean"]), repr(s["baseline_std"])])
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        w.writerows(lines)
    return out


def _read_trial_rows(path) -> list[AccuracyRow]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rid = rec["run_id"]
            leaf = rid.rsplit("/", 1)[-1]
            if not leaf.startswith("trial_"):
                continue
            variant = rid.rsplit("/", 1)[0] if "/" in rid else ""
            rows.append(AccuracyRow(rid, rec["noise_kind"], float(rec["r"]), float(rec["pi"]), rec["label_mode"],
                                    float(rec["accuracy"]), float(rec["baseline_accuracy"]), variant))
    return rows


def run_augment_only(cfg: ExperimentConfig, out_dir=None) -> Path:
    """Augmentation alone, as a data-cleaning step; writes only ``augmented.csv``."""
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.base_seed
    with _Stage("data"):
        if cfg.data.partition:
            train = load_csv_dataset(cfg.data.path, cfg.data.num_classes)
        else:
            train, _ = load_data(cfg, seed)
        pd = _partition(cfg, train, seed)
    with _Stage("augment"):
        aug = augment_clean_set(pd, cfg.pu, derive_seed(seed, "augment"))
        save_augmented_csv(aug, out / "augmented.csv")
    return out
