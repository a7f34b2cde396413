"""Labeled feature datasets, clean/noisy partitioning and synthetic label noise.

``PartitionedDataset.true_labels`` is evaluation-only.  Nothing in
``pu_augment`` or ``distill`` reads it; only :mod:`noisepu.metrics` does.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .rng import derive_seed, make_rng


class DatasetError(ValueError):
    pass


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        x = _frozen(self.features, np.float64)
        y = _frozen(self.labels, np.int64)
        if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
            raise DatasetError(f"features must be a non-empty 2-D matrix, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise DatasetError("labels must have one entry per sample")
        if self.num_classes < 2:
            raise DatasetError("num_classes must be >= 2")
        if not np.all(np.isfinite(x)):
            raise DatasetError("features contain non-finite values")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise DatasetError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "symmetric"
    level_r: float = 0.0
    pair_map: tuple = ()

    def __post_init__(self):
        if self.kind not in ("symmetric", "asymmetric"):
            raise DatasetError(f"unknown noise kind {self.kind!r}")
        if not 0 <= self.level_r <= 100:
            raise DatasetError("noise level r must lie in [0, 100]")
        pairs = tuple((int(s), int(t)) for s, t in self.pair_map)
        sources = [s for s, _ in pairs]
        if len(set(sources)) != len(sources):
            raise DatasetError("pair_map sources must be distinct")
        if any(s == t for s, t in pairs):
            raise DatasetError("pair_map entries must map a class to a different class")
        if self.kind == "asymmetric" and not pairs:
            raise DatasetError("asymmetric noise requires a pair_map")
        object.__setattr__(self, "pair_map", pairs)


# CAT<->DOG, DEER->HORSE, BIRD->AIRPLANE, TRUCK->AUTOMOBILE in CIFAR-10 class ids
CIFAR10_PAIRS = ((3, 5), (5, 3), (4, 7), (2, 0), (9, 1))


@dataclass(frozen=True)
class PartitionedDataset:
    base: LabeledDataset
    true_labels: np.ndarray
    given_labels: np.ndarray
    clean_mask: np.ndarray
    clean_ratio_pi: float
    noise_level_r: float = 0.0

    def __post_init__(self):
        n = self.base.n_samples
        t = _frozen(self.true_labels, np.int64)
        g = _frozen(self.given_labels, np.int64)
        m = _frozen(self.clean_mask, bool)
        if t.shape != (n,) or g.shape != (n,) or m.shape != (n,):
            raise DatasetError("label and mask arrays must have one entry per sample")
        if np.any(g[m] != t[m]):
            raise DatasetError("clean samples must carry their true labels")
        C = self.base.num_classes
        if g.min() < 0 or g.max() >= C:
            raise DatasetError("given labels out of range")
        object.__setattr__(self, "true_labels", t)
        object.__setattr__(self, "given_labels", g)
        object.__setattr__(self, "clean_mask", m)

    @property
    def num_classes(self) -> int:
        return self.base.num_classes

    @property
    def features(self) -> np.ndarray:
        return self.base.features

    @property
    def clean_indices(self) -> np.ndarray:
        return np.flatnonzero(self.clean_mask)

    @property
    def noisy_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.clean_mask)

    def clean_indices_of(self, cls: int) -> np.ndarray:
        """D_c^(i): clean samples whose (trusted) label is ``cls``."""
        return np.flatnonzero(self.clean_mask & (self.given_labels == cls))

    def with_given_labels(self, given) -> "PartitionedDataset":
        return PartitionedDataset(self.base, self.true_labels, given, self.clean_mask,
                                  self.clean_ratio_pi, self.noise_level_r)


def make_synthetic_blobs(num_classes: int, per_class: int, dim: int,
                         separation: float, seed: int) -> LabeledDataset:
    """Isotropic unit-variance Gaussian clusters, one per class.

    Class means sit at ``separation / sqrt(2)`` along distinct coordinate axes,
    so every pair of means is exactly ``separation`` apart.  When there are
    more classes than dimensions the means are seeded random unit directions
    scaled the same way (pairwise distances then only approximate
    ``separation``).
    """
    if num_classes < 2:
        raise DatasetError("num_classes must be >= 2")
    if per_class < 1 or dim < 1:
        raise DatasetError("per_class and dim must be >= 1")
    if separation < 0:
        raise DatasetError("separation must be >= 0")
    rng = make_rng(derive_seed(seed, "blobs"))
    if num_classes <= dim:
        directions = np.eye(num_classes, dim)
    else:
        directions = rng.standard_normal((num_classes, dim))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = directions * (separation / math.sqrt(2.0))
    labels = np.repeat(np.arange(num_classes), per_class)
    features = means[labels] + rng.standard_normal((labels.size, dim))
    return LabeledDataset(features, labels, num_classes)


def split_clean_noisy(ds: LabeledDataset, pi_percent: float, seed: int) -> PartitionedDataset:
    """Draw a class-balanced clean subset of ``floor(pi% / C * n)`` samples per class."""
    C, n = ds.num_classes, ds.n_samples
    per_class = int(Fraction(str(pi_percent)) * n // (100 * C))
    if per_class < 1:
        raise DatasetError(f"pi={pi_percent}% yields an empty clean set per class (n={n}, C={C})")
    rng = make_rng(derive_seed(seed, "split"))
    mask = np.zeros(n, dtype=bool)
    for cls in range(C):
        members = np.flatnonzero(ds.labels == cls)
        if members.size < per_class:
            raise DatasetError(
                f"pi={pi_percent}% needs {per_class} clean samples of class {cls}, only {members.size} exist")
        mask[rng.choice(members, size=per_class, replace=False)] = True
    return PartitionedDataset(ds, ds.labels, ds.labels, mask, float(pi_percent), 0.0)


def _corruption_count(pool_size: int, r, pi) -> int:
    r, pi = Fraction(str(r)), Fraction(str(pi))
    if r == 0:
        return 0
    if pi >= 100 or r > 100 - pi:
        raise DatasetError(f"effective noise fraction 100*{r}/(100-{pi}) exceeds 100%")
    return int(pool_size * r // (100 - pi))


def noise_plan(pd: PartitionedDataset, spec: NoiseSpec, seed: int):
    """Indices selected for relabeling and their new labels, before they are applied.

    The selected fraction of D_n is ``100 r / (100 - pi)`` percent, so that
    ``r`` percent of the whole dataset is touched.  Symmetric noise redraws
    the label uniformly over all C classes (it may land on the original
    label); asymmetric noise sends each pair source's selected members to the
    pair target.
    """
    C = pd.num_classes
    for s, t in spec.pair_map:
        if not (0 <= s < C and 0 <= t < C):
            raise DatasetError(f"pair ({s}->{t}) out of range for {C} classes")
    noisy = pd.noisy_indices
    rng = make_rng(derive_seed(seed, "noise", spec.kind))
    if spec.kind == "symmetric":
        count = _corruption_count(noisy.size, spec.level_r, pd.clean_ratio_pi)
        chosen = np.sort(rng.choice(noisy, size=count, replace=False))
        return chosen, rng.integers(0, C, size=count)
    chosen, labels = [], []
    for src, dst in sorted(spec.pair_map):
        members = noisy[pd.given_labels[noisy] == src]
        count = _corruption_count(members.size, spec.level_r, pd.clean_ratio_pi)
        chosen.append(np.sort(rng.choice(members, size=count, replace=False)))
        labels.append(np.full(count, dst, dtype=np.int64))
    return (np.concatenate(chosen) if chosen else np.empty(0, np.int64),
            np.concatenate(labels) if labels else np.empty(0, np.int64))


def inject_noise(pd: PartitionedDataset, spec: NoiseSpec, seed: int) -> PartitionedDataset:
    """Apply :func:`noise_plan` to the given labels; clean samples and true labels are untouched."""
    chosen, labels = noise_plan(pd, spec, seed)
    given = pd.given_labels.copy()
    given[chosen] = labels
    return PartitionedDataset(pd.base, pd.true_labels, given, pd.clean_mask,
                              pd.clean_ratio_pi, float(spec.level_r))


def save_csv_dataset(ds: LabeledDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{j}" for j in range(ds.dim)] + ["label"])
        for row, label in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in row] + [int(label)])


def load_csv_dataset(path, num_classes: int) -> LabeledDataset:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header[-1] != "label":
            raise DatasetError(f"{path}: header must be f0,...,f{{dim-1}},label")
        dim = len(header) - 1
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 1:
                raise DatasetError(f"{path}: row {lineno} has {len(row)} fields, expected {dim + 1}")
            try:
                values = [float(v) for v in row[:-1]]
                label = int(row[-1])
            except ValueError as exc:
                raise DatasetError(f"{path}: row {lineno} is malformed ({exc})") from None
            if not all(math.isfinite(v) for v in values):
                raise DatasetError(f"{path}: row {lineno} has a non-finite feature")
            if not 0 <= label < num_classes:
                raise DatasetError(f"{path}: row {lineno} label {label} outside [0, {num_classes})")
            rows.append(values)
            labels.append(label)
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return LabeledDataset(np.array(rows), np.array(labels), num_classes)


def save_partition_csv(pd: PartitionedDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "clean", "given_label", "true_label"])
        for i in range(pd.base.n_samples):
            w.writerow([i, int(pd.clean_mask[i]), int(pd.given_labels[i]), int(pd.true_labels[i])])


def load_partition_csv(ds: LabeledDataset, path, pi_percent: float = 0.0,
                       noise_level_r: float = 0.0) -> PartitionedDataset:
    n = ds.n_samples
    clean = np.zeros(n, dtype=bool)
    given = np.full(n, -1, dtype=np.int64)
    true = np.full(n, -1, dtype=np.int64)
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.DictReader(fh), start=2):
            try:
                i = int(rec["index"])
                clean[i] = rec["clean"] == "1"
                given[i] = int(rec["given_label"])
                true[i] = int(rec["true_label"])
            except (KeyError, ValueError, IndexError, TypeError) as exc:
                raise DatasetError(f"{path}: row {lineno} is malformed ({exc})") from None
    if np.any(given < 0) or np.any(true < 0):
        raise DatasetError(f"{path}: partition does not cover every sample")
    return PartitionedDataset(ds, true, given, clean, pi_percent, noise_level_r)
