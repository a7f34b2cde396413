"""Per-class iterative PU augmentation of the trusted clean subset.

For each class ``i`` the noisy pool is treated as unlabeled.  An ensemble of
``N`` binary filters is trained on ``D_c^(i)`` plus a draw from the current
reliable set (positives) against draws from the rest of the noisy pool and
from the other classes' clean samples (negatives).  Samples that at least
``theta`` members score at or above ``alpha`` become the new reliable set.
Given labels of noisy samples are never read.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import PartitionedDataset
from .learner import Classifier, TrainConfig, one_hot, train_classifier, with_seed
from .rng import derive_seed, make_rng


@dataclass(frozen=True)
class PUParams:
    iterations_K: int = 3
    ensemble_N: int = 20
    positive_threshold_alpha: float = 0.9
    reliability_theta: int | None = None
    filter_train_config: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.iterations_K < 1 or self.ensemble_N < 1:
            raise ValueError("K and N must be >= 1")
        if not 0.0 < self.positive_threshold_alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.reliability_theta is None:
            object.__setattr__(self, "reliability_theta", math.ceil(0.95 * self.ensemble_N))
        if not 1 <= self.reliability_theta <= self.ensemble_N:
            raise ValueError("theta must lie in [1, N]")


@dataclass(frozen=True)
class BootstrapSizes:
    m_k: int
    m_prime_k: int


@dataclass
class Selection:
    """Noisy-pool indices accepted by one ensemble, with their vote counts and mean scores."""

    indices: np.ndarray
    votes: np.ndarray
    mean_score: np.ndarray

    @classmethod
    def empty(cls):
        return cls(np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))

    def __len__(self):
        return self.indices.size


@dataclass
class AugmentedCleanSet:
    num_classes: int
    reliable: list            # per class: Selection (P-hat^(i)), after conflict resolution
    clean: list               # per class: D_c^(i) indices

    def class_members(self, cls: int) -> np.ndarray:
        """P^(i) = P-hat^(i) united with D_c^(i)."""
        return np.union1d(self.reliable[cls].indices, self.clean[cls])

    def assigned(self):
        """``(indices, labels, votes, mean_scores)`` over all reliable samples, sorted by index."""
        idx = np.concatenate([s.indices for s in self.reliable])
        lab = np.concatenate([np.full(len(s), c, np.int64) for c, s in enumerate(self.reliable)])
        votes = np.concatenate([s.votes for s in self.reliable])
        score = np.concatenate([s.mean_score for s in self.reliable])
        order = np.argsort(idx, kind="stable")
        return idx[order], lab[order], votes[order], score[order]

    @property
    def size(self) -> int:
        return sum(len(s) for s in self.reliable)

    def corrected_labels(self, pd: PartitionedDataset) -> np.ndarray:
        given = pd.given_labels.copy()
        idx, lab, _, _ = self.assigned()
        given[idx] = lab
        return given


def compute_bootstrap_sizes(clean_count: int, reliable_count: int) -> BootstrapSizes:
    m = min(clean_count, reliable_count)
    return BootstrapSizes(m, (m + clean_count) // 2)


def _draw(pool: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    if size == 0 or pool.size == 0:
        return np.empty(0, np.int64)
    return rng.choice(pool, size=size, replace=pool.size < size)


def sample_filter_sets(class_i: int, pd: PartitionedDataset, reliable: np.ndarray,
                       sizes: BootstrapSizes, seed: int):
    """Draw ``(P', N', N'')`` for one ensemble member.

    ``reliable`` is the current P-hat^(i).  N' comes from the noisy pool minus
    P-hat^(i), N'' from the other classes' clean samples.  Draws are without
    replacement unless a pool is smaller than the requested size.
    """
    rng = make_rng(seed)
    reliable = np.asarray(reliable, dtype=np.int64)
    noisy_rest = np.setdiff1d(pd.noisy_indices, reliable)
    other_clean = np.flatnonzero(pd.clean_mask & (pd.given_labels != class_i))
    pos = _draw(reliable, sizes.m_k, rng)
    neg_noisy = _draw(noisy_rest, sizes.m_prime_k, rng)
    neg_clean = _draw(other_clean, sizes.m_prime_k, rng)
    return pos, neg_noisy, neg_clean


def _train_member(features, clean_i, pos, neg_noisy, neg_clean, config):
    positives = np.concatenate([clean_i, pos])
    negatives = np.concatenate([neg_noisy, neg_clean])
    idx = np.concatenate([positives, negatives])
    targets = one_hot(np.r_[np.ones(positives.size, np.int64), np.zeros(negatives.size, np.int64)], 2)
    return train_classifier(features[idx], targets, config)


def train_filter_ensemble(class_i: int, pd: PartitionedDataset, reliable: np.ndarray,
                          params: PUParams, iteration_k: int, seed: int = 0) -> list[Classifier]:
    clean_i = pd.clean_indices_of(class_i)
    if clean_i.size == 0:
        raise ValueError(f"class {class_i} has no clean samples")
    sizes = compute_bootstrap_sizes(clean_i.size, len(reliable))
    members = []
    for n in range(params.ensemble_N):
        draw_seed = derive_seed(seed, "filter-sample", class_i, iteration_k, n)
        pos, neg_noisy, neg_clean = sample_filter_sets(class_i, pd, reliable, sizes, draw_seed)
        config = with_seed(params.filter_train_config, derive_seed(seed, "filter-train", class_i, iteration_k, n))
        members.append(_train_member(pd.features, clean_i, pos, neg_noisy, neg_clean, config))
    return members


def select_from_scores(scores: np.ndarray, alpha: float, theta: int):
    """Vote counting on an ``(N, n_pool)`` score table.

    Returns ``(positions, votes, mean_score)`` for pool positions with at
    least ``theta`` members scoring ``>= alpha``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    votes = (scores >= alpha).sum(axis=0)
    keep = np.flatnonzero(votes >= theta)
    return keep, votes[keep], scores[:, keep].mean(axis=0)


def select_reliable_positives(ensemble, pd: PartitionedDataset, alpha: float, theta: int) -> Selection:
    noisy = pd.noisy_indices
    if noisy.size == 0:
        return Selection.empty()
    scores = np.stack([clf.positive_score(pd.features[noisy]) for clf in ensemble])
    pos, votes, mean = select_from_scores(scores, alpha, theta)
    return Selection(noisy[pos], votes.astype(np.int64), mean)


def augment_class(class_i: int, pd: PartitionedDataset, params: PUParams, seed: int) -> Selection:
    """Run K filter/select rounds for one class; P-hat is recomputed each round."""
    current = Selection.empty()
    for k in range(params.iterations_K):
        ensemble = train_filter_ensemble(class_i, pd, current.indices, params, k, seed)
        current = select_reliable_positives(ensemble, pd, params.positive_threshold_alpha,
                                            params.reliability_theta)
    return current


def resolve_conflicts(selections: list) -> list:
    """Keep each sample in at most one class.

    Higher vote count wins, then higher mean score; exact ties drop the sample.
    """
    best: dict[int, tuple] = {}
    contested: set[int] = set()
    for cls, sel in enumerate(selections):
        for idx, v, s in zip(sel.indices.tolist(), sel.votes.tolist(), sel.mean_score.tolist()):
            if idx not in best:
                best[idx] = (v, s, cls)
                continue
            bv, bs, _ = best[idx]
            if (v, s) > (bv, bs):
                best[idx] = (v, s, cls)
                contested.discard(idx)
            elif (v, s) == (bv, bs):
                contested.add(idx)
    out = []
    for cls, sel in enumerate(selections):
        keep = np.array([best[i][2] == cls and i not in contested for i in sel.indices.tolist()], dtype=bool)
        out.append(Selection(sel.indices[keep], sel.votes[keep], sel.mean_score[keep]) if keep.size
                   else Selection.empty())
    return out


def augment_clean_set(pd: PartitionedDataset, params: PUParams, seed: int) -> AugmentedCleanSet:
    C = pd.num_classes
    clean = [pd.clean_indices_of(c) for c in range(C)]
    for c, members in enumerate(clean):
        if members.size == 0:
            raise ValueError(f"class {c} has no clean samples")
    if pd.noisy_indices.size == 0:
        return AugmentedCleanSet(C, [Selection.empty() for _ in range(C)], clean)
    selections = [augment_class(c, pd, params, seed) for c in range(C)]
    return AugmentedCleanSet(C, resolve_conflicts(selections), clean)


def apply_corrections(pd: PartitionedDataset, aug: AugmentedCleanSet) -> PartitionedDataset:
    """Rewrite given labels of reliable samples to their assigned class."""
    return pd.with_given_labels(aug.corrected_labels(pd))


def save_augmented_csv(aug: AugmentedCleanSet, path) -> None:
    idx, lab, votes, score = aug.assigned()
    with open(path, "w") as fh:
        fh.write("index,assigned_label,votes,mean_score\n")
        for row in zip(idx.tolist(), lab.tolist(), votes.tolist(), score.tolist()):
            fh.write(f"{row[0]},{row[1]},{row[2]},{row[3]!r}\n")
