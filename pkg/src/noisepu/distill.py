"""Teacher ensemble on the augmented clean set, case-wise pseudo-labels, and the student."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import PartitionedDataset
from .learner import Classifier, TrainConfig, one_hot, train_classifier, with_seed
from .pu_augment import AugmentedCleanSet
from .rng import derive_seed, make_rng

LABEL_MODES = ("soft_bootstrap", "hard_bootstrap", "hard")


@dataclass(frozen=True)
class DistillParams:
    teacher_count_Nt: int = 5
    confidence_eta: float = 0.9
    lam: float = 0.5
    label_mode: str = "soft_bootstrap"
    teacher_train_config: TrainConfig = field(default_factory=TrainConfig)
    student_train_config: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.teacher_count_Nt < 1:
            raise ValueError("teacher count must be >= 1")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        # eta slightly above 1 is allowed: it disables the teacher entirely
        if self.confidence_eta < 0:
            raise ValueError("eta must be >= 0")
        if self.label_mode not in LABEL_MODES:
            raise ValueError(f"label_mode must be one of {LABEL_MODES}")


@dataclass
class TeacherEnsemble:
    members: list
    per_class_size: int

    def predict(self, x) -> np.ndarray:
        return teacher_predict(self, x)


@dataclass
class PseudoLabel:
    target: np.ndarray
    mode: str
    teacher_confident: bool


def train_teacher_ensemble(aug: AugmentedCleanSet, pd: PartitionedDataset,
                           params: DistillParams, seed: int) -> TeacherEnsemble:
    """Each member sees ``min_i |P^(i)|`` samples per class, drawn with replacement."""
    C = aug.num_classes
    pools = [aug.class_members(c) for c in range(C)]
    for c, pool in enumerate(pools):
        if pool.size == 0:
            raise ValueError(f"augmented clean set has no samples of class {c}")
    size = min(pool.size for pool in pools)
    labels = np.repeat(np.arange(C), size)
    targets = one_hot(labels, C)
    members = []
    for n in range(params.teacher_count_Nt):
        rng = make_rng(derive_seed(seed, "teacher-sample", n))
        idx = np.concatenate([rng.choice(pool, size=size, replace=True) for pool in pools])
        config = with_seed(params.teacher_train_config, derive_seed(seed, "teacher-train", n))
        members.append(train_classifier(pd.features[idx], targets, config))
    return TeacherEnsemble(members, size)


def teacher_predict(ens: TeacherEnsemble, x) -> np.ndarray:
    return np.mean([m.predict_proba(x) for m in ens.members], axis=0)


def _argmax_one_hot(p: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximal index, i.e. ties go to the lowest class
    return one_hot(np.argmax(p, axis=-1), p.shape[-1])


def pseudo_label_targets(teacher_out, corrected_given, params: DistillParams):
    """Vectorised pseudo-labels: returns ``(targets, confident_mask)``.

    ``teacher_out`` and ``corrected_given`` are ``(n, C)`` matrices, the
    latter one-hot.  Samples whose top teacher probability is below ``eta``
    keep their corrected given label in every mode.
    """
    f = np.atleast_2d(np.asarray(teacher_out, dtype=np.float64))
    y = np.atleast_2d(np.asarray(corrected_given, dtype=np.float64))
    confident = f.max(axis=1) >= params.confidence_eta
    if params.label_mode == "hard":
        blended = _argmax_one_hot(f)
    else:
        source = f if params.label_mode == "soft_bootstrap" else _argmax_one_hot(f)
        blended = params.lam * source + (1 - params.lam) * y
    return np.where(confident[:, None], blended, y), confident


def gen_pseudo_label(teacher_out, corrected_given, params: DistillParams) -> PseudoLabel:
    target, confident = pseudo_label_targets(teacher_out, corrected_given, params)
    return PseudoLabel(target[0], params.label_mode, bool(confident[0]))


def student_targets(pd_corrected: PartitionedDataset, teacher_out_noisy, params: DistillParams):
    """Full training-target matrix: clean samples keep one-hot labels, D_n gets pseudo-labels.

    Returns ``(targets, confident_mask_over_noisy)``.
    """
    C = pd_corrected.num_classes
    targets = one_hot(pd_corrected.given_labels, C)
    noisy = pd_corrected.noisy_indices
    confident = np.zeros(noisy.size, dtype=bool)
    if noisy.size:
        targets[noisy], confident = pseudo_label_targets(teacher_out_noisy, targets[noisy], params)
    return targets, confident


def student_config(params: DistillParams, seed: int) -> TrainConfig:
    """Student training config with its derived seed; the plain-CE baseline reuses it."""
    return with_seed(params.student_train_config, derive_seed(seed, "student-train"))


def train_student(pd_corrected: PartitionedDataset, targets, params: DistillParams, seed: int) -> Classifier:
    return train_classifier(pd_corrected.features, targets, student_config(params, seed))


def save_pseudo_label_csv(indices, targets, confident, mode: str, path) -> None:
    C = targets.shape[1]
    with open(path, "w") as fh:
        fh.write(",".join(["index", "mode", "confident"] + [f"target_{c}" for c in range(C)]) + "\n")
        for i, t, conf in zip(np.asarray(indices).tolist(), targets, np.asarray(confident).tolist()):
            fh.write(",".join([str(i), mode, str(int(conf))] + [repr(float(v)) for v in t]) + "\n")
