"""PU-learning clean-set augmentation and teacher/student distillation for noisy labels."""
from .dataset import (LabeledDataset, NoiseSpec, PartitionedDataset, inject_noise, load_csv_dataset,
                      make_synthetic_blobs, split_clean_noisy)
from .distill import DistillParams, TeacherEnsemble, gen_pseudo_label, teacher_predict, train_teacher_ensemble
from .learner import Classifier, TrainConfig, predict_proba, train_classifier
from .pu_augment import AugmentedCleanSet, PUParams, augment_clean_set

__version__ = "0.1.0"
