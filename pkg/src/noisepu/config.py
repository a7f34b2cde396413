"""Experiment configuration: a flat ``key = value`` text format with dotted keys.

Lines starting with ``#`` (and trailing ``# ...``) are comments.  Example::

    pi = 10
    noise.kind = symmetric,asymmetric
    noise.r = 30
    pu.N = 20
    student.lr_steps = 30:10,50:10,80:10
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .dataset import CIFAR10_PAIRS, NoiseSpec
from .distill import LABEL_MODES, DistillParams
from .learner import TrainConfig
from .pu_augment import PUParams


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


FILTER_DEFAULTS = TrainConfig(epochs=30, batch_size=32, lr=0.01, lr_steps=((20, 10),))
NETWORK_DEFAULTS = TrainConfig(epochs=100, batch_size=32, lr=0.05,
                               lr_steps=((30, 10), (50, 10), (80, 10)),
                               mixup_mu=2.0, entropy_weight=0.1, hidden_units=64)


@dataclass(frozen=True)
class DataSpec:
    source: str = "synthetic"
    num_classes: int = 3
    per_class: int = 1000
    dim: int = 8
    separation: float = 6.0
    test_per_class: int = 500
    path: str = ""
    test_path: str = ""
    test_fraction: float = 0.2
    partition: str = ""


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataSpec = field(default_factory=DataSpec)
    pi_percent: float = 10.0
    noise: tuple = (NoiseSpec("symmetric", 30.0),)
    pu: PUParams = field(default_factory=lambda: PUParams(3, 20, 0.9, None, FILTER_DEFAULTS))
    distill: DistillParams = field(default_factory=lambda: DistillParams(
        5, 0.9, 0.5, "soft_bootstrap", NETWORK_DEFAULTS, NETWORK_DEFAULTS))
    trials: int = 1
    base_seed: int = 0
    out_dir: str = "reports"
    etas: tuple = (0.0, 0.5, 0.6, 0.7, 0.8, 0.9)
    ablation: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials: must be >= 1")
        if not 0 < self.pi_percent <= 100:
            raise ConfigError("pi: must lie in (0, 100]")


_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}
_DATA_KEYS = {f.name for f in fields(DataSpec)}


def _parse_bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_steps(s):
    s = s.strip()
    if not s or s.lower() == "none":
        return ()
    return tuple((int(e), float(d)) for e, d in (item.split(":") for item in s.split(",")))


def _parse_pairs(s):
    return tuple((int(a), int(b)) for a, b in (item.split(">") for item in s.split(",") if item.strip()))


def _typed(key, raw, kind):
    try:
        if kind is bool:
            return _parse_bool(raw)
        if kind == "steps":
            return _parse_steps(raw)
        return kind(raw.strip())
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from None


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def _train_config(base: TrainConfig, prefix: str, kv: dict) -> TrainConfig:
    updates = {}
    for name in _TRAIN_KEYS:
        key = f"{prefix}.{name}"
        if key in kv:
            kind = {"lr_steps": "steps", "epochs": int, "batch_size": int, "hidden_units": int}.get(name, float)
            updates[name] = _typed(key, kv.pop(key), kind)
    try:
        return replace(base, **updates)
    except ValueError as exc:
        raise ConfigError(f"{prefix}: {exc}") from None


def build_config(kv: dict) -> ExperimentConfig:
    kv = dict(kv)
    d = {}
    for name in _DATA_KEYS:
        key = f"data.{name}"
        if key in kv:
            kind = {"num_classes": int, "per_class": int, "dim": int, "test_per_class": int,
                    "separation": float, "test_fraction": float}.get(name, str)
            d[name] = _typed(key, kv.pop(key), kind)
    data = DataSpec(**d)
    if data.source not in ("synthetic", "csv"):
        raise ConfigError("data.source: must be 'synthetic' or 'csv'")
    if data.source == "csv" and not data.path:
        raise ConfigError("data.path: required when data.source = csv")

    pi = _typed("pi", kv.pop("pi", "10"), float)

    kinds = [k.strip() for k in kv.pop("noise.kind", "symmetric").split(",") if k.strip()]
    r = _typed("noise.r", kv.pop("noise.r", "30"), float)
    pairs_raw = kv.pop("noise.pairs", "")
    pairs = _typed("noise.pairs", pairs_raw, _parse_pairs) if pairs_raw else ()
    noise = []
    for kind in kinds:
        if kind == "asymmetric" and not pairs:
            if data.num_classes != 10:
                raise ConfigError("noise.pairs: required for asymmetric noise unless num_classes = 10")
            pairs = CIFAR10_PAIRS
        try:
            noise.append(NoiseSpec(kind, r, pairs if kind == "asymmetric" else ()))
        except ValueError as exc:
            raise ConfigError(f"noise.kind: {exc}") from None
    if not noise:
        raise ConfigError("noise.kind: at least one noise kind is required")

    filt = _train_config(FILTER_DEFAULTS, "pu.train", kv)
    N = _typed("pu.N", kv.pop("pu.N", "20"), int)
    theta_raw = kv.pop("pu.theta", "")
    try:
        pu = PUParams(
            iterations_K=_typed("pu.K", kv.pop("pu.K", "3"), int),
            ensemble_N=N,
            positive_threshold_alpha=_typed("pu.alpha", kv.pop("pu.alpha", "0.9"), float),
            reliability_theta=_typed("pu.theta", theta_raw, int) if theta_raw else math.ceil(0.95 * N),
            filter_train_config=filt,
        )
    except ValueError as exc:
        raise ConfigError(f"pu: {exc}") from None

    teacher = _train_config(NETWORK_DEFAULTS, "teacher", kv)
    student = _train_config(NETWORK_DEFAULTS, "student", kv)
    mode = kv.pop("distill.label_mode", "soft_bootstrap")
    if mode not in LABEL_MODES:
        raise ConfigError(f"distill.label_mode: must be one of {', '.join(LABEL_MODES)}")
    try:
        distill = DistillParams(
            teacher_count_Nt=_typed("distill.Nt", kv.pop("distill.Nt", "5"), int),
            confidence_eta=_typed("distill.eta", kv.pop("distill.eta", "0.9"), float),
            lam=_typed("distill.lambda", kv.pop("distill.lambda", "0.5"), float),
            label_mode=mode,
            teacher_train_config=teacher,
            student_train_config=student,
        )
    except ValueError as exc:
        raise ConfigError(f"distill: {exc}") from None

    etas_raw = kv.pop("etas", "")
    etas = tuple(float(e) for e in etas_raw.split(",")) if etas_raw else ExperimentConfig.etas
    cfg = ExperimentConfig(
        data=data, pi_percent=pi, noise=tuple(noise), pu=pu, distill=distill,
        trials=_typed("trials", kv.pop("trials", "1"), int),
        base_seed=_typed("seed", kv.pop("seed", "0"), int),
        out_dir=kv.pop("out", "reports"),
        etas=etas,
        ablation=_typed("ablation", kv.pop("ablation", "false"), bool),
    )
    if kv:
        raise ConfigError(f"{sorted(kv)[0]}: unknown configuration key")
    return cfg


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    kv = parse_config_text(text)
    kv.update(overrides or {})
    return build_config(kv)


def _fmt_train(prefix, tc: TrainConfig):
    steps = ",".join(f"{e}:{d!r}" for e, d in tc.lr_steps) or "none"
    return [(f"{prefix}.epochs", tc.epochs), (f"{prefix}.batch_size", tc.batch_size),
            (f"{prefix}.lr", repr(tc.lr)), (f"{prefix}.lr_steps", steps),
            (f"{prefix}.momentum", repr(tc.momentum)), (f"{prefix}.weight_decay", repr(tc.weight_decay)),
            (f"{prefix}.mixup_mu", repr(tc.mixup_mu)), (f"{prefix}.entropy_weight", repr(tc.entropy_weight)),
            (f"{prefix}.hidden_units", tc.hidden_units)]


def config_to_items(cfg: ExperimentConfig) -> list[tuple[str, object]]:
    """Fully resolved configuration as ``(key, value)`` pairs, re-parseable by :func:`build_config`.

    The output directory is left out so that reruns into different directories
    produce identical manifests.
    """
    items = [(f"data.{f.name}", getattr(cfg.data, f.name)) for f in fields(DataSpec)]
    pairs = next((n.pair_map for n in cfg.noise if n.pair_map), ())
    items += [("pi", repr(cfg.pi_percent)),
              ("noise.kind", ",".join(n.kind for n in cfg.noise)),
              ("noise.r", repr(cfg.noise[0].level_r))]
    if pairs:
        items.append(("noise.pairs", ",".join(f"{a}>{b}" for a, b in pairs)))
    items += [("pu.K", cfg.pu.iterations_K), ("pu.N", cfg.pu.ensemble_N),
              ("pu.alpha", repr(cfg.pu.positive_threshold_alpha)), ("pu.theta", cfg.pu.reliability_theta)]
    items += _fmt_train("pu.train", cfg.pu.filter_train_config)
    dp = cfg.distill
    items += [("distill.Nt", dp.teacher_count_Nt), ("distill.eta", repr(dp.confidence_eta)),
              ("distill.lambda", repr(dp.lam)), ("distill.label_mode", dp.label_mode)]
    items += _fmt_train("teacher", dp.teacher_train_config)
    items += _fmt_train("student", dp.student_train_config)
    items += [("trials", cfg.trials), ("seed", cfg.base_seed),
              ("etas", ",".join(repr(e) for e in cfg.etas)), ("ablation", str(cfg.ablation).lower())]
    return items


def config_to_text(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config_to_items(cfg))
