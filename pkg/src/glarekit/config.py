"""Run configuration: dataclasses plus the JSON file format.

A run config file is a single JSON object with four sections::

    {
      "dataset":  {"root": "path", "resolution": [128, 128],
                   "synthetic": {"seed": 7, "count": 64}},
      "model":    {"depth": 2, "base_width": 8, "convs_per_block": 2},
      "train":    {"combo": "RGB+G", "optimizer": "adam",
                   "learning_rate": 0.001, "epochs": 12, "batch_size": 4,
                   "seed": 0, "folds": 8,
                   "contrast": {"window_n": 17, "window_m": 17, "stride_k": 4}},
      "ablation": {"combos": ["RGB+G", "C"]}
    }

All keys are optional; missing values take the defaults below.  The
dataset section needs either ``root`` (a directory in the standard
layout) or ``synthetic`` (a generated corpus).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigurationError
from .representations import ContrastParams, parse_combo
from .unet import BranchSpec, UNetConfig


@dataclass(frozen=True)
class TrainConfig:
    """Everything a single cross-validated training needs."""

    combo_id: str = "RGB+G"
    depth: int = 2
    base_width: int = 8
    convs_per_block: int = 2
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    epochs: int = 12
    batch_size: int = 4
    seed: int = 0
    folds: int = 8
    contrast: ContrastParams = field(default_factory=ContrastParams)

    def __post_init__(self):
        parse_combo(self.combo_id)
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigurationError(f"optimizer must be sgd or adam, got {self.optimizer!r}")
        if self.folds < 2:
            raise ConfigurationError("folds must be >= 2")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError("epochs must be >= 0 and batch_size >= 1")

    def unet_config(self, combo_id: str | None = None) -> UNetConfig:
        names = parse_combo(combo_id or self.combo_id)
        return UNetConfig(
            branches=tuple(BranchSpec.from_name(n) for n in names),
            depth=self.depth,
            base_width=self.base_width,
            convs_per_block=self.convs_per_block,
        )

    def with_combo(self, combo_id: str) -> "TrainConfig":
        return replace(self, combo_id=combo_id)

    def to_dict(self) -> dict:
        return {
            "combo": self.combo_id,
            "depth": self.depth,
            "base_width": self.base_width,
            "convs_per_block": self.convs_per_block,
            "optimizer": self.optimizer,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "folds": self.folds,
            "contrast": {
                "window_n": self.contrast.window_n,
                "window_m": self.contrast.window_m,
                "stride_k": self.contrast.stride_k,
            },
        }


@dataclass(frozen=True)
class DatasetSection:
    root: str | None = None
    resolution: tuple[int, int] = (128, 128)
    synthetic_seed: int | None = None
    synthetic_count: int | None = None

    @property
    def is_synthetic(self) -> bool:
        return self.synthetic_seed is not None


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetSection
    train: TrainConfig
    ablation_combos: tuple[str, ...] | None = None


def _expect_mapping(obj, name):
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigurationError(f"config section {name!r} must be an object")
    return obj


def parse_run_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError("run config must be a JSON object")
    known = {"dataset", "model", "train", "ablation"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"unknown config sections {sorted(unknown)}")

    ds = _expect_mapping(raw.get("dataset"), "dataset")
    model = _expect_mapping(raw.get("model"), "model")
    train = _expect_mapping(raw.get("train"), "train")
    ablation = _expect_mapping(raw.get("ablation"), "ablation")

    res = ds.get("resolution", [128, 128])
    if not (isinstance(res, (list, tuple)) and len(res) == 2):
        raise ConfigurationError(f"dataset.resolution must be [height, width], got {res!r}")
    synth = ds.get("synthetic")
    synth_seed = synth_count = None
    if synth is not None:
        synth = _expect_mapping(synth, "dataset.synthetic")
        synth_seed = int(synth.get("seed", 7))
        synth_count = int(synth.get("count", 64))
    dataset = DatasetSection(
        root=ds.get("root"),
        resolution=(int(res[0]), int(res[1])),
        synthetic_seed=synth_seed,
        synthetic_count=synth_count,
    )

    contrast_raw = _expect_mapping(train.get("contrast"), "train.contrast")
    contrast = ContrastParams(
        window_n=int(contrast_raw.get("window_n", 17)),
        window_m=int(contrast_raw.get("window_m", 17)),
        stride_k=int(contrast_raw.get("stride_k", 4)),
    )
    try:
        train_cfg = TrainConfig(
            combo_id=str(train.get("combo", "RGB+G")),
            depth=int(model.get("depth", 2)),
            base_width=int(model.get("base_width", 8)),
            convs_per_block=int(model.get("convs_per_block", 2)),
            optimizer=str(train.get("optimizer", "adam")),
            learning_rate=float(train.get("learning_rate", 1e-3)),
            epochs=int(train.get("epochs", 12)),
            batch_size=int(train.get("batch_size", 4)),
            seed=int(train.get("seed", 0)),
            folds=int(train.get("folds", 8)),
            contrast=contrast,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad train/model section: {exc}") from exc

    combos = ablation.get("combos")
    if combos is not None:
        combos = tuple(str(c) for c in combos)
        for c in combos:
            parse_combo(c)
    return RunConfig(dataset=dataset, train=train_cfg, ablation_combos=combos)


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"cannot parse config {path}: {exc}") from exc
    return parse_run_config(raw)
