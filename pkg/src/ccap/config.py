"""Pipeline configuration: nested JSON sections with full defaults.

Every field is optional; a config file only overrides what it names.
Unknown keys abort with a usage error so typos cannot silently fall back
to defaults. Two runs from equal configs on equal inputs produce
byte-identical reports.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

from .errors import UsageError
from .learners import DTSpec, GBSpec, KNNSpec, LRSpec, RFSpec, SVMSpec

DEFAULTS: dict = {
    "schema": {
        "id": "ID",
        "status": "STATUS",
        "months": "MONTHS_BALANCE",
        "income": "AMT_INCOME_TOTAL",
    },
    "label": {
        "bad_statuses": ["2", "3", "4", "5"],
        "alphabet": ["C", "X", "0", "1", "2", "3", "4", "5"],
    },
    "preprocess": {
        "drop_missing_threshold": 0.30,
        "numeric_impute": "mean",
        "categorical_impute": "mode",
    },
    "features": {
        "interaction_pairs": None,  # None: scaled income x recency feature
        "polynomial_degree": 2,
        "temporal": True,
        "temporal_statuses": ["2", "3", "4", "5"],
    },
    "smote": {"k_neighbors": 5, "target_ratio": 1.0},
    "learners": {
        "lr": {"learning_rate": 0.3, "epochs": 400, "l2": 1e-4},
        "svm": {"c": 1.0, "epochs": 300},
        "knn": {"k": 25},
        "dt": {"max_depth": 8, "min_samples_split": 20},
        "rf": {
            "n_trees": 20,
            "max_depth": 9,
            "min_samples_split": 10,
            "feature_subsample": None,
            "bootstrap": True,
        },
        "gb": {
            "n_rounds": 40,
            "learning_rate": 0.25,
            "max_depth": 3,
            "l2_leaf": 0.0,
        },
        "xgb": {
            "n_rounds": 40,
            "learning_rate": 0.25,
            "max_depth": 3,
            "l2_leaf": 1.0,
        },
    },
    "mlp": {
        "hidden_sizes": [64, 32, 16],
        "learning_rate": 1e-3,
        "epochs": 30,
        "batch_size": 256,
    },
    "stack": {
        "bases": ["lr", "svm", "knn", "dt", "rf", "gb", "xgb"],
        "include_dense": True,
        "include_embeddings": True,
        "meta": {
            "hidden_sizes": [64, 32, 16],
            "learning_rate": 1e-3,
            "epochs": 30,
            "batch_size": 256,
        },
    },
    "protocol": {
        "test_fraction": 0.2,
        "folds": 5,
        "seed": 20240601,
        "threshold": 0.5,
    },
    "search": {"budget": 25},
}

MODEL_DISPLAY_NAMES = {
    "lr": "LR",
    "svm": "SVM",
    "knn": "KNN",
    "dt": "DCT",
    "rf": "RF",
    "gb": "GB",
    "xgb": "XGBoost",
    "mlp": "MLP",
    "stack": "NN+Ensemble",
}

_SPEC_CLASSES = {
    "lr": LRSpec,
    "svm": SVMSpec,
    "knn": KNNSpec,
    "dt": DTSpec,
    "rf": RFSpec,
    "gb": GBSpec,
    "xgb": GBSpec,
}


def _merge(defaults, override, path: str):
    if override is None:
        return copy.deepcopy(defaults)
    if not isinstance(defaults, dict):
        return copy.deepcopy(override)
    if not isinstance(override, dict):
        raise UsageError(f"config section {path!r} must be an object")
    out = copy.deepcopy(defaults)
    for key, value in override.items():
        if key not in defaults:
            raise UsageError(f"unknown config key {path + key!r}")
        if isinstance(defaults[key], dict) and defaults[key]:
            out[key] = _merge(defaults[key], value, path + key + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass(frozen=True)
class PipelineConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def from_dict(cls, override: dict | None) -> "PipelineConfig":
        return cls(raw=_merge(DEFAULTS, override or {}, ""))

    @classmethod
    def load(cls, path: str | None) -> "PipelineConfig":
        if path is None:
            return cls.from_dict(None)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError(f"config {path} must contain a JSON object")
        return cls.from_dict(data)

    def with_overrides(self, **sections) -> "PipelineConfig":
        return PipelineConfig.from_dict(_merge(self.raw, sections, ""))

    # -- convenience accessors -------------------------------------------

    def __getitem__(self, section: str) -> dict:
        return self.raw[section]

    @property
    def seed(self) -> int:
        return int(self.raw["protocol"]["seed"])

    @property
    def threshold(self) -> float:
        return float(self.raw["protocol"]["threshold"])

    def learner_spec(self, kind: str):
        if kind not in _SPEC_CLASSES:
            raise UsageError(f"unknown learner kind {kind!r}")
        params = dict(self.raw["learners"][kind])
        try:
            return _SPEC_CLASSES[kind](**params)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad hyperparameters for {kind!r}: {exc}") from exc

    def snapshot(self) -> dict:
        return copy.deepcopy(self.raw)


def dump_default_config() -> str:
    return json.dumps(DEFAULTS, indent=2, sort_keys=True)
