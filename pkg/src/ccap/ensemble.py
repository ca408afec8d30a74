"""Stacking ensemble with out-of-fold level-1 predictions.

For each fold, every base learner trains on the SMOTE-balanced data of the
other folds and scores the fold's original rows, so each training row
receives level-1 scores from models that never saw it. The meta-learner
(an MLP) consumes [base scores || dense features] plus categorical ids
through embedding tables, and trains on the original labels. For inference
the bases are refit on the full SMOTE-balanced training set.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .audit import AccessAudit
from .data import FeatureMatrix, Labels
from .errors import TrainingError
from .learners import FittedModel, LearnerSpec, fit, predict_proba
from .neural import MlpModel, MlpSpec, embedding_widths, forward, train
from .resample import SmoteConfig, smote
from .util import spawn_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StackSpec:
    base_specs: tuple  # ((name, LearnerSpec), ...)
    meta_spec: MlpSpec
    smote_cfg: SmoteConfig
    include_dense: bool = True
    include_embeddings: bool = True
    seed: int = 0

    def __post_init__(self):
        if len(self.base_specs) < 2:
            raise TrainingError("stacking needs at least two base learners")


@dataclass
class OofResult:
    """Level-1 matrix plus the provenance needed for leakage checks."""

    scores: np.ndarray  # (rows, n_bases)
    fold_of: np.ndarray  # fold id whose held-out model scored each row
    row_ids: np.ndarray  # caller-supplied identity of each row
    smote_input_rows: dict  # fold -> row_ids fed into SMOTE
    models: dict | None  # (fold, base index) -> FittedModel, when kept


@dataclass
class StackModel:
    base_names: list[str]
    bases: list[FittedModel]
    meta: MlpModel
    include_dense: bool
    include_embeddings: bool
    n_features: int
    cat_cardinalities: list[int]

    def base_scores(self, m) -> np.ndarray:
        X = m.data if isinstance(m, FeatureMatrix) else np.asarray(m, dtype=np.float64)
        return np.column_stack([predict_proba(b, X) for b in self.bases])


def _seeded(spec: LearnerSpec, seed: int, *path) -> LearnerSpec:
    if hasattr(spec, "seed"):
        return dataclasses.replace(spec, seed=spawn_seed(seed, *path))
    return spec


def _as_matrix(m) -> np.ndarray:
    return m.data if isinstance(m, FeatureMatrix) else np.asarray(m, dtype=np.float64)


def oof_predictions(
    base_specs,
    m,
    y: Labels,
    fold_of,
    smote_cfg: SmoteConfig,
    seed: int = 0,
    threads: int = 1,
    keep_models: bool = False,
    row_ids=None,
    audit: AccessAudit | None = None,
) -> OofResult:
    """Out-of-fold level-1 score matrix, one column per base learner.

    ``fold_of`` assigns each row of ``m`` to a fold. For fold f, bases
    train on the SMOTE-balanced rows of all other folds and score fold f's
    original rows. SMOTE never sees fold f, and only original (never
    synthetic) rows are scored.
    """
    m = _ensure_matrix(m)
    X = m.data
    labels = y.values if isinstance(y, Labels) else np.asarray(y)
    fold_of = np.asarray(fold_of, dtype=np.int64)
    if fold_of.size != X.shape[0]:
        raise TrainingError("fold assignment does not cover the training rows")
    row_ids = (
        np.arange(X.shape[0], dtype=np.int64)
        if row_ids is None
        else np.asarray(row_ids, dtype=np.int64)
    )
    folds = sorted(int(f) for f in np.unique(fold_of))

    # balance each fold-training portion once, shared across bases
    fold_train: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    smote_inputs: dict[int, np.ndarray] = {}
    for f in folds:
        tr = np.flatnonzero(fold_of != f)
        cfg = dataclasses.replace(smote_cfg, seed=spawn_seed(seed, "smote", f))
        res = smote(m.take_rows(tr), Labels(labels[tr]), cfg)
        fold_train[f] = (res.matrix.data, res.labels.values.astype(np.float64))
        smote_inputs[f] = row_ids[tr]
        if audit is not None:
            audit.record("smote_input", row_ids[tr], context=f"fold{f}")

    def run_task(task):
        f, b, (name, spec) = task
        Xb, yb = fold_train[f]
        try:
            model = fit(_seeded(spec, seed, "fold", f, "base", b), Xb, yb)
        except Exception as exc:
            raise TrainingError(
                f"base learner {name!r} failed on fold {f}: {exc}"
            ) from exc
        hold = np.flatnonzero(fold_of == f)
        return f, b, model, hold, predict_proba(model, X[hold])

    tasks = [(f, b, pair) for f in folds for b, pair in enumerate(base_specs)]
    scores = np.full((X.shape[0], len(base_specs)), np.nan)
    models: dict = {}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_task, tasks))
    else:
        results = [run_task(t) for t in tasks]
    for f, b, model, hold, preds in results:
        scores[hold, b] = preds
        if keep_models:
            models[(f, b)] = model

    if np.isnan(scores).any():
        raise TrainingError("out-of-fold matrix has uncovered rows")
    return OofResult(
        scores=scores,
        fold_of=fold_of.copy(),
        row_ids=row_ids,
        smote_input_rows=smote_inputs,
        models=models if keep_models else None,
    )


def _ensure_matrix(m) -> FeatureMatrix:
    if isinstance(m, FeatureMatrix):
        return m
    from .data import ColMeta

    X = np.asarray(m, dtype=np.float64)
    meta = [
        ColMeta(name=f"f{i}", source=f"f{i}", encoding="scaled")
        for i in range(X.shape[1])
    ]
    return FeatureMatrix(data=X, col_meta=meta)


def fit_stack(
    spec: StackSpec,
    m,
    cat_ids,
    y: Labels,
    fold_of,
    cat_cardinalities=None,
    threads: int = 1,
    row_ids=None,
    audit: AccessAudit | None = None,
    keep_oof: bool = False,
):
    """Train the full stack: OOF matrix, meta MLP, and refit bases.

    Returns (StackModel, OofResult or None).
    """
    m = _ensure_matrix(m)
    X = m.data
    labels = y.values if isinstance(y, Labels) else np.asarray(y)
    oof = oof_predictions(
        spec.base_specs,
        m,
        y,
        fold_of,
        spec.smote_cfg,
        seed=spec.seed,
        threads=threads,
        row_ids=row_ids,
        audit=audit,
    )

    meta_dense = oof.scores
    if spec.include_dense:
        meta_dense = np.hstack([oof.scores, X])

    use_embeddings = (
        spec.include_embeddings
        and cat_ids is not None
        and np.size(cat_ids) > 0
    )
    if use_embeddings:
        cat_ids = np.asarray(cat_ids, dtype=np.int64)
        cards = [int(c) for c in (cat_cardinalities or (cat_ids.max(axis=0) + 1))]
        widths = embedding_widths(cards)
        meta_spec = dataclasses.replace(
            spec.meta_spec, embeddings=tuple(zip(cards, widths))
        )
        meta = train(meta_spec, meta_dense, cat_ids, labels)
    else:
        cards = []
        meta_spec = dataclasses.replace(spec.meta_spec, embeddings=())
        meta = train(meta_spec, meta_dense, None, labels)

    # refit every base on the full balanced training set for inference
    cfg = dataclasses.replace(spec.smote_cfg, seed=spawn_seed(spec.seed, "smote", "full"))
    res = smote(m, Labels(labels), cfg)
    if audit is not None:
        rid = oof.row_ids
        audit.record("smote_input", rid, context="full-train")
    bases = []
    for b, (name, base_spec) in enumerate(spec.base_specs):
        try:
            bases.append(
                fit(
                    _seeded(base_spec, spec.seed, "base", "full", b),
                    res.matrix.data,
                    res.labels.values.astype(np.float64),
                )
            )
        except Exception as exc:
            raise TrainingError(f"base learner {name!r} failed on refit: {exc}") from exc

    model = StackModel(
        base_names=[name for name, _ in spec.base_specs],
        bases=bases,
        meta=meta,
        include_dense=spec.include_dense,
        include_embeddings=use_embeddings,
        n_features=X.shape[1],
        cat_cardinalities=cards,
    )
    return model, (oof if keep_oof else None)


def predict_stack(model: StackModel, m, cat_ids=None, base_scores=None) -> np.ndarray:
    """Final stacked probability for each row."""
    X = _as_matrix(m)
    if X.shape[1] != model.n_features:
        raise ValueError(
            f"feature width {X.shape[1]} does not match training width "
            f"{model.n_features}"
        )
    scores = (
        np.asarray(base_scores, dtype=np.float64)
        if base_scores is not None
        else model.base_scores(X)
    )
    if scores.shape != (X.shape[0], len(model.bases)):
        raise ValueError("base score block has the wrong shape")
    meta_dense = np.hstack([scores, X]) if model.include_dense else scores
    if model.include_embeddings:
        if cat_ids is None:
            raise ValueError("stack was trained with embeddings; category ids required")
        return forward(model.meta, meta_dense, np.asarray(cat_ids, dtype=np.int64))
    return forward(model.meta, meta_dense, None)
