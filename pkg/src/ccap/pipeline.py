"""End-to-end orchestration: train, evaluate, predict, profile.

The train path runs load -> merge -> label -> split -> fit preprocessing
on the training rows -> feature engineering -> SMOTE-balanced training of
every base learner, the standalone MLP, and the stacking ensemble ->
evaluation of all models on the untouched test split -> artifact and
report emission.

The modeling matrix is per-applicant: application-table features plus the
engineered credit-history recency feature. The raw status/months columns
never enter the matrix (the label is derived from them), and the merged
(application x credit-month) table feeds label derivation and profiling.
"""

from __future__ import annotations

import dataclasses
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .audit import AccessAudit
from .config import MODEL_DISPLAY_NAMES, PipelineConfig
from .data import (
    FeatureMatrix,
    FoldPlan,
    LabelPolicy,
    Labels,
    ScalerParams,
    Table,
    apply_impute,
    apply_one_hot,
    apply_scaler,
    categorical_ids,
    derive_label,
    drop_high_missing,
    fit_impute,
    fit_one_hot,
    fit_scaler,
    ImputeStats,
    OneHotVocab,
    load_tables,
    make_folds,
    merge_on_id,
    profile,
    split,
)
from .errors import CcapError, DataError, TrainingError
from .features import add_interactions, add_polynomial, time_since_last_default
from .ensemble import StackModel, StackSpec, fit_stack, predict_stack
from .learners import predict_proba
from .metrics import EvalReport, evaluate_model
from .neural import MlpSpec, forward, train as train_mlp
from .resample import SmoteConfig, smote
from .artifact import load_artifact, save_artifact
from .report import report_row, write_outputs
from .util import spawn_seed

logger = logging.getLogger(__name__)

RECENCY_FEATURE = "tsld"


@contextmanager
def _stage(name: str):
    try:
        yield
    except CcapError as exc:
        raise type(exc)(f"stage {name!r}: {exc}") from exc
    except Exception as exc:
        raise TrainingError(f"stage {name!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# Preprocessing state
# ---------------------------------------------------------------------------


@dataclass
class PreprocessState:
    """Everything needed to reproduce the feature matrix at inference."""

    schema: dict
    label: dict
    dropped_columns: list
    impute: ImputeStats
    vocab: OneHotVocab
    scaler: ScalerParams
    interaction_pairs: list
    polynomial_degree: int
    temporal_enabled: bool
    temporal_tokens: list
    window: int
    cat_names: list
    cat_cardinalities: list
    feature_names: list

    def to_dict(self) -> dict:
        return {
            "schema": dict(self.schema),
            "label": dict(self.label),
            "dropped_columns": list(self.dropped_columns),
            "impute": {
                "numeric_strategy": self.impute.numeric_strategy,
                "fill": dict(self.impute.fill),
            },
            "vocab": {
                "categories": dict(self.vocab.categories),
                "column_order": list(self.vocab.column_order),
                "kinds": dict(self.vocab.kinds),
            },
            "scaler": {
                "names": list(self.scaler.names),
                "mean": [float(v) for v in self.scaler.mean],
                "std": [float(v) for v in self.scaler.std],
                "constant": list(self.scaler.constant),
            },
            "interaction_pairs": [list(p) for p in self.interaction_pairs],
            "polynomial_degree": self.polynomial_degree,
            "temporal_enabled": self.temporal_enabled,
            "temporal_tokens": list(self.temporal_tokens),
            "window": self.window,
            "cat_names": list(self.cat_names),
            "cat_cardinalities": list(self.cat_cardinalities),
            "feature_names": list(self.feature_names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessState":
        return cls(
            schema=d["schema"],
            label=d["label"],
            dropped_columns=d["dropped_columns"],
            impute=ImputeStats(
                numeric_strategy=d["impute"]["numeric_strategy"],
                fill=d["impute"]["fill"],
            ),
            vocab=OneHotVocab(
                categories=d["vocab"]["categories"],
                column_order=d["vocab"]["column_order"],
                kinds=d["vocab"]["kinds"],
            ),
            scaler=ScalerParams(
                names=d["scaler"]["names"],
                mean=np.asarray(d["scaler"]["mean"], dtype=np.float64),
                std=np.asarray(d["scaler"]["std"], dtype=np.float64),
                constant=[bool(v) for v in d["scaler"]["constant"]],
            ),
            interaction_pairs=[tuple(p) for p in d["interaction_pairs"]],
            polynomial_degree=int(d["polynomial_degree"]),
            temporal_enabled=bool(d["temporal_enabled"]),
            temporal_tokens=list(d["temporal_tokens"]),
            window=int(d["window"]),
            cat_names=list(d["cat_names"]),
            cat_cardinalities=[int(c) for c in d["cat_cardinalities"]],
            feature_names=list(d["feature_names"]),
        )


def _label_policy(config: PipelineConfig) -> LabelPolicy:
    return LabelPolicy(
        status_column=config["schema"]["status"],
        bad_tokens=frozenset(config["label"]["bad_statuses"]),
        alphabet=frozenset(config["label"]["alphabet"]),
    )


def build_modeling_table(
    app: Table, credit: Table, policy: LabelPolicy
) -> tuple[Table, Labels, list]:
    """Application rows that have credit history, with per-ID labels."""
    ids, id_labels = derive_label(credit, policy)
    label_of = dict(zip(ids, id_labels.values.tolist()))
    app_ids = app.identifier_column().values
    keep = [i for i, v in enumerate(app_ids) if v in label_of]
    if not keep:
        raise DataError("no application rows have credit history")
    skipped = app.row_count - len(keep)
    if skipped:
        logger.info("skipping %d applicants without credit history", skipped)
    modeling = app.take_rows(keep)
    row_ids = [app_ids[i] for i in keep]
    y = Labels(np.array([label_of[v] for v in row_ids], dtype=np.int8))
    return modeling, y, row_ids


def _append_recency_column(
    table: Table, credit: Table, schema: dict, tokens, window: int | None, train_ids=None
) -> tuple[Table, int]:
    from .data import Column
    from .features import observation_window

    if window is None:
        window = observation_window(credit, schema["months"], ids=train_ids)
    feats, _ = time_since_last_default(
        credit,
        months_column=schema["months"],
        status_column=schema["status"],
        tokens=frozenset(tokens),
        window=window,
    )
    sentinel = float(window + 1)
    ids = table.identifier_column().values
    values = [feats.get(v, sentinel) for v in ids]
    cols = table.columns + [Column(RECENCY_FEATURE, "numeric", values)]
    return Table(columns=cols, row_count=table.row_count), window


def _resolve_interactions(config, feature_names: list) -> list:
    pairs = config["features"]["interaction_pairs"]
    if pairs is not None:
        return [tuple(p) for p in pairs]
    income = config["schema"]["income"]
    if income in feature_names and RECENCY_FEATURE in feature_names:
        return [(income, RECENCY_FEATURE)]
    return []


def fit_encode(
    modeling: Table,
    credit: Table,
    config: PipelineConfig,
    train_idx: np.ndarray,
    train_ids,
    audit: AccessAudit | None = None,
) -> tuple[FeatureMatrix, np.ndarray, PreprocessState]:
    """Fit all preprocessing on the training rows and encode every row."""
    pre = config["preprocess"]
    feats = config["features"]
    schema = config["schema"]

    def note(stage):
        if audit is not None:
            audit.record(stage, train_idx)

    table, dropped = drop_high_missing(
        modeling, float(pre["drop_missing_threshold"]), fit_rows=train_idx
    )
    note("drop_fit")
    impute_stats = fit_impute(
        table, pre["numeric_impute"], pre["categorical_impute"], fit_rows=train_idx
    )
    note("impute_fit")
    table = apply_impute(table, impute_stats)

    window = 0
    if feats["temporal"]:
        table, window = _append_recency_column(
            table, credit, schema, feats["temporal_statuses"], None, train_ids
        )
        note("recency_window_fit")

    vocab = fit_one_hot(table, fit_rows=train_idx)
    note("vocab_fit")
    m = apply_one_hot(table, vocab)
    cat_ids, cards, cat_names = categorical_ids(table, vocab)

    scaler = fit_scaler(m, fit_rows=train_idx)
    note("scaler_fit")
    m = apply_scaler(m, scaler)

    pairs = _resolve_interactions(config, m.column_names)
    m = add_interactions(m, pairs)
    m = add_polynomial(m, int(feats["polynomial_degree"]))

    state = PreprocessState(
        schema=dict(schema),
        label=dict(config["label"]),
        dropped_columns=dropped,
        impute=impute_stats,
        vocab=vocab,
        scaler=scaler,
        interaction_pairs=pairs,
        polynomial_degree=int(feats["polynomial_degree"]),
        temporal_enabled=bool(feats["temporal"]),
        temporal_tokens=list(feats["temporal_statuses"]),
        window=window,
        cat_names=cat_names,
        cat_cardinalities=cards,
        feature_names=m.column_names,
    )
    return m, cat_ids, state


def apply_encode(
    state: PreprocessState, app: Table, credit: Table | None
) -> tuple[FeatureMatrix, np.ndarray, list]:
    """Encode new rows with frozen preprocessing state."""
    keep = [c for c in app.columns if c.name not in set(state.dropped_columns)]
    table = Table(columns=keep, row_count=app.row_count)
    missing = [
        n
        for n in state.vocab.column_order
        if n != RECENCY_FEATURE and not table.has_column(n)
    ]
    if missing:
        raise DataError(
            "input is missing required columns: " + ", ".join(sorted(missing))
        )
    table = apply_impute(table, state.impute)
    if state.temporal_enabled:
        if credit is None:
            raise DataError("model uses credit-history features; credit file required")
        table, _ = _append_recency_column(
            table, credit, state.schema, state.temporal_tokens, state.window
        )
    m = apply_one_hot(table, state.vocab)
    cat_ids, _, _ = categorical_ids(table, state.vocab)
    m = apply_scaler(m, state.scaler)
    m = add_interactions(m, state.interaction_pairs)
    m = add_polynomial(m, state.polynomial_degree)
    if m.column_names != state.feature_names:
        raise DataError("encoded feature layout does not match the fitted state")
    ids = app.identifier_column().values
    return m, cat_ids, ids


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    report: dict
    evaluations: list
    state: PreprocessState
    models: dict
    fold_plan: FoldPlan
    train_idx: np.ndarray
    test_idx: np.ndarray
    written: list


def _stack_spec(config: PipelineConfig, seed: int) -> StackSpec:
    stack_cfg = config["stack"]
    bases = tuple(
        (MODEL_DISPLAY_NAMES[k], config.learner_spec(k)) for k in stack_cfg["bases"]
    )
    meta_cfg = stack_cfg["meta"]
    meta = MlpSpec(
        hidden_sizes=tuple(meta_cfg["hidden_sizes"]),
        learning_rate=float(meta_cfg["learning_rate"]),
        epochs=int(meta_cfg["epochs"]),
        batch_size=int(meta_cfg["batch_size"]),
        seed=spawn_seed(seed, "meta"),
    )
    smote_cfg = SmoteConfig(
        k_neighbors=int(config["smote"]["k_neighbors"]),
        target_ratio=float(config["smote"]["target_ratio"]),
        seed=spawn_seed(seed, "smote"),
    )
    return StackSpec(
        base_specs=bases,
        meta_spec=meta,
        smote_cfg=smote_cfg,
        include_dense=bool(stack_cfg["include_dense"]),
        include_embeddings=bool(stack_cfg["include_embeddings"]),
        seed=seed,
    )


def run_train(
    config: PipelineConfig,
    app_path: str,
    credit_path: str,
    out_dir: str | None = None,
    threads: int = 1,
    figures: bool = True,
    audit: AccessAudit | None = None,
) -> TrainResult:
    protocol = config["protocol"]
    seed = config.seed
    threshold = config.threshold

    with _stage("load"):
        app, credit = load_tables(app_path, credit_path, config["schema"]["id"])
    with _stage("merge"):
        merged = merge_on_id(app, credit)
        logger.info("merged dataset has %d rows", merged.row_count)
    with _stage("label"):
        modeling, y, row_ids = build_modeling_table(app, credit, _label_policy(config))
    with _stage("split"):
        train_idx, test_idx = split(
            modeling.row_count, float(protocol["test_fraction"]), seed
        )
    with _stage("preprocess"):
        train_ids = {row_ids[i] for i in train_idx}
        m, cat_ids, state = fit_encode(
            modeling, credit, config, train_idx, train_ids, audit
        )
    with _stage("folds"):
        y_train = y.values[train_idx]
        fold_plan = make_folds(train_idx, y_train, int(protocol["folds"]), seed)

    m_train = m.take_rows(train_idx)
    cat_train = cat_ids[train_idx]
    stack_spec = _stack_spec(config, seed)

    with _stage("train-stack"):
        stack, _ = fit_stack(
            stack_spec,
            m_train,
            cat_train if stack_spec.include_embeddings else None,
            Labels(y_train),
            fold_plan.fold_of,
            cat_cardinalities=state.cat_cardinalities,
            threads=threads,
            row_ids=train_idx,
            audit=audit,
        )
    with _stage("train-mlp"):
        cfg_full = dataclasses.replace(
            stack_spec.smote_cfg, seed=spawn_seed(seed, "smote", "full")
        )
        balanced = smote(m_train, Labels(y_train), cfg_full)
        if audit is not None:
            audit.record("smote_input", train_idx, context="full-train-mlp")
        mlp_cfg = config["mlp"]
        mlp_spec = MlpSpec(
            hidden_sizes=tuple(mlp_cfg["hidden_sizes"]),
            learning_rate=float(mlp_cfg["learning_rate"]),
            epochs=int(mlp_cfg["epochs"]),
            batch_size=int(mlp_cfg["batch_size"]),
            seed=spawn_seed(seed, "mlp"),
        )
        mlp = train_mlp(
            mlp_spec, balanced.matrix.data, None, balanced.labels.values.astype(float)
        )

    with _stage("evaluate"):
        m_test = m.take_rows(test_idx)
        cat_test = cat_ids[test_idx]
        y_test = y.values[test_idx]
        base_scores = stack.base_scores(m_test)
        evaluations: list[tuple[str, EvalReport]] = []
        for b, name in enumerate(stack.base_names):
            evaluations.append(
                (name, evaluate_model(base_scores[:, b], y_test, threshold))
            )
        mlp_scores = forward(mlp, m_test.data, None)
        evaluations.append(
            (MODEL_DISPLAY_NAMES["mlp"], evaluate_model(mlp_scores, y_test, threshold))
        )
        stack_scores = predict_stack(
            stack,
            m_test,
            cat_test if stack.include_embeddings else None,
            base_scores=base_scores,
        )
        evaluations.append(
            (
                MODEL_DISPLAY_NAMES["stack"],
                evaluate_model(stack_scores, y_test, threshold),
            )
        )

    report = {
        "models": [report_row(name, ev) for name, ev in evaluations],
        "dataset": {
            "application_rows": app.row_count,
            "credit_rows": credit.row_count,
            "merged_rows": merged.row_count,
            "modeling_rows": modeling.row_count,
            "train_rows": int(train_idx.size),
            "test_rows": int(test_idx.size),
            "train_positive_rate": float(np.mean(y_train)),
            "test_positive_rate": float(np.mean(y_test)),
            "feature_count": m.cols,
            "dropped_columns": state.dropped_columns,
        },
        "config": config.snapshot(),
    }

    written: list[str] = []
    models = {"stack": stack, "mlp": mlp}
    if out_dir is not None:
        try:
            with _stage("write-outputs"):
                written = write_outputs(out_dir, report, evaluations, figures=figures)
                artifact_path = os.path.join(out_dir, "model.ccap")
                save_artifact(
                    artifact_path,
                    meta={"config": config.snapshot(), "threshold": threshold},
                    preproc=state.to_dict(),
                    models=models,
                )
                written.append(artifact_path)
        except Exception:
            for path in written:
                try:
                    os.unlink(path)
                except OSError:
                    pass
            raise

    return TrainResult(
        report=report,
        evaluations=evaluations,
        state=state,
        models=models,
        fold_plan=fold_plan,
        train_idx=train_idx,
        test_idx=test_idx,
        written=written,
    )


# ---------------------------------------------------------------------------
# Inference paths
# ---------------------------------------------------------------------------


def _load_models(artifact_path: str):
    meta, preproc, models = load_artifact(artifact_path)
    state = PreprocessState.from_dict(preproc)
    if "stack" not in models:
        raise DataError("artifact does not contain a stacked model")
    return meta, state, models


def score_rows(
    state: PreprocessState, stack: StackModel, app: Table, credit: Table | None
) -> tuple[list, np.ndarray]:
    m, cat_ids, ids = apply_encode(state, app, credit)
    scores = predict_stack(
        stack, m, cat_ids if stack.include_embeddings else None
    )
    return ids, scores


def run_predict(
    artifact_path: str,
    app_path: str,
    credit_path: str | None,
    out_path: str | None = None,
    threshold: float | None = None,
) -> list:
    meta, state, models = _load_models(artifact_path)
    threshold = float(meta["threshold"]) if threshold is None else threshold
    id_col = state.schema["id"]
    from .data import load_table

    app = load_table(app_path, id_col)
    credit = load_table(credit_path, id_col) if credit_path else None
    ids, scores = score_rows(state, models["stack"], app, credit)
    rows = [
        (ids[i], float(scores[i]), "reject" if scores[i] >= threshold else "approve")
        for i in range(len(ids))
    ]
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write("ID,probability,decision\n")
            for id_, p, d in rows:
                fh.write(f"{id_},{p:.10g},{d}\n")
    return rows


def run_evaluate(
    artifact_path: str,
    app_path: str,
    credit_path: str,
    out_dir: str | None = None,
    threshold: float | None = None,
    figures: bool = True,
) -> dict:
    """Score a labeled dataset with every model in the artifact."""
    meta, state, models = _load_models(artifact_path)
    threshold = float(meta["threshold"]) if threshold is None else threshold
    id_col = state.schema["id"]
    app, credit = load_tables(app_path, credit_path, id_col)
    policy = LabelPolicy(
        status_column=state.schema["status"],
        bad_tokens=frozenset(state.label["bad_statuses"]),
        alphabet=frozenset(state.label["alphabet"]),
    )
    modeling, y, _ = build_modeling_table(app, credit, policy)
    m, cat_ids, _ = apply_encode(state, modeling, credit)

    stack = models["stack"]
    base_scores = stack.base_scores(m)
    evaluations = [
        (name, evaluate_model(base_scores[:, b], y.values, threshold))
        for b, name in enumerate(stack.base_names)
    ]
    if "mlp" in models:
        mlp_scores = forward(models["mlp"], m.data, None)
        evaluations.append(
            (MODEL_DISPLAY_NAMES["mlp"], evaluate_model(mlp_scores, y.values, threshold))
        )
    stack_scores = predict_stack(
        stack,
        m,
        cat_ids if stack.include_embeddings else None,
        base_scores=base_scores,
    )
    evaluations.append(
        (MODEL_DISPLAY_NAMES["stack"], evaluate_model(stack_scores, y.values, threshold))
    )
    report = {
        "models": [report_row(name, ev) for name, ev in evaluations],
        "dataset": {
            "modeling_rows": modeling.row_count,
            "positive_rate": float(np.mean(y.values)),
        },
        "config": meta.get("config", {}),
    }
    if out_dir is not None:
        write_outputs(out_dir, report, evaluations, figures=figures)
    return report


def run_profile(
    config: PipelineConfig, app_path: str, credit_path: str, group_columns: list
) -> list:
    """Cross-tab of the merged dataset with per-group label rates."""
    app, credit = load_tables(app_path, credit_path, config["schema"]["id"])
    merged = merge_on_id(app, credit)
    ids, id_labels = derive_label(credit, _label_policy(config))
    label_of = dict(zip(ids, id_labels.values.tolist()))
    merged_ids = merged.identifier_column().values
    labels = np.array([label_of[v] for v in merged_ids], dtype=np.int8)
    return profile(merged, group_columns, labels=Labels(labels))
