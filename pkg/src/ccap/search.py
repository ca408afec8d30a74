"""Random hyperparameter search scored by cross-validated AUC.

Each trial samples one configuration from the per-learner space and scores
it by mean k-fold AUC on the training split, with SMOTE applied inside
each fold's training portion. The best trial wins, ties broken by the
earliest trial number. Trials derive independent seeds, so a thread pool
changes nothing but wall time.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .audit import AccessAudit
from .config import PipelineConfig
from .data import Labels, load_tables, make_folds, split
from .ensemble import _seeded
from .errors import TrainingError, UsageError
from .learners import fit, predict_proba
from .metrics import auc
from .pipeline import _label_policy, build_modeling_table, fit_encode
from .resample import SmoteConfig, smote
from .util import spawn_rng, spawn_seed

logger = logging.getLogger(__name__)


# -- parameter ranges -------------------------------------------------------


@dataclass(frozen=True)
class FloatRange:
    lo: float
    hi: float
    log: bool = False

    def sample(self, rng) -> float:
        if self.log:
            return float(np.exp(rng.uniform(np.log(self.lo), np.log(self.hi))))
        return float(rng.uniform(self.lo, self.hi))


@dataclass(frozen=True)
class IntRange:
    lo: int
    hi: int  # inclusive

    def sample(self, rng) -> int:
        return int(rng.integers(self.lo, self.hi + 1))


@dataclass(frozen=True)
class Choice:
    options: tuple

    def sample(self, rng):
        return self.options[int(rng.integers(0, len(self.options)))]


DEFAULT_SPACES: dict = {
    "lr": {
        "learning_rate": FloatRange(0.01, 1.0, log=True),
        "epochs": IntRange(100, 500),
        "l2": FloatRange(1e-6, 1e-1, log=True),
    },
    "svm": {"c": FloatRange(0.1, 10.0, log=True), "epochs": IntRange(100, 400)},
    "knn": {"k": IntRange(3, 50)},
    "dt": {"max_depth": IntRange(2, 12), "min_samples_split": IntRange(2, 50)},
    "rf": {"n_trees": IntRange(5, 40), "max_depth": IntRange(3, 12)},
    "gb": {
        "n_rounds": IntRange(10, 80),
        "learning_rate": FloatRange(0.02, 0.5, log=True),
        "max_depth": IntRange(1, 6),
    },
    "xgb": {
        "n_rounds": IntRange(10, 80),
        "learning_rate": FloatRange(0.02, 0.5, log=True),
        "max_depth": IntRange(1, 6),
        "l2_leaf": FloatRange(0.1, 10.0, log=True),
    },
}


@dataclass
class Trial:
    number: int
    params: dict
    score: float | None = None
    error: str | None = None


@dataclass
class SearchResult:
    kind: str
    best_params: dict
    best_score: float
    best_trial: int
    trials: list = field(default_factory=list)


def cv_auc(spec, m, y: Labels, fold_of, smote_cfg: SmoteConfig, seed: int) -> float:
    """Mean out-of-fold AUC for one learner configuration."""
    X = m.data
    labels = y.values
    scores = []
    for f in sorted(int(v) for v in np.unique(fold_of)):
        tr = np.flatnonzero(fold_of != f)
        ho = np.flatnonzero(fold_of == f)
        cfg = dataclasses.replace(smote_cfg, seed=spawn_seed(seed, "smote", f))
        res = smote(m.take_rows(tr), Labels(labels[tr]), cfg)
        model = fit(
            _seeded(spec, seed, "cv", f), res.matrix.data, res.labels.values.astype(float)
        )
        scores.append(auc(labels[ho], predict_proba(model, X[ho])))
    return float(np.mean(scores))


def random_search(
    kind: str,
    base_params: dict,
    space: dict,
    m,
    y: Labels,
    fold_of,
    smote_cfg: SmoteConfig,
    budget: int,
    seed: int,
    threads: int = 1,
) -> SearchResult:
    """Sample ``budget`` configurations; return the argmax by CV AUC."""
    if budget < 1:
        raise UsageError(f"search budget must be >= 1, got {budget}")
    if not space:
        raise UsageError(f"no search space defined for learner {kind!r}")
    from .config import _SPEC_CLASSES

    spec_cls = _SPEC_CLASSES[kind]

    def run_trial(t: int) -> Trial:
        rng = spawn_rng(seed, "search", kind, t)
        params = dict(base_params)
        for name in sorted(space):
            params[name] = space[name].sample(rng)
        trial = Trial(number=t, params=params)
        try:
            spec = spec_cls(**params)
            trial.score = cv_auc(spec, m, y, fold_of, smote_cfg, spawn_seed(seed, t))
        except Exception as exc:
            trial.error = str(exc)
        return trial

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trials = list(pool.map(run_trial, range(budget)))
    else:
        trials = [run_trial(t) for t in range(budget)]

    best = None
    for trial in trials:
        if trial.score is not None and (best is None or trial.score > best.score):
            best = trial
    if best is None:
        causes = "; ".join(f"trial {t.number}: {t.error}" for t in trials)
        raise TrainingError(f"every search trial failed: {causes}")
    return SearchResult(
        kind=kind,
        best_params=best.params,
        best_score=best.score,
        best_trial=best.number,
        trials=trials,
    )


def run_tune(
    config: PipelineConfig,
    app_path: str,
    credit_path: str,
    learner: str | None = None,
    budget: int | None = None,
    threads: int = 1,
    audit: AccessAudit | None = None,
) -> dict:
    """Tune one or all learners on the training split of the given files."""
    budget = int(config["search"]["budget"]) if budget is None else budget
    seed = config.seed
    app, credit = load_tables(app_path, credit_path, config["schema"]["id"])
    modeling, y, row_ids = build_modeling_table(app, credit, _label_policy(config))
    train_idx, _ = split(
        modeling.row_count, float(config["protocol"]["test_fraction"]), seed
    )
    train_ids = {row_ids[i] for i in train_idx}
    m, _, _ = fit_encode(modeling, credit, config, train_idx, train_ids, audit)
    if audit is not None:
        audit.record("search_rows", train_idx)
    y_train = y.values[train_idx]
    plan = make_folds(train_idx, y_train, int(config["protocol"]["folds"]), seed)
    m_train = m.take_rows(train_idx)

    smote_cfg = SmoteConfig(
        k_neighbors=int(config["smote"]["k_neighbors"]),
        target_ratio=float(config["smote"]["target_ratio"]),
        seed=spawn_seed(seed, "smote"),
    )
    kinds = [learner] if learner else list(dict.fromkeys(config["stack"]["bases"]))
    results = {}
    for kind in kinds:
        if kind not in DEFAULT_SPACES:
            raise UsageError(f"no search space for learner {kind!r}")
        logger.info("tuning %s over %d trials", kind, budget)
        res = random_search(
            kind,
            base_params={},
            space=DEFAULT_SPACES[kind],
            m=m_train,
            y=Labels(y_train),
            fold_of=plan.fold_of,
            smote_cfg=smote_cfg,
            budget=budget,
            seed=spawn_seed(seed, "tune", kind),
            threads=threads,
        )
        results[kind] = {
            "best_params": res.best_params,
            "best_score": res.best_score,
            "best_trial": res.best_trial,
            "trials": [
                {"number": t.number, "params": t.params, "score": t.score, "error": t.error}
                for t in res.trials
            ],
        }
    return {"budget": budget, "seed": seed, "results": results}
