"""Six classical base learners behind a uniform fit / predict_proba contract.

Everything is implemented directly on numpy:

* LR: full-batch gradient descent on mean binary cross-entropy plus an
  l2 * ||w||^2 / 2 penalty, zero-initialized.
* SVM: soft-margin linear hinge, (1/2)||w||^2 + C * sum hinge, epoch-wise
  subgradient descent with step 1/(C*t); probabilities are sigmoid(margin).
* KNN: stored training set; probability is the positive fraction of the k
  nearest rows (Euclidean, distance ties broken by lower training index).
* DT: greedy entropy / information-gain splits, midpoint thresholds.
* RF: bootstrap-sampled entropy trees with a random feature subset per
  split; prediction is the plain average of tree outputs.
* GB: gradient boosting on log-loss with regression trees fit to
  residuals and regularized Newton leaf weights; l2_leaf > 0 gives the
  regularized ("XGBoost-style") variant.

All learners are deterministic given (spec, data); RF and GB carry their
own seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._tree import Tree, grow_tree
from .data import FeatureMatrix, Labels
from .errors import TrainingError
from .util import spawn_rng

# ---------------------------------------------------------------------------
# Shared pieces
# ---------------------------------------------------------------------------


def sigmoid(z):
    """Numerically stable logistic function 1 / (1 + exp(-z))."""
    z = np.asarray(z, dtype=np.float64)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return float(out[0]) if scalar else out


def entropy(counts) -> float:
    """Base-2 entropy of a two-class count pair; 0*log(0) is 0."""
    a, b = float(counts[0]), float(counts[1])
    if a < 0 or b < 0 or a + b == 0:
        raise ValueError(f"invalid class counts {counts!r}")
    total = a + b
    h = 0.0
    for c in (a, b):
        if c > 0:
            p = c / total
            h -= p * math.log2(p)
    return h


def info_gain(parent, left, right) -> float:
    """Entropy reduction of a split; children must partition the parent."""
    if (parent[0] != left[0] + right[0]) or (parent[1] != left[1] + right[1]):
        raise ValueError("split children do not add up to the parent counts")
    n = float(parent[0] + parent[1])
    nl = float(left[0] + left[1])
    nr = float(right[0] + right[1])
    return entropy(parent) - (nl * entropy(left) + nr * entropy(right)) / n


def _bce_loss(z: np.ndarray, y: np.ndarray) -> float:
    # mean binary cross-entropy from logits, overflow-free
    return float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))


def _as_xy(X, y=None):
    if isinstance(X, FeatureMatrix):
        X = X.data
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("feature matrix must be 2-D")
    if not np.isfinite(X).all():
        raise TrainingError("feature matrix contains non-finite entries")
    if y is None:
        return X, None
    if isinstance(y, Labels):
        y = y.values
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size != X.shape[0]:
        raise ValueError("label and row counts differ")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")
    return X, y


def _require_both_classes(y: np.ndarray, kind: str) -> None:
    if np.all(y == y[0]):
        raise TrainingError(f"{kind} requires both classes in the training data")


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LRSpec:
    learning_rate: float = 0.3
    epochs: int = 400
    l2: float = 1e-4
    kind: str = field(default="lr", init=False)

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1 or self.l2 < 0:
            raise ValueError("LR hyperparameters out of range")


@dataclass(frozen=True)
class SVMSpec:
    c: float = 1.0
    epochs: int = 300
    kind: str = field(default="svm", init=False)

    def __post_init__(self):
        if self.c <= 0 or self.epochs < 1:
            raise ValueError("SVM hyperparameters out of range")


@dataclass(frozen=True)
class KNNSpec:
    k: int = 25
    kind: str = field(default="knn", init=False)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("KNN needs k >= 1")


@dataclass(frozen=True)
class DTSpec:
    max_depth: int = 8
    min_samples_split: int = 20
    kind: str = field(default="dt", init=False)

    def __post_init__(self):
        if self.max_depth < 0 or self.min_samples_split < 2:
            raise ValueError("DT hyperparameters out of range")


@dataclass(frozen=True)
class RFSpec:
    n_trees: int = 20
    max_depth: int = 9
    min_samples_split: int = 10
    feature_subsample: int | None = None  # None: round(sqrt(n_features))
    bootstrap: bool = True  # diagnostic off-switch for the B=1 identity
    seed: int = 0
    kind: str = field(default="rf", init=False)

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 0 or self.min_samples_split < 2:
            raise ValueError("RF hyperparameters out of range")
        if self.feature_subsample is not None and self.feature_subsample < 1:
            raise ValueError("RF feature subsample must be >= 1")


@dataclass(frozen=True)
class GBSpec:
    n_rounds: int = 40
    learning_rate: float = 0.25
    max_depth: int = 3
    l2_leaf: float = 0.0
    seed: int = 0
    kind: str = field(default="gb", init=False)

    def __post_init__(self):
        if self.n_rounds < 1 or self.learning_rate < 0 or self.max_depth < 0:
            raise ValueError("GB hyperparameters out of range")
        if self.l2_leaf < 0:
            raise ValueError("GB leaf regularization must be >= 0")


@dataclass(frozen=True)
class ConstSpec:
    """Diagnostic learner emitting a constant score."""

    value: float = 0.5
    kind: str = field(default="const", init=False)


LearnerSpec = LRSpec | SVMSpec | KNNSpec | DTSpec | RFSpec | GBSpec | ConstSpec


# ---------------------------------------------------------------------------
# Fitted models
# ---------------------------------------------------------------------------


@dataclass
class LRModel:
    spec: LRSpec
    weights: np.ndarray
    intercept: float
    loss_history: list[float]

    def predict_proba(self, X) -> np.ndarray:
        X, _ = _as_xy(X)
        _check_width(X, self.weights.size)
        return sigmoid(X @ self.weights + self.intercept)


@dataclass
class SVMModel:
    spec: SVMSpec
    weights: np.ndarray
    bias: float

    def predict_proba(self, X) -> np.ndarray:
        X, _ = _as_xy(X)
        _check_width(X, self.weights.size)
        # calibration surrogate: monotone in the margin, so the 0.5
        # decision matches the margin sign and rankings are unchanged
        return sigmoid(X @ self.weights + self.bias)


@dataclass
class KNNModel:
    spec: KNNSpec
    train_X: np.ndarray
    train_y: np.ndarray

    def predict_proba(self, X) -> np.ndarray:
        X, _ = _as_xy(X)
        _check_width(X, self.train_X.shape[1])
        return _knn_scores(self.train_X, self.train_y, X, self.spec.k)


@dataclass
class DTModel:
    spec: DTSpec
    tree: Tree
    n_features: int

    def predict_proba(self, X) -> np.ndarray:
        X, _ = _as_xy(X)
        _check_width(X, self.n_features)
        return self.tree.predict(X)


@dataclass
class RFModel:
    spec: RFSpec
    trees: list[Tree]
    n_features: int

    def predict_proba(self, X) -> np.ndarray:
        X, _ = _as_xy(X)
        _check_width(X, self.n_features)
        acc = np.zeros(X.shape[0])
        for t in self.trees:
            acc += t.predict(X)
        return acc / len(self.trees)


@dataclass
class GBModel:
    spec: GBSpec
    base_score: float  # initial log-odds
    trees: list[Tree]
    n_features: int

    def decision_function(self, X) -> np.ndarray:
        X, _ = _as_xy(X)
        _check_width(X, self.n_features)
        f = np.full(X.shape[0], self.base_score)
        for t in self.trees:
            f += self.spec.learning_rate * t.predict(X)
        return f

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))


@dataclass
class ConstModel:
    spec: ConstSpec

    def predict_proba(self, X) -> np.ndarray:
        X, _ = _as_xy(X)
        return np.full(X.shape[0], self.spec.value)


FittedModel = LRModel | SVMModel | KNNModel | DTModel | RFModel | GBModel | ConstModel


def _check_width(X: np.ndarray, expected: int) -> None:
    if X.shape[1] != expected:
        raise ValueError(
            f"feature width {X.shape[1]} does not match training width {expected}"
        )


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


def _fit_lr(spec: LRSpec, X: np.ndarray, y: np.ndarray) -> LRModel:
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    history = []
    for _ in range(spec.epochs):
        z = X @ w + b
        history.append(_bce_loss(z, y) + 0.5 * spec.l2 * float(w @ w))
        r = sigmoid(z) - y
        grad_w = X.T @ r / n + spec.l2 * w
        grad_b = float(np.mean(r))
        w -= spec.learning_rate * grad_w
        b -= spec.learning_rate * grad_b
    return LRModel(spec=spec, weights=w, intercept=b, loss_history=history)


def _fit_svm(spec: SVMSpec, X: np.ndarray, y: np.ndarray) -> SVMModel:
    n, d = X.shape
    ym = 2.0 * y - 1.0
    w = np.zeros(d)
    b = 0.0
    for t in range(1, spec.epochs + 1):
        margins = ym * (X @ w + b)
        viol = margins < 1.0
        grad_w = w - spec.c * (ym[viol] @ X[viol])
        grad_b = -spec.c * float(np.sum(ym[viol]))
        step = 1.0 / (spec.c * t)
        w -= step * grad_w
        b -= step * grad_b
    return SVMModel(spec=spec, weights=w, bias=b)


def _knn_scores(train_X, train_y, X, k) -> np.ndarray:
    n_train = train_X.shape[0]
    k = min(k, n_train)
    out = np.empty(X.shape[0])
    if n_train <= 4096:
        # exact squared distances so tie-breaking matches a brute-force scan
        chunk = max(1, 2_000_000 // max(n_train * train_X.shape[1], 1))
        for lo in range(0, X.shape[0], chunk):
            hi = min(lo + chunk, X.shape[0])
            diff = X[lo:hi, None, :] - train_X[None, :, :]
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
            order = np.argsort(d2, axis=1, kind="stable")[:, :k]
            out[lo:hi] = train_y[order].mean(axis=1)
        return out
    # large path: expansion trick plus boundary-tie repair; the query-norm
    # term is constant per row and dropped, ordering is unaffected
    tn = np.sum(train_X**2, axis=1)
    chunk = max(1, 40_000_000 // n_train)
    for lo in range(0, X.shape[0], chunk):
        hi = min(lo + chunk, X.shape[0])
        q = X[lo:hi]
        d2 = tn[None, :] - 2.0 * (q @ train_X.T)
        kth = np.partition(d2, k - 1, axis=1)[:, k - 1]
        for i in range(d2.shape[0]):
            cand = np.flatnonzero(d2[i] <= kth[i])
            if cand.size > k:
                cand = cand[np.argsort(d2[i, cand], kind="stable")][:k]
            out[lo + i] = train_y[cand].mean()
    return out


def _fit_dt(spec: DTSpec, X: np.ndarray, y: np.ndarray) -> DTModel:
    tree = grow_tree(
        X,
        criterion="entropy",
        y=y,
        max_depth=spec.max_depth,
        min_samples_split=spec.min_samples_split,
    )
    return DTModel(spec=spec, tree=tree, n_features=X.shape[1])


def _fit_rf(spec: RFSpec, X: np.ndarray, y: np.ndarray) -> RFModel:
    n, d = X.shape
    m = spec.feature_subsample
    if m is None:
        m = max(1, int(round(math.sqrt(d))))
    m = min(m, d)
    trees = []
    for t in range(spec.n_trees):
        rng = spawn_rng(spec.seed, "tree", t)
        if spec.bootstrap:
            rows = rng.integers(0, n, size=n)
            Xb, yb = X[rows], y[rows]
        else:
            Xb, yb = X, y
        trees.append(
            grow_tree(
                Xb,
                criterion="entropy",
                y=yb,
                max_depth=spec.max_depth,
                min_samples_split=spec.min_samples_split,
                max_features=m if m < d else None,
                rng=rng,
            )
        )
    return RFModel(spec=spec, trees=trees, n_features=d)


def _fit_gb(spec: GBSpec, X: np.ndarray, y: np.ndarray) -> GBModel:
    n, d = X.shape
    p0 = float(np.mean(y))
    base = math.log(p0 / (1.0 - p0))
    order = np.argsort(X, axis=0, kind="stable") if spec.max_depth > 0 else None
    f = np.full(n, base)
    trees = []
    for _ in range(spec.n_rounds):
        p = sigmoid(f)
        grad = y - p  # negative gradient of log-loss
        hess = p * (1.0 - p)
        tree = grow_tree(
            X,
            criterion="sse",
            grad=grad,
            hess=hess,
            max_depth=spec.max_depth,
            leaf_reg=spec.l2_leaf,
            order=order,
        )
        trees.append(tree)
        f += spec.learning_rate * tree.predict(X)
    return GBModel(spec=spec, base_score=base, trees=trees, n_features=d)


def fit(spec: LearnerSpec, X, y) -> FittedModel:
    """Train one base learner; deterministic given (spec, data, seed)."""
    X, y = _as_xy(X, y)
    if X.shape[0] == 0:
        raise TrainingError("cannot fit on an empty training set")
    if spec.kind == "const":
        return ConstModel(spec=spec)
    if spec.kind == "knn":
        return KNNModel(spec=spec, train_X=X.copy(), train_y=y.copy())
    _require_both_classes(y, spec.kind)
    if spec.kind == "lr":
        return _fit_lr(spec, X, y)
    if spec.kind == "svm":
        return _fit_svm(spec, X, y)
    if spec.kind == "dt":
        return _fit_dt(spec, X, y)
    if spec.kind == "rf":
        return _fit_rf(spec, X, y)
    if spec.kind == "gb":
        return _fit_gb(spec, X, y)
    raise ValueError(f"unknown learner kind {spec.kind!r}")


def predict_proba(model: FittedModel, X) -> np.ndarray:
    """Probability of the positive (bad credit) class, in [0, 1]."""
    return model.predict_proba(X)
