"""Tabular ingestion and preprocessing.

Raw CSVs become :class:`Table` objects with per-column kinds
(numeric / categorical / identifier) and explicit ``None`` missing markers.
Tables are merged on the identifier, labeled from credit-history status
tokens, cleaned (column drops, imputation), and encoded into a dense
:class:`FeatureMatrix` via training-vocabulary one-hot encoding and
training-statistics standardization. Fit state (imputation statistics,
vocabularies, scaler parameters) is always computed from an explicit row
subset so the test partition never contaminates it.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError
from .util import spawn_rng

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"
IDENTIFIER = "identifier"

DEFAULT_STATUS_ALPHABET = frozenset({"C", "X", "0", "1", "2", "3", "4", "5"})
DEFAULT_BAD_TOKENS = frozenset({"2", "3", "4", "5"})


# ---------------------------------------------------------------------------
# Core table types
# ---------------------------------------------------------------------------


@dataclass
class Column:
    name: str
    kind: str  # NUMERIC | CATEGORICAL | IDENTIFIER
    values: list  # float|None for numeric, str|None otherwise


@dataclass
class Table:
    """Columnar table with explicit missing markers.

    Invariants checked at construction: all columns share ``row_count``
    cells and column names are unique.
    """

    columns: list[Column]
    row_count: int

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise DataError(f"duplicate column names: {', '.join(dupes)}")
        for c in self.columns:
            if len(c.values) != self.row_count:
                raise DataError(
                    f"column {c.name!r} has {len(c.values)} cells, "
                    f"expected {self.row_count}"
                )

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise DataError(f"no column named {name!r}")

    def has_column(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)

    def identifier_column(self) -> Column:
        ids = [c for c in self.columns if c.kind == IDENTIFIER]
        if len(ids) != 1:
            raise DataError(f"expected exactly one identifier column, found {len(ids)}")
        return ids[0]

    def take_rows(self, rows) -> "Table":
        rows = list(rows)
        cols = [Column(c.name, c.kind, [c.values[i] for i in rows]) for c in self.columns]
        return Table(columns=cols, row_count=len(rows))


@dataclass(frozen=True)
class Labels:
    """Binary target vector; 1 = bad credit (reject), 0 = good (approve)."""

    values: np.ndarray
    positive_count: int = -1

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.int8)
        if v.ndim != 1 or not np.isin(v, (0, 1)).all():
            raise DataError("labels must be a flat 0/1 vector")
        object.__setattr__(self, "values", v)
        pc = int(np.sum(v == 1))
        if self.positive_count == -1:
            object.__setattr__(self, "positive_count", pc)
        elif self.positive_count != pc:
            raise DataError(
                f"positive_count {self.positive_count} != actual {pc}"
            )

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class ColMeta:
    """Traceability record for one FeatureMatrix column."""

    name: str
    source: str
    encoding: str  # raw | onehot | scaled | engineered
    category: str | None = None


@dataclass
class FeatureMatrix:
    """Dense numeric matrix with per-column provenance metadata."""

    data: np.ndarray
    col_meta: list[ColMeta]

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise DataError("feature matrix must be 2-D")
        if self.data.shape[1] != len(self.col_meta):
            raise DataError(
                f"matrix has {self.data.shape[1]} columns but "
                f"{len(self.col_meta)} metadata entries"
            )
        if not np.isfinite(self.data).all():
            raise DataError("feature matrix contains missing or non-finite entries")

    @property
    def rows(self) -> int:
        return int(self.data.shape[0])

    @property
    def cols(self) -> int:
        return int(self.data.shape[1])

    @property
    def column_names(self) -> list[str]:
        return [m.name for m in self.col_meta]

    def col_index(self, name: str) -> int:
        for i, m in enumerate(self.col_meta):
            if m.name == name:
                return i
        raise DataError(f"no feature column named {name!r}")

    def take_rows(self, rows) -> "FeatureMatrix":
        idx = np.asarray(rows, dtype=np.int64)
        return FeatureMatrix(data=self.data[idx], col_meta=list(self.col_meta))

    def append_columns(self, new_data: np.ndarray, new_meta: list[ColMeta]) -> "FeatureMatrix":
        new_data = np.asarray(new_data, dtype=np.float64)
        if new_data.ndim == 1:
            new_data = new_data[:, None]
        return FeatureMatrix(
            data=np.hstack([self.data, new_data]),
            col_meta=list(self.col_meta) + list(new_meta),
        )


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _parse_cell(cell: str) -> str | None:
    cell = cell.strip()
    return cell if cell != "" else None


def _all_numeric(values: list) -> bool:
    for v in values:
        if v is None:
            continue
        try:
            float(v)
        except ValueError:
            return False
    return True


def load_table(path: str, id_column: str) -> Table:
    """Parse one CSV into a Table, inferring column kinds.

    The configured identifier column keeps its raw string values; columns
    whose every non-missing cell parses as a number become numeric; the
    rest are categorical. Empty cells become missing markers.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: file is empty (no header row)") from None
            header = [h.strip() for h in header]
            raw_cols: list[list] = [[] for _ in header]
            for rownum, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise DataError(
                        f"{path}: row {rownum} has {len(row)} cells, "
                        f"expected {len(header)}"
                    )
                for j, cell in enumerate(row):
                    raw_cols[j].append(_parse_cell(cell))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    if id_column not in header:
        raise DataError(f"{path}: identifier column {id_column!r} not found")

    columns = []
    for name, values in zip(header, raw_cols):
        if name == id_column:
            for i, v in enumerate(values):
                if v is None:
                    raise DataError(f"{path}: missing identifier in row {i + 2}")
            columns.append(Column(name, IDENTIFIER, values))
        elif _all_numeric(values):
            columns.append(
                Column(name, NUMERIC, [None if v is None else float(v) for v in values])
            )
        else:
            columns.append(Column(name, CATEGORICAL, values))
    return Table(columns=columns, row_count=len(raw_cols[0]) if header else 0)


def load_tables(app_path: str, credit_path: str, id_column: str = "ID") -> tuple[Table, Table]:
    """Load the application and credit-history CSVs."""
    return load_table(app_path, id_column), load_table(credit_path, id_column)


# ---------------------------------------------------------------------------
# Merging and labeling
# ---------------------------------------------------------------------------


def merge_on_id(app: Table, credit: Table) -> Table:
    """Inner join on the identifier column.

    Emits one row per (application row, credit row) pair sharing an ID, in
    application order with credit rows in file order. Non-identifier column
    names must not collide.
    """
    app_id = app.identifier_column()
    credit_id = credit.identifier_column()
    shared = set(app.column_names) & set(credit.column_names) - {app_id.name}
    if shared:
        raise DataError(
            f"duplicate non-identifier columns in both tables: {', '.join(sorted(shared))}"
        )

    by_id: dict[str, list[int]] = {}
    for i, v in enumerate(credit_id.values):
        by_id.setdefault(v, []).append(i)

    app_rows: list[int] = []
    credit_rows: list[int] = []
    for i, v in enumerate(app_id.values):
        for j in by_id.get(v, ()):
            app_rows.append(i)
            credit_rows.append(j)
    if not app_rows:
        raise DataError("merge produced zero rows: no shared identifiers")

    cols = [
        Column(c.name, c.kind, [c.values[i] for i in app_rows]) for c in app.columns
    ]
    cols += [
        Column(c.name, c.kind, [c.values[j] for j in credit_rows])
        for c in credit.columns
        if c.name != credit_id.name
    ]
    return Table(columns=cols, row_count=len(app_rows))


@dataclass(frozen=True)
class LabelPolicy:
    """Which status tokens mark an applicant as bad credit."""

    status_column: str = "STATUS"
    bad_tokens: frozenset = DEFAULT_BAD_TOKENS
    alphabet: frozenset = DEFAULT_STATUS_ALPHABET


def unique_ids(table: Table) -> list[str]:
    """Identifier values in order of first appearance."""
    seen: dict[str, None] = {}
    for v in table.identifier_column().values:
        if v not in seen:
            seen[v] = None
    return list(seen)


def derive_label(credit: Table, policy: LabelPolicy) -> tuple[list[str], Labels]:
    """Label each credit-history ID: 1 if any bad-status token appears.

    Returns (ids in first-appearance order, labels aligned with them).
    Status tokens outside the configured alphabet abort with a diagnostic.
    """
    status = credit.column(policy.status_column)
    ids = credit.identifier_column().values
    bad: dict[str, bool] = {}
    for i, (id_, tok) in enumerate(zip(ids, status.values)):
        if tok is None:
            raise DataError(f"missing status token in credit row {i + 2}")
        if tok not in policy.alphabet:
            raise DataError(
                f"unknown status token {tok!r} in credit row {i + 2}; "
                f"expected one of {sorted(policy.alphabet)}"
            )
        bad[id_] = bad.get(id_, False) or (tok in policy.bad_tokens)
    ordered = list(bad)
    return ordered, Labels(np.array([1 if bad[i] else 0 for i in ordered], dtype=np.int8))


# ---------------------------------------------------------------------------
# Cleaning
# ---------------------------------------------------------------------------


def drop_high_missing(
    t: Table, threshold: float = 0.30, fit_rows=None
) -> tuple[Table, list[str]]:
    """Drop non-identifier columns whose missing fraction exceeds threshold.

    The fraction is measured over ``fit_rows`` (all rows when omitted) so
    the decision depends only on the training partition.
    """
    if not 0.0 < threshold <= 1.0:
        raise DataError(f"drop threshold must lie in (0,1], got {threshold}")
    rows = list(fit_rows) if fit_rows is not None else range(t.row_count)
    n = max(len(rows), 1)
    kept, dropped = [], []
    for c in t.columns:
        if c.kind == IDENTIFIER:
            kept.append(c)
            continue
        missing = sum(1 for i in rows if c.values[i] is None)
        if missing / n > threshold:
            dropped.append(c.name)
        else:
            kept.append(c)
    if dropped:
        logger.info("dropped high-missing columns: %s", ", ".join(dropped))
    if all(c.kind == IDENTIFIER for c in kept):
        logger.warning("all feature columns dropped at threshold %.2f", threshold)
    return Table(columns=kept, row_count=t.row_count), dropped


@dataclass(frozen=True)
class ImputeStats:
    """Fill values per column, fitted on the training rows."""

    numeric_strategy: str
    fill: dict  # column name -> fill value


def fit_impute(
    t: Table,
    numeric_strategy: str = "mean",
    categorical_strategy: str = "mode",
    fit_rows=None,
) -> ImputeStats:
    if numeric_strategy not in ("mean", "median"):
        raise DataError(f"unknown numeric impute strategy {numeric_strategy!r}")
    if categorical_strategy != "mode":
        raise DataError(f"unknown categorical impute strategy {categorical_strategy!r}")
    rows = list(fit_rows) if fit_rows is not None else list(range(t.row_count))
    fill: dict = {}
    for c in t.columns:
        if c.kind == IDENTIFIER:
            continue
        present = [c.values[i] for i in rows if c.values[i] is not None]
        if any(c.values[i] is None for i in range(t.row_count)) and not present:
            raise DataError(
                f"column {c.name!r} has no observed values to impute from"
            )
        if not present:
            continue
        if c.kind == NUMERIC:
            arr = np.asarray(present, dtype=np.float64)
            fill[c.name] = float(np.mean(arr) if numeric_strategy == "mean" else np.median(arr))
        else:
            counts: dict[str, int] = {}
            for v in present:
                counts[v] = counts.get(v, 0) + 1
            top = max(counts.values())
            # ties broken by the lexicographically smallest category
            fill[c.name] = min(v for v, k in counts.items() if k == top)
    return ImputeStats(numeric_strategy=numeric_strategy, fill=fill)


def apply_impute(t: Table, stats: ImputeStats) -> Table:
    cols = []
    for c in t.columns:
        if c.kind == IDENTIFIER or all(v is not None for v in c.values):
            cols.append(c)
            continue
        if c.name not in stats.fill:
            raise DataError(f"no imputation statistic for column {c.name!r}")
        f = stats.fill[c.name]
        cols.append(Column(c.name, c.kind, [f if v is None else v for v in c.values]))
    return Table(columns=cols, row_count=t.row_count)


def impute(
    t: Table,
    numeric_strategy: str = "mean",
    categorical_strategy: str = "mode",
    fit_rows=None,
) -> Table:
    """Replace every missing marker using training-row statistics."""
    return apply_impute(t, fit_impute(t, numeric_strategy, categorical_strategy, fit_rows))


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OneHotVocab:
    """Training-time category vocabularies plus the encoded column layout."""

    categories: dict  # column name -> sorted list of categories
    column_order: list[str]  # feature columns of the source table, in order
    kinds: dict  # column name -> NUMERIC | CATEGORICAL


def fit_one_hot(t: Table, fit_rows=None) -> OneHotVocab:
    rows = list(fit_rows) if fit_rows is not None else list(range(t.row_count))
    categories: dict[str, list[str]] = {}
    order: list[str] = []
    kinds: dict[str, str] = {}
    for c in t.columns:
        if c.kind == IDENTIFIER:
            continue
        order.append(c.name)
        kinds[c.name] = c.kind
        if c.kind == CATEGORICAL:
            cats = {c.values[i] for i in rows if c.values[i] is not None}
            categories[c.name] = sorted(cats)
    return OneHotVocab(categories=categories, column_order=order, kinds=kinds)


def apply_one_hot(t: Table, vocab: OneHotVocab) -> FeatureMatrix:
    """Encode a table against a fitted vocabulary.

    Categorical columns expand to one indicator per training-time category
    (lexicographic order); unseen categories encode as an all-zero block.
    Numeric columns pass through unchanged.
    """
    blocks: list[np.ndarray] = []
    meta: list[ColMeta] = []
    for name in vocab.column_order:
        if not t.has_column(name):
            raise DataError(f"input table is missing column {name!r}")
        c = t.column(name)
        if vocab.kinds[name] == NUMERIC:
            if any(v is None for v in c.values):
                raise DataError(f"column {name!r} still contains missing values")
            blocks.append(np.asarray(c.values, dtype=np.float64)[:, None])
            meta.append(ColMeta(name=name, source=name, encoding="raw"))
        else:
            cats = vocab.categories[name]
            index = {cat: k for k, cat in enumerate(cats)}
            block = np.zeros((t.row_count, len(cats)))
            for i, v in enumerate(c.values):
                if v is None:
                    raise DataError(f"column {name!r} still contains missing values")
                k = index.get(v)
                if k is not None:
                    block[i, k] = 1.0
            blocks.append(block)
            meta.extend(
                ColMeta(name=f"{name}={cat}", source=name, encoding="onehot", category=cat)
                for cat in cats
            )
    if not blocks:
        return FeatureMatrix(data=np.zeros((t.row_count, 0)), col_meta=[])
    return FeatureMatrix(data=np.hstack(blocks), col_meta=meta)


def one_hot(t: Table, fit_rows=None) -> tuple[FeatureMatrix, OneHotVocab]:
    """Fit vocabularies on ``fit_rows`` and encode the whole table."""
    vocab = fit_one_hot(t, fit_rows)
    return apply_one_hot(t, vocab), vocab


def categorical_ids(t: Table, vocab: OneHotVocab) -> tuple[np.ndarray, list[int], list[str]]:
    """Integer category ids for embedding lookups.

    Returns (ids matrix of shape (rows, n_categorical), cardinalities,
    column names). Each vocabulary reserves one extra trailing id for
    categories unseen at fit time.
    """
    names = [n for n in vocab.column_order if vocab.kinds[n] == CATEGORICAL]
    ids = np.zeros((t.row_count, len(names)), dtype=np.int64)
    cards: list[int] = []
    for j, name in enumerate(names):
        cats = vocab.categories[name]
        index = {cat: k for k, cat in enumerate(cats)}
        unknown = len(cats)
        col = t.column(name)
        ids[:, j] = [index.get(v, unknown) for v in col.values]
        cards.append(len(cats) + 1)
    return ids, cards, names


@dataclass(frozen=True)
class ScalerParams:
    """Per-column standardization statistics fitted on training rows."""

    names: list[str]
    mean: np.ndarray
    std: np.ndarray
    constant: list[bool]


def fit_scaler(m: FeatureMatrix, fit_rows=None) -> ScalerParams:
    rows = (
        np.asarray(fit_rows, dtype=np.int64)
        if fit_rows is not None
        else np.arange(m.rows)
    )
    names, means, stds, constant = [], [], [], []
    for j, meta in enumerate(m.col_meta):
        if meta.encoding != "raw":
            continue
        col = m.data[rows, j]
        mu = float(np.mean(col))
        sigma = float(np.sqrt(np.mean((col - mu) ** 2)))  # population std
        names.append(meta.name)
        means.append(mu)
        stds.append(sigma)
        constant.append(sigma == 0.0)
    if any(constant):
        flagged = [n for n, c in zip(names, constant) if c]
        logger.info("constant columns scaled to zero: %s", ", ".join(flagged))
    return ScalerParams(
        names=names,
        mean=np.asarray(means),
        std=np.asarray(stds),
        constant=constant,
    )


def apply_scaler(m: FeatureMatrix, params: ScalerParams) -> FeatureMatrix:
    data = m.data.copy()
    meta = list(m.col_meta)
    by_name = {n: k for k, n in enumerate(params.names)}
    for j, cm in enumerate(m.col_meta):
        if cm.encoding != "raw":
            continue
        if cm.name not in by_name:
            raise DataError(f"no scaler statistics for column {cm.name!r}")
        k = by_name[cm.name]
        if params.constant[k]:
            data[:, j] = 0.0  # sigma = 0: map to zeros, keep width stable
        else:
            data[:, j] = (data[:, j] - params.mean[k]) / params.std[k]
        meta[j] = replace(cm, encoding="scaled")
    return FeatureMatrix(data=data, col_meta=meta)


def standardize(m: FeatureMatrix, fit_rows=None) -> tuple[FeatureMatrix, ScalerParams]:
    """Scale raw numeric columns to zero mean and unit variance.

    Statistics come from ``fit_rows`` only but apply to every row.
    Constant columns map to all-zeros and are flagged in the params.
    """
    params = fit_scaler(m, fit_rows)
    return apply_scaler(m, params), params


# ---------------------------------------------------------------------------
# Partitioning
# ---------------------------------------------------------------------------


def split(n_rows: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded random train/test split; |test| = round(n * fraction)."""
    if n_rows < 2:
        raise DataError(f"need at least 2 rows to split, got {n_rows}")
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test fraction must lie in (0,1), got {test_fraction}")
    n_test = int(math.floor(n_rows * test_fraction + 0.5))
    n_test = min(max(n_test, 1), n_rows - 1)
    perm = spawn_rng(seed, "split").permutation(n_rows)
    test = np.sort(perm[:n_test])
    train = np.sort(perm[n_test:])
    return train, test


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of training rows to k cross-validation folds."""

    k: int
    row_indices: np.ndarray  # global row indices, parallel to fold_of
    fold_of: np.ndarray  # fold id in [0, k) per entry of row_indices
    seed: int

    def __post_init__(self) -> None:
        sizes = np.bincount(self.fold_of, minlength=self.k)
        if sizes.max() - sizes.min() > 1:
            raise DataError("fold sizes differ by more than 1")
        if self.fold_of.size != self.row_indices.size:
            raise DataError("fold assignment length mismatch")

    def fold_rows(self, f: int) -> np.ndarray:
        return self.row_indices[self.fold_of == f]

    def train_rows(self, f: int) -> np.ndarray:
        return self.row_indices[self.fold_of != f]

    def fold_positions(self, f: int) -> np.ndarray:
        """Positions within row_indices belonging to fold f."""
        return np.flatnonzero(self.fold_of == f)

    def train_positions(self, f: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != f)


def make_folds(train_indices, labels, k: int, seed: int) -> FoldPlan:
    """Stratified k-fold plan over the training rows.

    Shuffled positives are dealt round-robin first, then shuffled
    negatives continue the deal, so fold sizes differ by at most one and
    each fold's positive count is within one of proportional. Falls back
    to an unstratified deal (with a warning) when positives < k.
    """
    idx = np.asarray(train_indices, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int8)
    if y.size != idx.size:
        raise DataError("labels must align with train indices")
    if k < 2:
        raise DataError(f"fold count must be >= 2, got {k}")
    if k > idx.size:
        raise DataError(f"fold count {k} exceeds training rows {idx.size}")
    rng = spawn_rng(seed, "folds")
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    if pos.size < k:
        logger.warning(
            "only %d positives for %d folds; falling back to unstratified folds",
            pos.size,
            k,
        )
        dealt = rng.permutation(idx.size)
    else:
        dealt = np.concatenate([rng.permutation(pos), rng.permutation(neg)])
    fold_of = np.empty(idx.size, dtype=np.int64)
    fold_of[dealt] = np.arange(idx.size) % k
    return FoldPlan(k=k, row_indices=idx, fold_of=fold_of, seed=seed)


# ---------------------------------------------------------------------------
# Profiling
# ---------------------------------------------------------------------------


def profile(t: Table, group_columns: list[str], labels=None) -> list[dict]:
    """Cross-tabulated counts (and label rates) per group combination.

    Group columns must be categorical. Returns rows sorted by group values;
    each row maps column name -> category plus 'count' and, when labels are
    supplied, 'label_rate'.
    """
    cols = []
    for name in group_columns:
        c = t.column(name)
        if c.kind != CATEGORICAL:
            raise DataError(f"group column {name!r} is {c.kind}, expected categorical")
        cols.append(c)
    y = None
    if labels is not None:
        y = np.asarray(labels.values if isinstance(labels, Labels) else labels)
        if y.size != t.row_count:
            raise DataError("labels must align with table rows")
    counts: dict[tuple, int] = {}
    positives: dict[tuple, int] = {}
    for i in range(t.row_count):
        key = tuple("(missing)" if c.values[i] is None else c.values[i] for c in cols)
        counts[key] = counts.get(key, 0) + 1
        if y is not None:
            positives[key] = positives.get(key, 0) + int(y[i])
    out = []
    for key in sorted(counts):
        row = {name: val for name, val in zip(group_columns, key)}
        row["count"] = counts[key]
        if y is not None:
            row["label_rate"] = positives[key] / counts[key]
        out.append(row)
    return out
