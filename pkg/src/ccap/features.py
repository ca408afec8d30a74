"""Engineered features: pairwise interactions, squares, and credit recency.

All operations are pure row-wise maps over the encoded matrix, so they
commute with row subsetting and need no fit state (the temporal feature's
observation window is the one exception and is passed in explicitly).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ColMeta, FeatureMatrix, Table
from .errors import DataError

DEFAULT_TEMPORAL_TOKENS = frozenset({"2", "3", "4", "5"})


@dataclass(frozen=True)
class FeatureRecipe:
    """Which engineered columns to add.

    ``interaction_pairs`` of None means the default single interaction of
    scaled income with the credit-recency feature, when both exist.
    """

    interaction_pairs: tuple | None = None
    polynomial_degree: int = 2
    temporal_enabled: bool = True
    temporal_tokens: frozenset = DEFAULT_TEMPORAL_TOKENS

    def __post_init__(self) -> None:
        if self.polynomial_degree not in (1, 2):
            raise DataError(
                f"polynomial degree must be 1 or 2, got {self.polynomial_degree}"
            )


def add_interactions(m: FeatureMatrix, pairs) -> FeatureMatrix:
    """Append one product column x_a * x_b per (a, b) pair."""
    if not pairs:
        return m
    cols = []
    meta = []
    for a, b in pairs:
        ia, ib = m.col_index(a), m.col_index(b)
        for name, i in ((a, ia), (b, ib)):
            if m.col_meta[i].encoding == "onehot":
                raise DataError(f"interaction column {name!r} is an indicator column")
        cols.append(m.data[:, ia] * m.data[:, ib])
        meta.append(ColMeta(name=f"inter:{a}*{b}", source=f"{a}*{b}", encoding="engineered"))
    return m.append_columns(np.column_stack(cols), meta)


def _is_indicator(values: np.ndarray) -> bool:
    return bool(np.isin(values, (0.0, 1.0)).all())


def add_polynomial(m: FeatureMatrix, degree: int = 2) -> FeatureMatrix:
    """Append x^2 for every eligible numeric column.

    Indicator columns are skipped (x^2 = x for 0/1 values), as are one-hot
    blocks and already-engineered columns.
    """
    if degree == 1:
        return m
    if degree != 2:
        raise DataError(f"polynomial degree must be 1 or 2, got {degree}")
    cols = []
    meta = []
    for j, cm in enumerate(m.col_meta):
        if cm.encoding not in ("raw", "scaled"):
            continue
        if _is_indicator(m.data[:, j]):
            continue
        cols.append(m.data[:, j] ** 2)
        meta.append(ColMeta(name=f"sq:{cm.name}", source=cm.name, encoding="engineered"))
    if not cols:
        return m
    return m.append_columns(np.column_stack(cols), meta)


def observation_window(credit: Table, months_column: str, ids=None) -> int:
    """Number of observed months, oldest to 0 inclusive.

    Restricted to the given set of IDs when provided (so the window can be
    frozen from training applicants only).
    """
    months = credit.column(months_column)
    id_values = credit.identifier_column().values
    allowed = set(ids) if ids is not None else None
    oldest = 0.0
    for id_, v in zip(id_values, months.values):
        if v is None:
            raise DataError(f"missing value in months column {months_column!r}")
        if allowed is not None and id_ not in allowed:
            continue
        if v > 0:
            raise DataError(f"months column {months_column!r} has positive value {v}")
        oldest = min(oldest, float(v))
    return int(-oldest) + 1


def time_since_last_default(
    credit: Table,
    months_column: str = "MONTHS_BALANCE",
    status_column: str = "STATUS",
    tokens: frozenset = DEFAULT_TEMPORAL_TOKENS,
    window: int | None = None,
) -> tuple[dict, int]:
    """Months elapsed since each ID's most recent default-status month.

    Month values are non-positive with 0 the most recent month, so the
    feature is -(max defaulting month). IDs with no defaulting month get
    the sentinel window + 1, which ranks "never" strictly older than any
    observed default. Returns (id -> feature value, window used).
    """
    if window is None:
        window = observation_window(credit, months_column)
    months = credit.column(months_column)
    status = credit.column(status_column)
    ids = credit.identifier_column().values
    latest: dict[str, float] = {}
    for id_, mo, st in zip(ids, months.values, status.values):
        if mo is None or st is None:
            raise DataError("credit history contains missing months or status cells")
        if mo > 0:
            raise DataError(f"months column {months_column!r} has positive value {mo}")
        if st in tokens:
            prev = latest.get(id_)
            if prev is None or mo > prev:
                latest[id_] = float(mo)
    sentinel = float(window + 1)
    out: dict[str, float] = {}
    for id_ in dict.fromkeys(ids):
        mo = latest.get(id_)
        out[id_] = sentinel if mo is None else -mo
    return out, window
