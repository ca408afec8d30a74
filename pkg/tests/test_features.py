import numpy as np
import pytest

from ccap.data import ColMeta, Column, FeatureMatrix, Table
from ccap.errors import DataError
from ccap.features import (
    FeatureRecipe,
    add_interactions,
    add_polynomial,
    observation_window,
    time_since_last_default,
)


def fm(cols: dict, encodings: dict | None = None) -> FeatureMatrix:
    encodings = encodings or {}
    names = list(cols)
    data = np.column_stack([np.asarray(cols[n], dtype=float) for n in names])
    meta = [
        ColMeta(name=n, source=n, encoding=encodings.get(n, "scaled")) for n in names
    ]
    return FeatureMatrix(data=data, col_meta=meta)


def credit_table(rows):
    ids, months, statuses = zip(*rows) if rows else ((), (), ())
    return Table(
        columns=[
            Column("ID", "identifier", [str(i) for i in ids]),
            Column("MONTHS_BALANCE", "numeric", [float(m) for m in months]),
            Column("STATUS", "categorical", list(statuses)),
        ],
        row_count=len(rows),
    )


class TestInteractions:
    def test_elementwise_product(self):
        m = add_interactions(fm({"a": [1, 2], "b": [3, 4]}), [("a", "b")])
        assert m.column_names[-1] == "inter:a*b"
        assert m.data[:, -1].tolist() == [3.0, 8.0]

    def test_self_pair_is_square(self):
        m = add_interactions(fm({"a": [2, -3]}), [("a", "a")])
        assert m.data[:, -1].tolist() == [4.0, 9.0]

    def test_zero_column_annihilates(self):
        m = add_interactions(fm({"a": [0, 0], "b": [5, -7]}), [("a", "b")])
        assert m.data[:, -1].tolist() == [0.0, 0.0]

    def test_unknown_column_aborts(self):
        with pytest.raises(DataError, match="nope"):
            add_interactions(fm({"a": [1.0]}), [("a", "nope")])

    def test_indicator_member_aborts(self):
        m = fm({"a": [1, 2], "g=M": [0, 1]}, {"g=M": "onehot"})
        with pytest.raises(DataError, match="indicator"):
            add_interactions(m, [("a", "g=M")])

    def test_matches_bruteforce_product(self):
        rng = np.random.default_rng(4)
        data = rng.normal(size=(50, 3))
        m = fm({"a": data[:, 0], "b": data[:, 1], "c": data[:, 2]})
        out = add_interactions(m, [("a", "c"), ("b", "c")])
        assert np.array_equal(out.data[:, 3], data[:, 0] * data[:, 2])
        assert np.array_equal(out.data[:, 4], data[:, 1] * data[:, 2])


class TestPolynomial:
    def test_squares_appended(self):
        m = add_polynomial(fm({"a": [-2, 0, 3]}))
        assert m.column_names == ["a", "sq:a"]
        assert m.data[:, 1].tolist() == [4.0, 0.0, 9.0]

    def test_indicator_skipped(self):
        m = add_polynomial(fm({"d": [0, 1, 0]}))
        assert m.cols == 1

    def test_onehot_encoding_skipped(self):
        m = add_polynomial(fm({"g=M": [0, 1, 0]}, {"g=M": "onehot"}))
        assert m.cols == 1

    def test_width_grows_by_eligible_count(self):
        rng = np.random.default_rng(5)
        cols = {f"x{i}": rng.normal(size=10) for i in range(5)}
        cols["flag"] = (rng.random(10) < 0.5).astype(float)
        m = add_polynomial(fm(cols))
        assert m.cols == 6 + 5

    def test_degree_one_is_identity(self):
        m0 = fm({"a": [1.0, 2.0]})
        assert add_polynomial(m0, degree=1).cols == 1

    def test_engineered_columns_not_squared(self):
        m = add_interactions(fm({"a": [1, 2], "b": [3, 4]}), [("a", "b")])
        out = add_polynomial(m)
        assert "sq:inter:a*b" not in out.column_names


class TestTimeSinceLastDefault:
    def test_scan_oracle_case(self):
        t = credit_table([(1, -5, "3"), (1, -2, "0"), (1, 0, "C")])
        feats, window = time_since_last_default(t)
        assert feats["1"] == 5.0

    def test_current_month_default(self):
        t = credit_table([(1, 0, "2")])
        feats, _ = time_since_last_default(t)
        assert feats["1"] == 0.0

    def test_sentinel_for_clean_history(self):
        rows = [(1, -m, "0") for m in range(24)]  # months 0..-23: 24-month window
        t = credit_table(rows)
        feats, window = time_since_last_default(t)
        assert window == 24
        assert feats["1"] == 25.0

    def test_frozen_window_override(self):
        t = credit_table([(1, -3, "0")])
        feats, window = time_since_last_default(t, window=24)
        assert feats["1"] == 25.0
        assert window == 24

    def test_bounds_invariant(self):
        rng = np.random.default_rng(6)
        rows = []
        for i in range(50):
            for m in range(int(rng.integers(1, 24))):
                tok = str(rng.choice(["C", "X", "0", "1", "2", "3", "4", "5"]))
                rows.append((i, -m, tok))
        t = credit_table(rows)
        feats, window = time_since_last_default(t)
        sentinel = window + 1
        for v in feats.values():
            assert 0.0 <= v <= sentinel

    def test_positive_months_abort(self):
        t = credit_table([(1, 2, "0")])
        with pytest.raises(DataError, match="positive"):
            time_since_last_default(t)

    def test_window_restricted_to_ids(self):
        t = credit_table([(1, -3, "0"), (2, -20, "0")])
        assert observation_window(t, "MONTHS_BALANCE", ids=["1"]) == 4
        assert observation_window(t, "MONTHS_BALANCE") == 21


class TestRowwisePurity:
    def test_engineering_commutes_with_row_subset(self):
        rng = np.random.default_rng(7)
        data = rng.normal(size=(30, 3))
        m = fm({"a": data[:, 0], "b": data[:, 1], "c": data[:, 2]})
        pairs = [("a", "b")]
        engineered = add_polynomial(add_interactions(m, pairs))
        subset = rng.choice(30, size=12, replace=False)
        a = engineered.take_rows(subset)
        b = add_polynomial(add_interactions(m.take_rows(subset), pairs))
        assert np.array_equal(a.data, b.data)
        assert a.column_names == b.column_names


class TestRecipe:
    def test_bad_degree_rejected(self):
        with pytest.raises(DataError):
            FeatureRecipe(polynomial_degree=3)
