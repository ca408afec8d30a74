"""Shared binary-tree builder for the tree-based learners.

Grows greedy axis-aligned trees with candidate thresholds at midpoints
between consecutive sorted distinct feature values. Two criteria:

* ``entropy``: maximize base-2 information gain on 0/1 labels; leaves
  store the positive fraction.
* ``sse``: maximize squared-error reduction on gradient targets; leaves
  store the Newton step sum(g) / (sum(h) + reg).

Ties are broken deterministically: first maximal gain wins, features
scanned in ascending index order and thresholds in ascending value order.
Rows with x <= threshold go left.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GAIN_TOL = 1e-12


@dataclass
class Tree:
    feature: np.ndarray  # int32; -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray  # int32 child slots
    right: np.ndarray
    value: np.ndarray  # leaf payload (0.0 at internal nodes)
    depth: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int32)
        rows = np.arange(X.shape[0])
        for _ in range(self.depth + 1):
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                break
            fa = np.where(active, f, 0)
            go_left = X[rows, fa] <= self.threshold[node]
            nxt = np.where(go_left, self.left[node], self.right[node])
            node = np.where(active, nxt, node)
        return self.value[node]

    def leaf_count(self) -> int:
        return int(np.sum(self.feature < 0))


def _entropy_vec(pos: np.ndarray, total: np.ndarray) -> np.ndarray:
    """Base-2 entropy of (pos, total-pos) counts, 0*log0 = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        p = pos / total
        q = 1.0 - p
        hp = np.where(pos > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
        hq = np.where(total - pos > 0, -q * np.log2(np.where(q > 0, q, 1.0)), 0.0)
    return hp + hq


class _Builder:
    def __init__(
        self,
        X: np.ndarray,
        *,
        criterion: str,
        y: np.ndarray | None = None,
        grad: np.ndarray | None = None,
        hess: np.ndarray | None = None,
        max_depth: int,
        min_samples_split: int = 2,
        max_features: int | None = None,
        rng: np.random.Generator | None = None,
        leaf_reg: float = 0.0,
        order: np.ndarray | None = None,
    ) -> None:
        self.X = X
        self.criterion = criterion
        self.y = y
        self.grad = grad
        self.hess = hess
        self.max_depth = max_depth
        self.min_samples_split = max(min_samples_split, 2)
        self.max_features = max_features
        self.rng = rng
        self.leaf_reg = leaf_reg
        self.order = order  # optional global presort, argsort per feature

        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.tree_depth = 0

    # -- node payloads ------------------------------------------------

    def _leaf_value(self, rows: np.ndarray) -> float:
        if self.criterion == "entropy":
            return float(np.mean(self.y[rows]))
        g = float(np.sum(self.grad[rows]))
        h = float(np.sum(self.hess[rows]))
        return g / (h + self.leaf_reg) if (h + self.leaf_reg) != 0.0 else 0.0

    def _is_pure(self, rows: np.ndarray) -> bool:
        if self.criterion == "entropy":
            s = self.y[rows]
            return bool((s == s[0]).all())
        g = self.grad[rows]
        return bool((g == g[0]).all())

    # -- split search ---------------------------------------------------

    def _ordered_members(self, rows: np.ndarray, mask: np.ndarray, f: int) -> np.ndarray:
        # gather from the global presort for big nodes, sort the subset
        # otherwise; both keep ties in ascending row order
        n_total = self.X.shape[0]
        if self.order is not None and rows.size >= n_total // 8:
            of = self.order[:, f]
            return of[mask[of]]
        return rows[np.argsort(self.X[rows, f], kind="stable")]

    def _candidate_features(self, d: int) -> np.ndarray:
        if self.max_features is None or self.max_features >= d:
            return np.arange(d)
        picked = self.rng.choice(d, size=self.max_features, replace=False)
        return np.sort(picked)

    def _best_split(self, rows: np.ndarray, mask: np.ndarray):
        best_gain = _GAIN_TOL
        best = None
        n = rows.size
        if self.criterion == "entropy":
            pos_total = float(np.sum(self.y[rows]))
            parent = float(_entropy_vec(np.array([pos_total]), np.array([float(n)]))[0])
        else:
            g_total = float(np.sum(self.grad[rows]))
            parent_score = g_total * g_total / n

        for f in self._candidate_features(self.X.shape[1]):
            idx = self._ordered_members(rows, mask, f)
            xs = self.X[idx, f]
            cut = np.flatnonzero(xs[:-1] != xs[1:])
            if cut.size == 0:
                continue
            n_left = (cut + 1).astype(np.float64)
            n_right = n - n_left
            if self.criterion == "entropy":
                pos_left = np.cumsum(self.y[idx])[cut]
                pos_right = pos_total - pos_left
                child = (
                    n_left * _entropy_vec(pos_left, n_left)
                    + n_right * _entropy_vec(pos_right, n_right)
                ) / n
                gains = parent - child
            else:
                g_left = np.cumsum(self.grad[idx])[cut]
                g_right = g_total - g_left
                gains = (
                    g_left * g_left / n_left
                    + g_right * g_right / n_right
                    - parent_score
                )
            k = int(np.argmax(gains))
            if gains[k] > best_gain:
                best_gain = float(gains[k])
                lo, hi = xs[cut[k]], xs[cut[k] + 1]
                thr = lo + (hi - lo) / 2.0
                if not lo <= thr < hi:  # midpoint rounding guard
                    thr = lo
                best = (int(f), float(thr))
        return best

    # -- growth ---------------------------------------------------------

    def build(self, rows: np.ndarray) -> Tree:
        n_total = self.X.shape[0]
        mask = np.zeros(n_total, dtype=bool)
        # stack holds (rows, depth, parent_slot, is_left)
        self._emit(rows, 0, mask, parent=-1, is_left=False)
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
            depth=self.tree_depth,
        )

    def _emit(self, rows, depth, mask, parent, is_left):
        stack = [(rows, depth, parent, is_left)]
        while stack:
            rows, depth, parent, is_left = stack.pop()
            slot = len(self.feature)
            if parent >= 0:
                if is_left:
                    self.left[parent] = slot
                else:
                    self.right[parent] = slot
            self.tree_depth = max(self.tree_depth, depth)

            split = None
            if (
                depth < self.max_depth
                and rows.size >= self.min_samples_split
                and not self._is_pure(rows)
            ):
                mask[:] = False
                mask[rows] = True
                split = self._best_split(rows, mask)

            if split is None:
                self.feature.append(-1)
                self.threshold.append(0.0)
                self.left.append(-1)
                self.right.append(-1)
                self.value.append(self._leaf_value(rows))
                continue

            f, thr = split
            go_left = self.X[rows, f] <= thr
            self.feature.append(f)
            self.threshold.append(thr)
            self.left.append(-1)
            self.right.append(-1)
            self.value.append(0.0)
            # push right first so the left child is processed (and its
            # rng draws happen) first, keeping growth order deterministic
            stack.append((rows[~go_left], depth + 1, slot, False))
            stack.append((rows[go_left], depth + 1, slot, True))


def grow_tree(
    X: np.ndarray,
    *,
    criterion: str,
    y: np.ndarray | None = None,
    grad: np.ndarray | None = None,
    hess: np.ndarray | None = None,
    max_depth: int,
    min_samples_split: int = 2,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
    leaf_reg: float = 0.0,
    order: np.ndarray | None = None,
) -> Tree:
    if criterion not in ("entropy", "sse"):
        raise ValueError(f"unknown criterion {criterion!r}")
    if criterion == "entropy" and y is None:
        raise ValueError("entropy criterion requires labels")
    if criterion == "sse" and (grad is None or hess is None):
        raise ValueError("sse criterion requires gradients and hessians")
    X = np.asarray(X, dtype=np.float64)
    builder = _Builder(
        X,
        criterion=criterion,
        y=None if y is None else np.asarray(y, dtype=np.float64),
        grad=None if grad is None else np.asarray(grad, dtype=np.float64),
        hess=None if hess is None else np.asarray(hess, dtype=np.float64),
        max_depth=max_depth,
        min_samples_split=min_samples_split,
        max_features=max_features,
        rng=rng,
        leaf_reg=leaf_reg,
        order=order,
    )
    return builder.build(np.arange(X.shape[0], dtype=np.int64))
