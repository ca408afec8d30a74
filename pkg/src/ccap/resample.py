"""SMOTE: synthetic minority oversampling by segment interpolation.

Each synthetic point is x + lambda * (neighbor - x) for a uniformly chosen
minority point x, one of its k nearest minority neighbors (Euclidean,
distance ties broken by lower row index, never itself), and lambda uniform
on [0, 1]. Original rows pass through verbatim and first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import FeatureMatrix, Labels
from .errors import TrainingError
from .util import spawn_rng


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    target_ratio: float = 1.0  # minority:majority after resampling
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k_neighbors < 1:
            raise TrainingError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if not 0.0 < self.target_ratio <= 1.0:
            raise TrainingError(
                f"target_ratio must lie in (0,1], got {self.target_ratio}"
            )


@dataclass
class SmoteResult:
    matrix: FeatureMatrix
    labels: Labels
    # provenance of each synthetic row, for geometry/neighbor validation
    base_rows: np.ndarray  # index into the minority subset
    neighbor_rows: np.ndarray  # index into the minority subset
    lambdas: np.ndarray


def smote_sample(x, neighbor, lam: float) -> np.ndarray:
    """One interpolated sample x + lam * (neighbor - x)."""
    x = np.asarray(x, dtype=np.float64)
    neighbor = np.asarray(neighbor, dtype=np.float64)
    if x.shape != neighbor.shape:
        raise ValueError(
            f"dimension mismatch: {x.shape} vs {neighbor.shape}"
        )
    return x + lam * (neighbor - x)


def minority_neighbors(points: np.ndarray, k: int) -> np.ndarray:
    """k nearest neighbors within the minority set, excluding self.

    Euclidean distance; ties broken by lower row index. Returns an
    (n, k) index matrix into ``points``.
    """
    n = points.shape[0]
    if k >= n:
        raise TrainingError(
            f"k_neighbors={k} requires a minority class larger than {k}; "
            "lower k_neighbors"
        )
    out = np.empty((n, k), dtype=np.int64)
    chunk = max(1, 4_000_000 // max(n * points.shape[1], 1))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        diff = points[lo:hi, None, :] - points[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        d2[np.arange(lo, hi) - lo, np.arange(lo, hi)] = np.inf
        # stable sort: distance ties resolved by ascending row index
        order = np.argsort(d2, axis=1, kind="stable")
        out[lo:hi] = order[:, :k]
    return out


def smote(m: FeatureMatrix, y: Labels, cfg: SmoteConfig) -> SmoteResult:
    """Oversample the minority class of a training matrix.

    Synthetic count is ceil(target_ratio * majority) - minority, zero when
    already balanced. Majority rows are never modified.
    """
    labels = y.values
    n_pos = int(np.sum(labels == 1))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise TrainingError("SMOTE requires both classes in the training data")
    minority_label = 1 if n_pos <= n_neg else 0
    n_min = min(n_pos, n_neg)
    n_maj = max(n_pos, n_neg)

    n_synth = max(int(np.ceil(cfg.target_ratio * n_maj)) - n_min, 0)
    if n_synth == 0:
        return SmoteResult(
            matrix=m,
            labels=y,
            base_rows=np.empty(0, dtype=np.int64),
            neighbor_rows=np.empty(0, dtype=np.int64),
            lambdas=np.empty(0),
        )

    minority_idx = np.flatnonzero(labels == minority_label)
    pts = m.data[minority_idx]
    nn = minority_neighbors(pts, cfg.k_neighbors)

    rng = spawn_rng(cfg.seed, "smote")
    base = rng.integers(0, len(minority_idx), size=n_synth)
    slot = rng.integers(0, cfg.k_neighbors, size=n_synth)
    lam = rng.random(n_synth)
    neighbor = nn[base, slot]

    synth = pts[base] + lam[:, None] * (pts[neighbor] - pts[base])
    data = np.vstack([m.data, synth])
    new_labels = np.concatenate(
        [labels, np.full(n_synth, minority_label, dtype=np.int8)]
    )
    return SmoteResult(
        matrix=FeatureMatrix(data=data, col_meta=list(m.col_meta)),
        labels=Labels(new_labels),
        base_rows=base,
        neighbor_rows=neighbor,
        lambdas=lam,
    )
