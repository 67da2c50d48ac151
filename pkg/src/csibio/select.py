"""mRMR feature ranking on a plug-in (histogram) mutual-information estimator.

Continuous features are discretized into a fixed number of bins
(equal-frequency by default); labels stay categorical. The greedy
ranking uses the difference criterion

    score(f) = MI(f; y) - mean_{s in selected} MI(f; s)

with lexicographic feature-name tie-breaking, so rankings are fully
deterministic and invariant to joint row permutations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput
from .model import FeatureMatrix


@dataclass(frozen=True)
class MrmrConfig:
    k_select: int
    bins: int = 10
    binning: str = "equal_frequency"

    def __post_init__(self):
        if self.k_select < 1:
            raise ValueError("k_select must be >= 1")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")
        if self.binning not in ("equal_frequency", "equal_width"):
            raise ValueError(f"unknown binning {self.binning!r}")


@dataclass(frozen=True)
class RankedFeature:
    name: str
    relevance: float
    redundancy: float
    score: float


def discretize(x: np.ndarray, cfg: MrmrConfig) -> np.ndarray:
    """Map a real vector to integer bin codes; constant vectors map to one bin."""
    x = np.asarray(x, dtype=np.float64)
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros(x.shape[0], dtype=np.intp)
    if cfg.binning == "equal_frequency":
        qs = np.linspace(0.0, 1.0, cfg.bins + 1)[1:-1]
        edges = np.unique(np.quantile(x, qs))
    else:
        edges = lo + (hi - lo) * np.linspace(0.0, 1.0, cfg.bins + 1)[1:-1]
    return np.searchsorted(edges, x, side="right")


def _codes(labels) -> np.ndarray:
    _, codes = np.unique(np.asarray(labels), return_inverse=True)
    return codes


def _discrete_mi(a: np.ndarray, b: np.ndarray) -> float:
    """MI in bits between two integer-coded vectors via the joint histogram."""
    n = a.shape[0]
    n_a = int(a.max()) + 1
    n_b = int(b.max()) + 1
    joint = np.zeros((n_a, n_b))
    np.add.at(joint, (a, b), 1.0)
    joint /= n
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log2(joint[nz] / (pa @ pb)[nz])))


def mutual_information(x: np.ndarray, y, cfg: MrmrConfig) -> float:
    """Plug-in MI estimate (bits) between a real feature and discrete labels.

    Constant features carry no information and return 0.
    """
    x = np.asarray(x, dtype=np.float64)
    y_codes = _codes(y)
    if x.shape[0] != y_codes.shape[0]:
        raise DegenerateInput("x and y must have equal length")
    if x.shape[0] < cfg.bins:
        raise DegenerateInput(f"need at least {cfg.bins} samples for {cfg.bins} bins")
    if x.max() == x.min():
        return 0.0
    return _discrete_mi(discretize(x, cfg), y_codes)


def feature_mi(a: np.ndarray, b: np.ndarray, cfg: MrmrConfig) -> float:
    """MI between two real features, both discretized with the same config."""
    if a.max() == a.min() or b.max() == b.min():
        return 0.0
    return _discrete_mi(discretize(a, cfg), discretize(b, cfg))


def mrmr_rank(matrix: FeatureMatrix, y, cfg: MrmrConfig) -> list[RankedFeature]:
    """Greedy minimum-redundancy maximum-relevance ranking of the columns.

    Returns the top ``cfg.k_select`` features in selection order; the
    first is the max-relevance feature, each subsequent one maximizes
    relevance minus mean MI against the already-selected set.
    """
    names = matrix.feature_names
    if len(names) < 2:
        raise DegenerateInput("need at least two features to rank")
    y_codes = _codes(y)
    if len(np.unique(y_codes)) < 2:
        raise DegenerateInput("need at least two classes")
    k_select = min(cfg.k_select, len(names))

    columns = [matrix.values[:, i] for i in range(len(names))]
    relevance = np.array([mutual_information(c, y_codes, cfg) for c in columns])

    remaining = list(range(len(names)))
    selected: list[int] = []
    ranking: list[RankedFeature] = []
    pairwise: dict[tuple[int, int], float] = {}

    def pair_mi(i: int, j: int) -> float:
        key = (min(i, j), max(i, j))
        if key not in pairwise:
            pairwise[key] = feature_mi(columns[i], columns[j], cfg)
        return pairwise[key]

    while remaining and len(selected) < k_select:
        best_idx = None
        best_key = None
        best_red = 0.0
        for i in remaining:
            red = (
                float(np.mean([pair_mi(i, s) for s in selected])) if selected else 0.0
            )
            score = relevance[i] - red
            # Maximize score; break ties by feature name.
            key = (-score, names[i])
            if best_key is None or key < best_key:
                best_key, best_idx, best_red = key, i, red
        remaining.remove(best_idx)
        selected.append(best_idx)
        ranking.append(
            RankedFeature(
                name=names[best_idx],
                relevance=float(relevance[best_idx]),
                redundancy=best_red,
                score=float(relevance[best_idx] - best_red),
            )
        )
    return ranking
