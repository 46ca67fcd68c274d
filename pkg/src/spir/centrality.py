"""KP-Centrality: support sets over passage and key-phrase columns, ranked by
how many support sets each passage belongs to.

The same code path serves plaintext columns (cosine or Euclidean distance)
and hashed columns (normalized Hamming distance).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import InvalidParameterError, MetricMismatchError
from .sbe import BitHash, hamming_matrix

METRICS = ("cosine", "euclidean", "hamming")
STRATEGIES = ("mean-threshold", "k-nearest")


@dataclass(frozen=True)
class SupportSetConfig:
    strategy: str = "mean-threshold"
    k: int = 1
    include_keyphrases_as_members: bool = True

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidParameterError(f"unknown support-set strategy {self.strategy!r}")
        if self.strategy == "k-nearest" and self.k < 1:
            raise InvalidParameterError("k must be at least 1 for k-nearest")


@dataclass(frozen=True)
class SupportSet:
    center: int
    members: frozenset


@dataclass(frozen=True)
class RankedPassages:
    """(passage index, score) pairs, best first."""

    ranked: tuple

    @property
    def indices(self):
        return [i for i, _ in self.ranked]

    @property
    def scores(self):
        return [s for _, s in self.ranked]

    def __len__(self):
        return len(self.ranked)

    def __iter__(self):
        return iter(self.ranked)


def _as_packed_hashes(columns):
    """Return (packed uint8 rows, M) if ``columns`` are hashes, else None."""
    if isinstance(columns, (list, tuple)) and columns and all(isinstance(c, BitHash) for c in columns):
        Ms = {c.M for c in columns}
        if len(Ms) != 1:
            raise MetricMismatchError("all hashes must have the same bit length")
        packed = np.frombuffer(b"".join(c.bits for c in columns), dtype=np.uint8)
        return packed.reshape(len(columns), -1), Ms.pop()
    return None


def pairwise_distances(columns, metric="cosine"):
    """Symmetric distance matrix between columns.

    Real input is a ``(T, C)`` matrix whose columns are compared; hashed input
    is a sequence of :class:`BitHash`.  Cosine distance between a zero column
    and anything is 1.
    """
    if metric not in METRICS:
        raise InvalidParameterError(f"unknown metric {metric!r}")
    hashed = _as_packed_hashes(columns)
    if metric == "hamming":
        if hashed is None:
            raise MetricMismatchError("hamming distance needs BitHash columns")
        return hamming_matrix(*hashed)
    if hashed is not None:
        raise MetricMismatchError(f"{metric} distance needs real-valued columns")

    X = np.asarray(columns, dtype=float)
    if X.ndim != 2:
        raise MetricMismatchError("real columns must form a 2-D matrix")
    X = X.T
    if metric == "euclidean":
        # direct differences: the Gram-matrix shortcut loses exact zeros
        D = np.empty((X.shape[0], X.shape[0]))
        for i in range(X.shape[0]):
            D[i] = np.linalg.norm(X - X[i], axis=1)
    else:
        norms = np.linalg.norm(X, axis=1)
        safe = np.where(norms > 0, norms, 1.0)
        U = X / safe[:, None]
        D = 1.0 - U @ U.T
        zero = norms == 0
        D[zero, :] = 1.0
        D[:, zero] = 1.0
        np.clip(D, 0.0, 2.0, out=D)
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return D


TIE_DECIMALS = 12


def support_set(i, distances, config=SupportSetConfig(), n_passages=None):
    """Columns closest to column ``i``.

    ``n_passages`` marks where key-phrase columns start; it only matters when
    key phrases are excluded from membership.
    """
    D = np.asarray(distances, dtype=float)
    C = D.shape[0]
    if not 0 <= i < C:
        raise InvalidParameterError(f"column index {i} out of range for {C} columns")
    limit = C
    if not config.include_keyphrases_as_members and n_passages is not None:
        limit = n_passages
    candidates = np.array([s for s in range(limit) if s != i], dtype=int)
    if candidates.size == 0:
        return SupportSet(i, frozenset())
    # snap away last-bit noise so ties in exact arithmetic stay ties
    d = np.round(D[i, candidates], TIE_DECIMALS)
    if config.strategy == "mean-threshold":
        threshold = np.round(d.mean(), TIE_DECIMALS)
        members = candidates[d < threshold]
    else:
        # stable sort on distance keeps lower indices first among ties
        order = np.argsort(d, kind="stable")
        members = candidates[order[:config.k]]
    return SupportSet(i, frozenset(int(m) for m in members))


def rank_passages(support_sets, n, num_passages):
    """Passages ordered by the number of support sets that contain them.

    Ties and zero-score padding follow order of occurrence.
    """
    if n < 1:
        raise InvalidParameterError("n must be at least 1")
    scores = [0] * num_passages
    for s in support_sets:
        for m in s.members:
            if m < num_passages:
                scores[m] += 1
    order = sorted(range(num_passages), key=lambda p: (-scores[p], p))
    return RankedPassages(tuple((p, scores[p]) for p in order[:n]))


def retrieve(columns, n, metric="cosine", config=SupportSetConfig(), num_passages=None):
    """Top-``n`` passages of a document represented by its columns.

    ``num_passages`` defaults to every column being a passage.
    """
    D = pairwise_distances(columns, metric)
    C = D.shape[0]
    if num_passages is None:
        num_passages = C
    if not 1 <= num_passages <= C:
        raise InvalidParameterError(f"num_passages must lie in [1, {C}]")
    sets = [support_set(i, D, config, num_passages) for i in range(C)]
    return rank_passages(sets, n, num_passages)


class KPCentrality(BaseEstimator):
    """Estimator wrapper around :func:`retrieve`.

    ``fit`` takes one document's columns: a ``(T, C)`` real matrix (or a
    :class:`~spir.text.CompactMatrix`) or a list of ``BitHash``.

    Attributes
    ----------
    distances_ : ndarray of shape (C, C)
    support_sets_ : list of SupportSet
    scores_ : ndarray of shape (n_passages,)
    ranking_ : RankedPassages
    """

    def __init__(self, n=3, metric="cosine", strategy="mean-threshold", k=1,
                 include_keyphrases_as_members=True):
        self.n = n
        self.metric = metric
        self.strategy = strategy
        self.k = k
        self.include_keyphrases_as_members = include_keyphrases_as_members

    def _config(self):
        return SupportSetConfig(self.strategy, self.k, self.include_keyphrases_as_members)

    def fit(self, X, y=None, n_passages=None):
        weights = getattr(X, "weights", None)
        if weights is not None:
            n_passages = X.n_passages if n_passages is None else n_passages
            X = weights
        config = self._config()
        D = pairwise_distances(X, self.metric)
        C = D.shape[0]
        n_passages = C if n_passages is None else n_passages
        self.distances_ = D
        self.support_sets_ = [support_set(i, D, config, n_passages) for i in range(C)]
        full = rank_passages(self.support_sets_, n_passages, n_passages)
        self.scores_ = np.zeros(n_passages, dtype=int)
        for p, s in full:
            self.scores_[p] = s
        self.ranking_ = RankedPassages(full.ranked[:self.n])
        return self

    def predict(self, X=None):
        """Indices of the top ``n`` passages of the fitted document."""
        check_is_fitted(self, "ranking_")
        return np.array(self.ranking_.indices, dtype=int)

    def fit_predict(self, X, y=None, n_passages=None):
        return self.fit(X, n_passages=n_passages).predict()
