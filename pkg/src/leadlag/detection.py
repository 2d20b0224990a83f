"""Lead-lag detection from clustered windows, plus a correlation benchmark.

Two windows assigned to the same cluster are treated as realisations of the
same underlying segment. For a pair of distinct series, every co-clustered
window pair contributes the difference of their start offsets as one vote
for the relative lag between the series. Positive entries of the resulting
matrix mean the row series leads the column series.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .cluster import ClusterAssignment, kmeans_pp, spectral
from .core import SubsequenceUniverse, TimeSeriesPanel, extract_subsequences, standardize_windows
from .similarity import gaussian_kernel, knn_graph

METHODS = ("KM_Mod", "KM_Med", "SP_Mod", "SP_Med")
AGGREGATORS = ("mode", "median")


@dataclass(frozen=True)
class LagMultisets:
    """Pooled relative-lag observations for every unordered series pair.

    For the pair (i, j) with i < j, each co-clustered cross-series window
    pair contributes start_j - start_i. Entries are grouped per pair and
    sorted; ``group_starts`` delimits the groups inside ``lags``.
    """

    n_series: int
    pair_i: np.ndarray
    pair_j: np.ndarray
    group_starts: np.ndarray
    lags: np.ndarray

    @property
    def n_pairs(self) -> int:
        return self.pair_i.size

    def lags_for(self, i: int, j: int) -> np.ndarray:
        """The lag multiset of an unordered pair, sorted ascending."""
        if i == j:
            raise ValueError("lag multisets exist for distinct series only")
        a, b = (i, j) if i < j else (j, i)
        key = a * self.n_series + b
        keys = self.pair_i * self.n_series + self.pair_j
        pos = np.searchsorted(keys, key)
        if pos == keys.size or keys[pos] != key:
            return np.empty(0, dtype=np.int64)
        sl = self.lags[self.group_starts[pos] : self.group_starts[pos + 1]]
        return sl if i < j else -sl[::-1]

    def count_matrix(self) -> np.ndarray:
        """Symmetric matrix of multiset sizes."""
        n = self.n_series
        counts = np.zeros((n, n), dtype=np.int64)
        sizes = np.diff(self.group_starts)
        counts[self.pair_i, self.pair_j] = sizes
        counts[self.pair_j, self.pair_i] = sizes
        return counts


@dataclass(frozen=True)
class VotingMatrix:
    """Multiset sizes with sub-threshold entries zeroed out."""

    counts: np.ndarray
    threshold: int


@dataclass(frozen=True)
class LeadLagMatrix:
    """Antisymmetric pairwise lag estimates with series identifiers."""

    gamma: np.ndarray
    ids: tuple[str, ...]

    def __init__(self, gamma, ids):
        gamma = np.asarray(gamma)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "ids", tuple(str(i) for i in ids))
        if gamma.ndim != 2 or gamma.shape[0] != gamma.shape[1]:
            raise ValueError("lead-lag matrix must be square")
        if len(self.ids) != gamma.shape[0]:
            raise ValueError(f"{len(self.ids)} ids for a {gamma.shape[0]}-row matrix")
        scale = max(1.0, float(np.abs(gamma).max(initial=0.0)))
        if np.abs(gamma + gamma.T).max(initial=0.0) > 1e-9 * scale:
            raise ValueError("lead-lag matrix must be antisymmetric")


_TRIU_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}

# Largest (pair, lag) grid the vote pooling will allocate densely; sparser
# vote lists fall back to sorting.
_DENSE_GRID_LIMIT = 1 << 20


def _triu_pairs(m: int) -> tuple[np.ndarray, np.ndarray]:
    # Rolling detection rebuilds pair tables for the same handful of
    # cluster sizes thousands of times; small tables are worth keeping.
    pairs = _TRIU_CACHE.get(m)
    if pairs is None:
        pairs = np.triu_indices(m, k=1)
        if m <= 128:
            _TRIU_CACHE[m] = pairs
    return pairs


def pair_lag_multisets(
    assignment: ClusterAssignment, universe: SubsequenceUniverse
) -> LagMultisets:
    """Pool start-offset differences over every cluster.

    Within each cluster, all window pairs from two distinct series vote for
    the lag of the higher-indexed series relative to the lower-indexed one.
    Pairs of windows from the same series carry no lag information and are
    skipped.
    """
    labels = np.asarray(assignment.labels)
    if labels.shape != (universe.n_windows,):
        raise ValueError("assignment does not label this universe")
    n = universe.n_series
    order = np.argsort(labels, kind="stable")
    sorted_labels = labels[order]
    series = universe.series_index[order]
    starts = universe.start_index[order]
    boundaries = np.flatnonzero(np.r_[True, sorted_labels[1:] != sorted_labels[:-1], True])
    parts_a = []
    parts_b = []
    for b in range(boundaries.size - 1):
        lo, hi = boundaries[b], boundaries[b + 1]
        m = hi - lo
        if m < 2:
            continue
        ia, ib = _triu_pairs(m)
        parts_a.append(ia + lo)
        parts_b.append(ib + lo)
    if parts_a:
        idx_a = np.concatenate(parts_a)
        idx_b = np.concatenate(parts_b)
        sa = series[idx_a]
        sb = series[idx_b]
        cross = sa != sb
        idx_a = idx_a[cross]
        idx_b = idx_b[cross]
        sa = sa[cross]
        sb = sb[cross]
    else:
        sa = np.empty(0, dtype=np.int64)
    if not sa.size:
        empty = np.empty(0, dtype=np.int64)
        return LagMultisets(
            n_series=n,
            pair_i=empty,
            pair_j=empty,
            group_starts=np.zeros(1, dtype=np.int64),
            lags=empty,
        )
    za = starts[idx_a]
    zb = starts[idx_b]
    swap = sa > sb
    all_i = np.where(swap, sb, sa)
    all_j = np.where(swap, sa, sb)
    all_lag = np.where(swap, za - zb, zb - za).astype(np.int64)
    key = all_i.astype(np.int64) * n + all_j
    lag_min = int(all_lag.min())
    span = int(all_lag.max()) - lag_min + 1
    if n * n * span <= max(_DENSE_GRID_LIMIT, 4 * all_lag.size):
        # Votes densely populate a small (pair, lag) grid here, so one
        # bincount replaces the sort of the full vote list.
        counts = np.bincount(
            key * span + (all_lag - lag_min), minlength=n * n * span
        )
        runs = np.flatnonzero(counts)
        run_count = counts[runs]
        run_key = runs // span
        all_lag = np.repeat(runs % span + lag_min, run_count)
        run_first = np.flatnonzero(np.r_[True, run_key[1:] != run_key[:-1]])
        pair_key = run_key[run_first]
        sizes = np.add.reduceat(run_count, run_first)
        group_starts = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    else:
        order = np.lexsort((all_lag, key))
        key = key[order]
        all_lag = all_lag[order]
        group_first = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
        pair_key = key[group_first]
        group_starts = np.append(group_first, key.size).astype(np.int64)
    return LagMultisets(
        n_series=n,
        pair_i=(pair_key // n).astype(np.int64),
        pair_j=(pair_key % n).astype(np.int64),
        group_starts=group_starts,
        lags=all_lag,
    )


def voting_matrix(multisets: LagMultisets, threshold: int) -> VotingMatrix:
    """Keep each pair's vote count if it reaches the threshold, else zero.

    threshold = 1 keeps everything, so voting degenerates to no filter.
    """
    if threshold < 1:
        raise ValueError(f"voting threshold must be a positive integer, got {threshold}")
    counts = multisets.count_matrix()
    counts[counts < threshold] = 0
    return VotingMatrix(counts=counts, threshold=threshold)


def aggregate_lag(lags, method: str) -> int | None:
    """Collapse one lag multiset to a single estimate.

    mode: the most frequent value; ties go to the smallest magnitude and
    then to the smaller value, so spurious symmetric votes cancel toward 0.
    median: the lower median of the sorted multiset.
    Returns None for an empty multiset, which has no estimate.
    """
    if method not in AGGREGATORS:
        raise ValueError(f"aggregation method must be one of {AGGREGATORS}, got {method!r}")
    lags = np.asarray(lags, dtype=np.int64)
    if lags.size == 0:
        return None
    if method == "median":
        return int(np.sort(lags)[(lags.size - 1) // 2])
    values, counts = np.unique(lags, return_counts=True)
    pick = np.lexsort((values, np.abs(values), -counts))[0]
    return int(values[pick])


def _aggregate_all(
    multisets: LagMultisets, method: str, active: np.ndarray | None = None
) -> np.ndarray:
    """Aggregate each pair's multiset at once; returns one value per group.

    With an `active` group mask only those groups are aggregated and the
    result has one value per active group, in group order.
    """
    sizes = np.diff(multisets.group_starts)
    if method == "median":
        pos = multisets.group_starts[:-1] + (sizes - 1) // 2
        est = multisets.lags[pos]
        return est if active is None else est[active]
    # Run-length encode (pair, lag); within each pair order runs by
    # descending count, then magnitude, then value, and take the first.
    if active is None:
        key = np.repeat(np.arange(multisets.n_pairs), sizes)
        lag = multisets.lags
    else:
        lag = multisets.lags[np.repeat(active, sizes)]
        sizes = sizes[active]
        key = np.repeat(np.flatnonzero(active), sizes)
    if not lag.size:
        return np.empty(0, dtype=np.int64)
    new_run = np.r_[True, (key[1:] != key[:-1]) | (lag[1:] != lag[:-1])]
    run_at = np.flatnonzero(new_run)
    run_key = key[run_at]
    run_val = lag[run_at]
    run_count = np.diff(np.append(run_at, lag.size))
    # The winning run maximises (count, -|value|, value < 0); packing that
    # ordering into one integer lets a segmented max pick every group's
    # winner in a single pass, and the winner decodes back to its value.
    mag = np.abs(run_val)
    base = int(mag.max()) + 2
    score = (run_count * base + (base - 1 - mag)) * 2 + (run_val < 0)
    first = np.flatnonzero(np.r_[True, run_key[1:] != run_key[:-1]])
    best = np.maximum.reduceat(score, first)
    best_mag = (base - 1) - (best >> 1) % base
    return np.where(best & 1, -best_mag, best_mag)


def lead_lag_matrix(
    multisets: LagMultisets,
    votes: VotingMatrix,
    method: str,
    ids=None,
) -> LeadLagMatrix:
    """Aggregate the surviving multisets into an antisymmetric lag matrix.

    Entries whose pair was voted out, or that never gathered a vote, are 0.
    """
    if method not in AGGREGATORS:
        raise ValueError(f"aggregation method must be one of {AGGREGATORS}, got {method!r}")
    n = multisets.n_series
    if votes.counts.shape != (n, n):
        raise ValueError("voting matrix does not match the multisets")
    gamma = np.zeros((n, n), dtype=np.int64)
    if multisets.n_pairs:
        active = votes.counts[multisets.pair_i, multisets.pair_j] > 0
        estimates = _aggregate_all(multisets, method, active)
        gamma[multisets.pair_i[active], multisets.pair_j[active]] = estimates
        gamma = gamma - gamma.T
    if ids is None:
        ids = [str(i) for i in range(n)]
    return LeadLagMatrix(gamma=gamma, ids=ids)


@dataclass(frozen=True)
class DetectConfig:
    """Configuration of the clustering-based detector.

    method combines the clustering algorithm (KM or SP) with the multiset
    aggregator (Mod or Med). k_nn and sigma_kernel only apply to SP methods
    and default to ceil(sqrt(N)) and 1/N respectively.
    """

    q: int
    method: str = "KM_Mod"
    s: int = 1
    n_clusters: int = 11
    theta: int = 6
    seed: int = 0
    k_nn: int | None = None
    sigma_kernel: float | None = None
    standardize: bool = False
    max_iter: int = 300
    tol: float = 1e-6
    restarts: int = 1
    allow_isolated: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        for name in ("q", "s", "n_clusters", "theta", "max_iter", "restarts"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")

    @property
    def aggregator(self) -> str:
        return "mode" if self.method.endswith("Mod") else "median"


@dataclass(frozen=True)
class DetectionResult:
    """Everything the detector produced, from windows to the final matrix."""

    universe: SubsequenceUniverse
    assignment: ClusterAssignment
    multisets: LagMultisets
    votes: VotingMatrix
    gamma: LeadLagMatrix


def detect_pipeline(panel: TimeSeriesPanel, cfg: DetectConfig) -> DetectionResult:
    """Run extraction, clustering, voting and aggregation on a panel."""
    universe = extract_subsequences(panel, cfg.q, cfg.s)
    if cfg.standardize:
        universe = standardize_windows(universe)
    if cfg.n_clusters > universe.n_windows:
        raise ValueError(
            f"n_clusters={cfg.n_clusters} exceeds the {universe.n_windows} extracted windows"
        )
    if cfg.method.startswith("KM"):
        assignment = kmeans_pp(
            universe,
            cfg.n_clusters,
            seed=cfg.seed,
            max_iter=cfg.max_iter,
            tol=cfg.tol,
            restarts=cfg.restarts,
        )
    else:
        graph = knn_graph(universe, cfg.k_nn)
        graph = gaussian_kernel(graph, universe, cfg.sigma_kernel)
        assignment = spectral(
            graph,
            cfg.n_clusters,
            seed=cfg.seed,
            max_iter=cfg.max_iter,
            tol=cfg.tol,
            restarts=cfg.restarts,
            allow_isolated=cfg.allow_isolated,
        )
    multisets = pair_lag_multisets(assignment, universe)
    votes = voting_matrix(multisets, cfg.theta)
    gamma = lead_lag_matrix(multisets, votes, cfg.aggregator, ids=panel.ids)
    return DetectionResult(
        universe=universe,
        assignment=assignment,
        multisets=multisets,
        votes=votes,
        gamma=gamma,
    )


def detect(panel: TimeSeriesPanel, cfg: DetectConfig) -> LeadLagMatrix:
    """The clustering detector's lag matrix for a panel."""
    return detect_pipeline(panel, cfg).gamma


def ccf(x, y, max_lag: int) -> np.ndarray:
    """Cross-correlations CORR(x[t - m], y[t]) for m = 1 .. max_lag.

    Entry m - 1 measures how well x predicts y m steps ahead, computed on
    the overlapping stretch of the two series.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("ccf needs two equal-length vectors")
    if max_lag < 1:
        raise ValueError(f"max_lag must be a positive integer, got {max_lag}")
    if x.size <= max_lag + 2:
        raise ValueError(f"series of length {x.size} too short for max_lag {max_lag}")
    out = np.empty(max_lag)
    for m in range(1, max_lag + 1):
        a = x[:-m] - x[:-m].mean()
        b = y[m:] - y[m:].mean()
        na = float(a @ a)
        nb = float(b @ b)
        if na == 0.0 or nb == 0.0:
            raise ValueError(f"correlation undefined at lag {m}: constant overlap")
        out[m - 1] = float(a @ b) / np.sqrt(na * nb)
    return np.clip(out, -1.0, 1.0)


def _abs_ccf_strength(values: np.ndarray, max_lag: int) -> np.ndarray:
    """Directed predictive strength I[i, j] = sum_m |CORR(x_i[t-m], x_j[t])|."""
    n, t = values.shape
    strength = np.zeros((n, n))
    for m in range(1, max_lag + 1):
        a = values[:, : t - m]
        b = values[:, m:]
        ac = a - a.mean(axis=1, keepdims=True)
        bc = b - b.mean(axis=1, keepdims=True)
        norm_a = np.sqrt((ac * ac).sum(axis=1))
        norm_b = np.sqrt((bc * bc).sum(axis=1))
        if (norm_a == 0.0).any() or (norm_b == 0.0).any():
            raise ValueError(f"correlation undefined at lag {m}: constant overlap")
        corr = (ac @ bc.T) / np.outer(norm_a, norm_b)
        strength += np.abs(np.clip(corr, -1.0, 1.0))
    return strength


def _signed_strength_ratio(strength: np.ndarray) -> np.ndarray:
    """Fold directed strengths into a signed, antisymmetric score.

    Entry (i, j) is max(I_ij, I_ji) / (I_ij + I_ji) signed toward the
    stronger direction; magnitudes therefore land in [0.5, 1) or at 0 when
    the directions tie or carry no strength at all.
    """
    transposed = strength.T
    num = np.maximum(strength, transposed) * np.sign(strength - transposed)
    denom = strength + transposed
    out = np.divide(num, denom, out=np.zeros_like(num), where=denom > 0)
    np.fill_diagonal(out, 0.0)
    return out


def ccf_lead_lag_matrix(panel: TimeSeriesPanel, max_lag: int) -> LeadLagMatrix:
    """Benchmark lead-lag matrix from summed absolute cross-correlations.

    Positive entries mean the row series leads the column series; nonzero
    magnitudes always lie in [0.5, 1).
    """
    if max_lag < 1:
        raise ValueError(f"max_lag must be a positive integer, got {max_lag}")
    if panel.n_times <= max_lag + 2:
        raise ValueError(
            f"panel of length {panel.n_times} too short for max_lag {max_lag}"
        )
    strength = _abs_ccf_strength(panel.values, max_lag)
    return LeadLagMatrix(gamma=_signed_strength_ratio(strength), ids=panel.ids)


def rowsum_rank(matrix, ids=None) -> list[tuple[str, float, int]]:
    """Rank series by row sums of an antisymmetric lead-lag matrix.

    Returns (id, score, rank) sorted by descending score. Ties keep their
    input order and share a competition rank: each rank is one plus the
    number of strictly better scores.
    """
    if isinstance(matrix, LeadLagMatrix):
        gamma = matrix.gamma
        ids = matrix.ids if ids is None else tuple(str(i) for i in ids)
    else:
        gamma = np.asarray(matrix)
        LeadLagMatrix(gamma=gamma, ids=ids if ids is not None else range(gamma.shape[0]))
        ids = (
            tuple(str(i) for i in ids)
            if ids is not None
            else tuple(str(i) for i in range(gamma.shape[0]))
        )
    scores = gamma.sum(axis=1).astype(np.float64)
    order = np.argsort(-scores, kind="stable")
    ranked: list[tuple[str, float, int]] = []
    rank = 0
    prev_score = None
    for pos, idx in enumerate(order, start=1):
        score = float(scores[idx])
        if score != prev_score:
            rank = pos
            prev_score = score
        ranked.append((ids[idx], score, rank))
    return ranked


def _format_cell(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_matrix_csv(matrix, ids, path) -> None:
    """Write a square matrix as CSV with id-labelled rows and columns."""
    arr = np.asarray(getattr(matrix, "gamma", matrix))
    ids = [str(i) for i in ids]
    if arr.shape != (len(ids), len(ids)):
        raise ValueError("matrix shape does not match the ids")
    integer = np.issubdtype(arr.dtype, np.integer)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", *ids])
        for i, row_id in enumerate(ids):
            cells = [str(int(v)) if integer else repr(float(v)) for v in arr[i]]
            writer.writerow([row_id, *cells])


def write_multisets_csv(multisets: LagMultisets, ids, path) -> None:
    """Write the pooled lag multisets as long-form (i, j, lag, count) rows."""
    ids = [str(i) for i in ids]
    if len(ids) != multisets.n_series:
        raise ValueError("ids do not match the multisets")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "lag", "count"])
        for g in range(multisets.n_pairs):
            lo = multisets.group_starts[g]
            hi = multisets.group_starts[g + 1]
            values, counts = np.unique(multisets.lags[lo:hi], return_counts=True)
            for v, c in zip(values, counts):
                writer.writerow(
                    [
                        ids[multisets.pair_i[g]],
                        ids[multisets.pair_j[g]],
                        int(v),
                        int(c),
                    ]
                )
