"""K-means++ and spectral clustering over window universes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

# Above this vertex count the spectral path switches from a dense symmetric
# eigendecomposition to a Lanczos solver on the sparse Laplacian.
_DENSE_EIGH_CUTOFF = 5000


@dataclass(frozen=True)
class ClusterAssignment:
    """Cluster labels for the rows of a window universe.

    ``labels[r]`` lies in [0, n_clusters). ``inertia`` is the sum of squared
    distances of rows to their assigned centers; it is populated by K-means
    and left as None by spectral clustering, whose centers live in the
    embedding space rather than the window space.
    """

    labels: np.ndarray
    n_clusters: int
    inertia: float | None = None


class _LloydResult(NamedTuple):
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    n_iter: int
    init_indices: np.ndarray


def _pairwise_sq_dist(x: np.ndarray, centers: np.ndarray, x_sq: np.ndarray) -> np.ndarray:
    d2 = x_sq[:, None] - 2.0 * (x @ centers.T) + (centers * centers).sum(axis=1)[None, :]
    return np.maximum(d2, 0.0, out=d2)


def _seed_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding: each new center is drawn with probability
    proportional to the squared distance from the nearest chosen center.

    Uses the greedy variant: several candidates are sampled per step and
    the one that shrinks the total potential most is kept. This is the
    conventional behaviour of stock K-means implementations and spreads
    seeds across well-separated groups far more reliably than a single
    draw.
    """
    n = x.shape[0]
    trials = 2 + int(np.log(k))
    x_sq = (x * x).sum(axis=1)
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(n)
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            cands = rng.choice(n, size=trials, p=d2 / total)
        else:
            # All points coincide with a chosen center; any pick is as good.
            cands = rng.integers(n, size=trials)
        cand_d2 = np.minimum(d2, _pairwise_sq_dist(x, x[cands], x_sq).T)
        best = int(np.argmin(cand_d2.sum(axis=1)))
        chosen[j] = cands[best]
        d2 = cand_d2[best]
    return chosen


def _lloyd(
    x: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iter: int,
    tol: float,
    init_indices: np.ndarray | None = None,
) -> _LloydResult:
    n, q = x.shape
    if init_indices is None:
        init_indices = _seed_plusplus(x, k, rng)
    else:
        init_indices = np.asarray(init_indices, dtype=np.int64)
        if init_indices.shape != (k,):
            raise ValueError(f"init_indices must supply exactly {k} row indices")
    centers = x[init_indices].astype(np.float64, copy=True)
    x_sq = (x * x).sum(axis=1)
    prev_inertia = np.inf
    labels = np.zeros(n, dtype=np.int64)
    inertia = 0.0
    reseeded = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d2 = _pairwise_sq_dist(x, centers, x_sq)
        labels = d2.argmin(axis=1)
        point_d2 = d2[np.arange(n), labels]
        inertia = float(point_d2.sum())
        if not reseeded:
            # Lloyd steps cannot increase the objective; reseeding an empty
            # cluster is the one move allowed to break monotonicity.
            assert inertia <= prev_inertia * (1 + 1e-12) + 1e-9, "inertia increased"
        prev_inertia = inertia
        counts = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(counts == 0)
        reseeded = False
        if empty.size:
            # Restart each empty cluster on the point worst served by the
            # current centers. With exact duplicates the worst distance can
            # be zero, in which case reseeding cannot help and stops.
            far = np.argsort(-point_d2, kind="stable")
            filled = 0
            for c in empty:
                if filled >= far.size or point_d2[far[filled]] <= 0:
                    break
                centers[c] = x[far[filled]]
                filled += 1
            if filled:
                reseeded = True
                continue
        sums = np.empty((k, q))
        for d in range(q):
            sums[:, d] = np.bincount(labels, weights=x[:, d], minlength=k)
        nonzero = np.maximum(counts, 1)
        new_centers = sums / nonzero[:, None]
        keep = counts == 0
        if keep.any():
            new_centers[keep] = centers[keep]
        movement = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if movement <= tol:
            break
    d2 = _pairwise_sq_dist(x, centers, x_sq)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(n), labels].sum())
    return _LloydResult(labels, centers, inertia, n_iter, init_indices)


def _windows_of(universe) -> np.ndarray:
    x = np.asarray(getattr(universe, "windows", universe), dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a universe or a 2-d point matrix")
    return x


def kmeans_pp(
    universe,
    n_clusters: int,
    seed: int = 0,
    max_iter: int = 300,
    tol: float = 1e-6,
    restarts: int = 1,
) -> ClusterAssignment:
    """K-means with D^2-weighted seeding and Lloyd refinement.

    Deterministic for a given seed. With restarts > 1 the run with the
    lowest final inertia wins; restart r uses an independent substream of
    the seed.

    Parameters
    ----------
    universe : SubsequenceUniverse or ndarray
        Points to cluster; a universe contributes its window matrix.
    n_clusters : int
        Number of clusters, between 1 and the number of points.
    """
    x = _windows_of(universe)
    n = x.shape[0]
    if not 1 <= n_clusters <= n:
        raise ValueError(f"n_clusters must lie in [1, {n}], got {n_clusters}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be positive, got {max_iter}")
    if tol < 0:
        raise ValueError(f"tol must be nonnegative, got {tol}")
    if restarts < 1:
        raise ValueError(f"restarts must be positive, got {restarts}")
    seq = np.random.SeedSequence(seed)
    best: _LloydResult | None = None
    for child in seq.spawn(restarts):
        result = _lloyd(x, n_clusters, np.random.default_rng(child), max_iter, tol)
        if best is None or result.inertia < best.inertia:
            best = result
    return ClusterAssignment(labels=best.labels, n_clusters=n_clusters, inertia=best.inertia)


def normalized_laplacian(weights: np.ndarray) -> np.ndarray:
    """Symmetric normalised Laplacian I - D^(-1/2) W D^(-1/2) of a dense
    weight matrix. Rows with zero degree are rejected."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("weight matrix must be square")
    degrees = w.sum(axis=1)
    if (degrees <= 0).any():
        raise ValueError("graph has an isolated vertex; Laplacian undefined")
    inv_sqrt = 1.0 / np.sqrt(degrees)
    lap = -(w * inv_sqrt[:, None] * inv_sqrt[None, :])
    np.fill_diagonal(lap, lap.diagonal() + 1.0)
    return (lap + lap.T) / 2.0


def spectral_embedding(graph, n_clusters: int, allow_isolated: bool = False) -> np.ndarray:
    """Rows of the spectral embedding: the n_clusters eigenvectors of the
    normalised Laplacian with smallest eigenvalues, row-normalised.

    Isolated vertices make the Laplacian undefined; with allow_isolated
    they receive a unit self-loop instead of raising. Rows that embed to
    the zero vector are left unnormalised.
    """
    n = graph.size
    if not 1 <= n_clusters <= n:
        raise ValueError(f"n_clusters must lie in [1, {n}], got {n_clusters}")
    if n <= _DENSE_EIGH_CUTOFF:
        w = graph.to_dense()
        degrees = w.sum(axis=1)
        isolated = degrees <= 0
        if isolated.any():
            if not allow_isolated:
                raise ValueError(
                    f"{int(isolated.sum())} isolated vertices; enable allow_isolated "
                    "to give them unit self-loops"
                )
            idx = np.flatnonzero(isolated)
            w[idx, idx] = 1.0
        lap = normalized_laplacian(w)
        try:
            _, vectors = scipy.linalg.eigh(lap, subset_by_index=[0, n_clusters - 1])
        except np.linalg.LinAlgError:
            # The range-selecting LAPACK driver can fail on heavily
            # degenerate spectra; the full decomposition never does.
            _, vectors = scipy.linalg.eigh(lap)
            vectors = vectors[:, :n_clusters]
    else:
        w = scipy.sparse.csr_matrix(
            (graph.weights, (graph.rows, graph.cols)), shape=(n, n)
        )
        degrees = np.asarray(w.sum(axis=1)).ravel()
        isolated = degrees <= 0
        if isolated.any():
            if not allow_isolated:
                raise ValueError(
                    f"{int(isolated.sum())} isolated vertices; enable allow_isolated "
                    "to give them unit self-loops"
                )
            idx = np.flatnonzero(isolated)
            w = w + scipy.sparse.csr_matrix(
                (np.ones(idx.size), (idx, idx)), shape=(n, n)
            )
            degrees = np.asarray(w.sum(axis=1)).ravel()
        inv_sqrt = scipy.sparse.diags(1.0 / np.sqrt(degrees))
        lap = scipy.sparse.identity(n) - inv_sqrt @ w @ inv_sqrt
        _, vectors = scipy.sparse.linalg.eigsh(lap, k=n_clusters, which="SA")
    norms = np.sqrt((vectors * vectors).sum(axis=1, keepdims=True))
    return np.divide(vectors, norms, out=vectors, where=norms > 0)


def spectral(
    graph,
    n_clusters: int,
    seed: int = 0,
    max_iter: int = 300,
    tol: float = 1e-6,
    restarts: int = 1,
    allow_isolated: bool = False,
) -> ClusterAssignment:
    """Normalised spectral clustering of a similarity graph.

    Embeds vertices with the bottom eigenvectors of the symmetric
    normalised Laplacian, row-normalises, and clusters the embedded rows
    with the same K-means used elsewhere.
    """
    embedding = spectral_embedding(graph, n_clusters, allow_isolated=allow_isolated)
    km = kmeans_pp(
        embedding,
        n_clusters,
        seed=seed,
        max_iter=max_iter,
        tol=tol,
        restarts=restarts,
    )
    return ClusterAssignment(labels=km.labels, n_clusters=n_clusters, inertia=None)
