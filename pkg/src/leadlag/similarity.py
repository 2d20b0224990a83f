"""Similarity measures between windows and the sparse graph built from them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SubsequenceUniverse

# Edge weights are clamped away from zero so that degree vectors stay
# positive even when the kernel underflows for distant windows.
_WEIGHT_FLOOR = 1e-300


def pearson(x, y) -> float:
    """Pearson correlation of two equal-length series.

    Raises on constant input, where the coefficient is undefined.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two equal-length vectors")
    if x.size < 2:
        raise ValueError("pearson needs at least two observations")
    xc = x - x.mean()
    yc = y - y.mean()
    vx = float(xc @ xc)
    vy = float(yc @ yc)
    if vx == 0.0 or vy == 0.0:
        raise ValueError("correlation undefined for a constant series")
    r = float(xc @ yc) / np.sqrt(vx * vy)
    return float(np.clip(r, -1.0, 1.0))


def distance_correlation(x, y) -> float:
    """Biased sample distance correlation of two equal-length series.

    Captures nonlinear association: it is zero for independent samples in
    the limit and positive whenever dependence of any form is present.
    Constant inputs have zero distance variance and score 0 by convention.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("distance correlation needs two equal-length vectors")
    if x.size < 2:
        raise ValueError("distance correlation needs at least two observations")

    def centred(v):
        d = np.abs(v[:, None] - v[None, :])
        return d - d.mean(axis=0, keepdims=True) - d.mean(axis=1, keepdims=True) + d.mean()

    a = centred(x)
    b = centred(y)
    dcov2 = max(float((a * b).mean()), 0.0)
    dvarx = float((a * a).mean())
    dvary = float((b * b).mean())
    if dvarx == 0.0 or dvary == 0.0:
        return 0.0
    return float(np.clip(np.sqrt(dcov2 / np.sqrt(dvarx * dvary)), 0.0, 1.0))


@dataclass(frozen=True)
class SimilarityGraph:
    """A sparse undirected weighted graph over window indices.

    Edges are stored as parallel arrays listing both orientations of every
    undirected edge. There are no self loops, and weights lie in (0, 1].
    """

    size: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    symmetric: bool = True

    @property
    def n_edges(self) -> int:
        """Number of undirected edges."""
        return self.rows.size // 2

    def to_dense(self) -> np.ndarray:
        w = np.zeros((self.size, self.size))
        w[self.rows, self.cols] = self.weights
        return w


def knn_graph(universe: SubsequenceUniverse, k_nn: int | None = None) -> SimilarityGraph:
    """Symmetrised k-nearest-neighbour graph over the universe windows.

    Each window is linked to its k_nn nearest windows in Euclidean distance
    (ties broken toward the lower row index) and the directed links are
    united, so degrees can exceed k_nn. Edge weights start out at 1; apply
    a kernel to reweight them. Defaults to k_nn = ceil(sqrt(N)).
    """
    n = universe.n_windows
    if n < 2:
        raise ValueError("need at least two windows to build a graph")
    if k_nn is None:
        k_nn = int(np.ceil(np.sqrt(n)))
    if not 1 <= k_nn <= n - 1:
        raise ValueError(f"k_nn must lie in [1, {n - 1}], got {k_nn}")
    x = universe.windows
    sq = (x * x).sum(axis=1)
    d2 = sq[:, None] - 2.0 * (x @ x.T) + sq[None, :]
    np.fill_diagonal(d2, np.inf)
    neighbours = np.argsort(d2, axis=1, kind="stable")[:, :k_nn]
    adj = np.zeros((n, n), dtype=bool)
    np.put_along_axis(adj, neighbours, True, axis=1)
    adj |= adj.T
    rows, cols = np.nonzero(adj)
    return SimilarityGraph(
        size=n,
        rows=rows,
        cols=cols,
        weights=np.ones(rows.size),
        symmetric=True,
    )


def gaussian_kernel(
    graph: SimilarityGraph,
    universe: SubsequenceUniverse,
    sigma_kernel: float | None = None,
) -> SimilarityGraph:
    """Reweight graph edges with exp(-d^2 / (2 sigma^2)) on window distances.

    The default bandwidth is 1/N, which is intentionally tiny for large
    universes: most weights then underflow and are clamped to a common
    floor, leaving an effectively unweighted neighbourhood graph. The
    normalised Laplacian is invariant to that common scale, so clustering
    still behaves; pass an explicit bandwidth to keep real kernel shape.
    """
    n = universe.n_windows
    if graph.size != n:
        raise ValueError(f"graph over {graph.size} vertices does not match {n} windows")
    if sigma_kernel is None:
        sigma_kernel = 1.0 / n
    if not sigma_kernel > 0:
        raise ValueError(f"kernel bandwidth must be positive, got {sigma_kernel}")
    diff = universe.windows[graph.rows] - universe.windows[graph.cols]
    d2 = (diff * diff).sum(axis=1)
    with np.errstate(under="ignore"):
        w = np.exp(-d2 / (2.0 * sigma_kernel**2))
    w = np.maximum(w, _WEIGHT_FLOOR)
    return SimilarityGraph(
        size=graph.size,
        rows=graph.rows,
        cols=graph.cols,
        weights=w,
        symmetric=graph.symmetric,
    )


def similarity_matrix(universe: SubsequenceUniverse, measure: str = "pearson") -> np.ndarray:
    """Dense pairwise similarity between all windows, for inspection.

    measure is "pearson" or "distance". The distance-correlation variant
    costs O(N^2 q^2); intended for small universes only.
    """
    x = universe.windows
    n = x.shape[0]
    if measure == "pearson":
        std = x.std(axis=1)
        if (std == 0).any():
            raise ValueError("correlation undefined for a constant window")
        return np.corrcoef(x)
    if measure == "distance":
        out = np.eye(n)
        for i in range(n):
            for j in range(i + 1, n):
                out[i, j] = out[j, i] = distance_correlation(x[i], x[j])
        return out
    raise ValueError(f"unknown similarity measure: {measure!r}")
