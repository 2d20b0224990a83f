"""Synthetic lagged factor panels and scoring of recovered lag structure.

The generating model assigns each series to exactly one latent factor and
delays it by a per-series lag: X_i[t] = B[i,m] * f_m[t - L[i,m]] + noise.
Recovery is scored against the implied pairwise lag differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TimeSeriesPanel, SubsequenceUniverse

# Per-block lag patterns of the benchmark designs, tiled cyclically when a
# block holds more series than the pattern.
_PRESET_LAGS = {1: (0, 1, 2, 3, 4, 5), 2: (0, 2, 4), 3: (0, 3)}
_PRESET_MAX_LAG = 5


@dataclass(frozen=True)
class FactorDesign:
    """Loadings, lags and factor membership for a lagged factor model.

    Each series i loads on exactly one factor, ``membership[i]``, with
    loading ``B[i, membership[i]]`` and nonnegative integer delay
    ``L[i, membership[i]]``. Off-membership entries of B and L are zero.
    """

    n: int
    k: int
    B: np.ndarray
    L: np.ndarray
    membership: np.ndarray
    max_lag: int

    def __post_init__(self):
        B = np.asarray(self.B, dtype=np.float64)
        L = np.asarray(self.L, dtype=np.int64)
        member = np.asarray(self.membership, dtype=np.int64)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "membership", member)
        if B.shape != (self.n, self.k) or L.shape != (self.n, self.k):
            raise ValueError(f"B and L must have shape ({self.n}, {self.k})")
        if member.shape != (self.n,):
            raise ValueError("membership must assign one factor per series")
        if member.min() < 0 or member.max() >= self.k:
            raise ValueError("membership entries must index a factor")
        if (L < 0).any() or L.max(initial=0) > self.max_lag:
            raise ValueError(f"lags must lie in [0, {self.max_lag}]")
        rows = np.arange(self.n)
        if (B[rows, member] == 0).any():
            raise ValueError("every series needs a nonzero loading on its factor")
        off = B.copy()
        off[rows, member] = 0.0
        if off.any():
            raise ValueError("loadings outside the membership column must be zero")

    def series_lags(self) -> np.ndarray:
        """The effective lag of each series on its own factor."""
        return self.L[np.arange(self.n), self.membership]


@dataclass(frozen=True)
class GroundTruth:
    """True pairwise lag differences and the pairs on which they are defined.

    ``psi[i, j]`` is positive when series j trails series i. ``mask[i, j]``
    is True exactly when both series load on the same factor; psi is zero
    everywhere else.
    """

    psi: np.ndarray
    mask: np.ndarray


def preset_design(k: int, n: int = 6) -> FactorDesign:
    """The benchmark design with k factors over n series.

    Series are split into k equal blocks, one factor per block, with unit
    loadings. Within a block the lag pattern for that k is repeated
    cyclically, so n = 6 reproduces the reference designs and larger n
    scales them block by block.
    """
    if k not in _PRESET_LAGS:
        raise ValueError(f"preset designs exist for k in {sorted(_PRESET_LAGS)}, got {k}")
    if n < k or n % k != 0:
        raise ValueError(f"n={n} must be a positive multiple of k={k}")
    block = n // k
    pattern = _PRESET_LAGS[k]
    membership = np.repeat(np.arange(k), block)
    B = np.zeros((n, k))
    L = np.zeros((n, k), dtype=np.int64)
    rows = np.arange(n)
    B[rows, membership] = 1.0
    L[rows, membership] = [pattern[r % len(pattern)] for r in range(block)] * k
    return FactorDesign(n=n, k=k, B=B, L=L, membership=membership, max_lag=_PRESET_MAX_LAG)


def generate_panel(design: FactorDesign, t_len: int, sigma: float, seed: int) -> TimeSeriesPanel:
    """Draw one synthetic panel of length t_len from the design.

    Factor paths and observation noise are i.i.d. standard normal, noise
    scaled by sigma. Factors are padded by max_lag steps at the front so
    every delayed copy is fully defined. The counter-based generator makes
    draws reproducible for a given seed regardless of call order elsewhere.
    """
    if t_len <= design.max_lag:
        raise ValueError(f"series length {t_len} must exceed the maximum lag {design.max_lag}")
    if sigma < 0:
        raise ValueError(f"noise scale must be nonnegative, got {sigma}")
    rng = np.random.Generator(np.random.Philox(key=seed))
    factors = rng.standard_normal((design.k, t_len + design.max_lag))
    noise = rng.standard_normal((design.n, t_len))
    values = np.empty((design.n, t_len))
    lags = design.series_lags()
    loads = design.B[np.arange(design.n), design.membership]
    for i in range(design.n):
        m = design.membership[i]
        offset = design.max_lag - lags[i]
        values[i] = loads[i] * factors[m, offset : offset + t_len]
    values += sigma * noise
    ids = [f"s{i:02d}" for i in range(design.n)]
    return TimeSeriesPanel(ids=ids, times=range(t_len), values=values)


def ground_truth(design: FactorDesign) -> GroundTruth:
    """Pairwise lag differences implied by the design."""
    lags = design.series_lags()
    same = design.membership[:, None] == design.membership[None, :]
    psi = np.where(same, lags[None, :] - lags[:, None], 0).astype(np.int64)
    return GroundTruth(psi=psi, mask=same)


def true_labels(design: FactorDesign, universe: SubsequenceUniverse) -> np.ndarray:
    """Reference clustering of windows by factor and absolute alignment.

    Two windows belong together exactly when they cover the same stretch of
    the same factor path. A series exposed at lag L shows the factor L steps
    late, so the window starting at z covers the segment anchored at z - L
    and that difference is the alignment key. Labels are consecutive
    integers; their identity carries no meaning.
    """
    if universe.n_series != design.n:
        raise ValueError("universe and design disagree on the number of series")
    member = design.membership[universe.series_index]
    offset = universe.start_index - design.series_lags()[universe.series_index]
    offset -= offset.min()
    key = member * (offset.max() + 1) + offset
    _, labels = np.unique(key, return_inverse=True)
    return labels


def error_matrix(gamma, truth: GroundTruth) -> np.ndarray:
    """Elementwise difference between a recovered lag matrix and the truth."""
    g = np.asarray(getattr(gamma, "gamma", gamma), dtype=np.float64)
    if g.shape != truth.psi.shape:
        raise ValueError(f"lag matrix shape {g.shape} does not match truth {truth.psi.shape}")
    return g - truth.psi


def lag_mse(e: np.ndarray, mask: np.ndarray) -> float:
    """Mean squared error over the masked strictly-upper-triangular pairs.

    Each unordered pair is counted once; the matrix diagonal never
    contributes. An empty selection has no mean and raises.
    """
    e = np.asarray(e, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if e.shape != mask.shape or e.ndim != 2 or e.shape[0] != e.shape[1]:
        raise ValueError("error matrix and mask must be square and congruent")
    sel = np.triu(mask, k=1)
    if not sel.any():
        raise ValueError("mask selects no pairs, MSE undefined")
    return float(np.mean(e[sel] ** 2))


def adjusted_rand_index(a, b) -> float:
    """Chance-corrected pair-counting agreement between two labelings.

    Returns 1.0 for identical partitions, about 0 for independent ones.
    Degenerate comparisons where the expected and maximal index coincide
    (for example both partitions all-singletons) score 1.0.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("labelings must be equal-length vectors")
    if a.size < 2:
        raise ValueError("need at least two items to compare partitions")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ka = ai.max() + 1
    kb = bi.max() + 1
    contingency = np.bincount(ai * kb + bi, minlength=ka * kb).reshape(ka, kb)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_cells = comb2(contingency).sum()
    sum_rows = comb2(contingency.sum(axis=1)).sum()
    sum_cols = comb2(contingency.sum(axis=0)).sum()
    total = comb2(a.size)
    expected = sum_rows * sum_cols / total
    maximal = (sum_rows + sum_cols) / 2.0
    if maximal == expected:
        return 1.0
    return float((sum_cells - expected) / (maximal - expected))
