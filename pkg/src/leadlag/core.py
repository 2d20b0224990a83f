"""Panel and subsequence containers plus elementary return transforms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    """Raised when an input file or table violates the expected format."""


def _as_readonly_float(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeriesPanel:
    """A rectangular panel of n aligned series observed on a shared time axis.

    Parameters
    ----------
    ids : sequence of str
        Unique series identifiers, one per row of ``values``.
    times : sequence
        Time labels, one per column of ``values``. Labels are opaque; only
        their count and order matter here.
    values : array-like, shape (n, T)
        Observations. Must be finite.
    """

    ids: tuple[str, ...]
    times: tuple
    values: np.ndarray

    def __init__(self, ids, times, values):
        object.__setattr__(self, "ids", tuple(str(i) for i in ids))
        object.__setattr__(self, "times", tuple(times))
        object.__setattr__(self, "values", _as_readonly_float(values))
        self._validate()

    def _validate(self) -> None:
        if self.values.ndim != 2:
            raise ValueError(f"values must be 2-dimensional, got shape {self.values.shape}")
        n, t = self.values.shape
        if n == 0 or t == 0:
            raise ValueError("panel must contain at least one series and one observation")
        if len(self.ids) != n:
            raise ValueError(f"{len(self.ids)} ids for {n} value rows")
        if len(self.times) != t:
            raise ValueError(f"{len(self.times)} time labels for {t} value columns")
        if len(set(self.ids)) != n:
            raise ValueError("series ids must be unique")
        if not np.isfinite(self.values).all():
            raise ValueError("panel values must be finite")

    @property
    def n_series(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    def with_values(self, values) -> "TimeSeriesPanel":
        """Return a panel with the same axes but new values."""
        return TimeSeriesPanel(self.ids, self.times, values)


@dataclass(frozen=True)
class SubsequenceUniverse:
    """All length-q windows extracted from a panel, stacked into one matrix.

    Row r of ``windows`` is the window of series ``series_index[r]`` that
    starts at ``start_index[r]``. Windows are ordered by series, then by
    start, so every series contributes the same number of consecutive rows.
    """

    windows: np.ndarray
    series_index: np.ndarray
    start_index: np.ndarray
    q: int
    s: int
    n_series: int
    windows_per_series: int = field(default=0)

    def __post_init__(self):
        if self.windows_per_series == 0:
            object.__setattr__(self, "windows_per_series", self.windows.shape[0] // self.n_series)

    @property
    def n_windows(self) -> int:
        return self.windows.shape[0]


def extract_subsequences(panel: TimeSeriesPanel, q: int, s: int) -> SubsequenceUniverse:
    """Slide a length-q window with shift s over every series of the panel.

    Each series of length T yields h = (T - q) // s + 1 windows; a trailing
    remainder shorter than the shift is dropped. Windows copy their data, so
    the universe does not alias the panel.
    """
    if q < 1:
        raise ValueError(f"window length q must be a positive integer, got {q}")
    if s < 1:
        raise ValueError(f"window shift s must be a positive integer, got {s}")
    t = panel.n_times
    if q > t:
        raise ValueError(f"window length q={q} exceeds series length T={t}")
    view = np.lib.stride_tricks.sliding_window_view(panel.values, q, axis=1)
    strided = view[:, ::s, :]
    n, h, _ = strided.shape
    windows = np.ascontiguousarray(strided.reshape(n * h, q))
    series_index = np.repeat(np.arange(n), h)
    start_index = np.tile(np.arange(h) * s, n)
    return SubsequenceUniverse(
        windows=windows,
        series_index=series_index,
        start_index=start_index,
        q=q,
        s=s,
        n_series=n,
        windows_per_series=h,
    )


def standardize_windows(universe: SubsequenceUniverse) -> SubsequenceUniverse:
    """Return a universe whose rows are centred and scaled to unit variance.

    Rows with zero variance cannot be scaled and are mapped to all zeros.
    """
    mean = universe.windows.mean(axis=1, keepdims=True)
    std = universe.windows.std(axis=1, keepdims=True)
    centred = universe.windows - mean
    out = np.divide(centred, std, out=np.zeros_like(centred), where=std > 0)
    return SubsequenceUniverse(
        windows=out,
        series_index=universe.series_index,
        start_index=universe.start_index,
        q=universe.q,
        s=universe.s,
        n_series=universe.n_series,
        windows_per_series=universe.windows_per_series,
    )


def winsorize(x, bound: float) -> np.ndarray:
    """Clip every entry of x into [-bound, bound]."""
    if not bound > 0:
        raise ValueError(f"winsorization bound must be positive, got {bound}")
    return np.clip(np.asarray(x, dtype=np.float64), -bound, bound)


def excess_returns(panel: TimeSeriesPanel, market: np.ndarray) -> TimeSeriesPanel:
    """Subtract a market return series from every row of the panel."""
    market = np.asarray(market, dtype=np.float64)
    if market.shape != (panel.n_times,):
        raise ValueError(
            f"market series of length {market.shape} does not match panel with T={panel.n_times}"
        )
    if not np.isfinite(market).all():
        raise ValueError("market series must be finite")
    return panel.with_values(panel.values - market[np.newaxis, :])


def log_returns(prices: np.ndarray) -> np.ndarray:
    """Logarithmic returns along the last axis: log(p[t+1] / p[t]).

    Prices must be strictly positive; the result is one observation shorter
    than the input.
    """
    prices = np.asarray(prices, dtype=np.float64)
    if prices.shape[-1] < 2:
        raise ValueError("need at least two prices to form a return")
    if not (prices > 0).all():
        raise ValueError("log returns require strictly positive prices")
    logp = np.log(prices)
    return np.diff(logp, axis=-1)
