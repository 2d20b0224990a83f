"""Loading raw panels from CSV and cleaning them for detection.

Raw tables use exact 0.0 as the missing-data marker, following the data
vendors' convention. The equity pipeline consumes returns; the futures
pipeline consumes prices and forms log returns after filling gaps. Both
end by subtracting the market series and winsorizing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .core import DataError, TimeSeriesPanel, excess_returns, log_returns, winsorize


@dataclass(frozen=True)
class RawTable:
    """A rectangular id-by-date table as loaded, zeros meaning missing."""

    ids: tuple[str, ...]
    dates: tuple
    values: np.ndarray

    def __init__(self, ids, dates, values):
        object.__setattr__(self, "ids", tuple(str(i) for i in ids))
        object.__setattr__(self, "dates", tuple(dates))
        values = np.asarray(values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2 or values.shape != (len(self.ids), len(self.dates)):
            raise DataError(
                f"table of {len(self.ids)} ids x {len(self.dates)} dates does not "
                f"match values of shape {values.shape}"
            )
        if len(set(self.ids)) != len(self.ids):
            raise DataError("duplicate series ids in table")
        if not np.isfinite(values).all():
            raise DataError("table contains non-finite cells; encode missing data as 0")


@dataclass(frozen=True)
class PreprocessResult:
    """A cleaned panel plus a log of everything the filters removed."""

    panel: TimeSeriesPanel
    dropped_days: list[dict]
    dropped_assets: list[dict]


def _parse_dates(labels) -> np.ndarray:
    try:
        return pd.to_datetime(pd.Series(labels), format="mixed").to_numpy()
    except (ValueError, TypeError):
        pass
    try:
        return pd.Series(labels).astype(np.float64).to_numpy()
    except (ValueError, TypeError):
        raise DataError(f"cannot order date labels such as {labels[0]!r}") from None


def _check_date_order(labels) -> None:
    parsed = _parse_dates(list(labels))
    if len(parsed) > 1 and not (parsed[1:] > parsed[:-1]).all():
        raise DataError("date labels must be strictly increasing")


def load_csv(path, layout: str = "wide") -> RawTable:
    """Load a panel CSV in wide (dates x ids) or long (date,id,value) layout.

    Wide files carry dates in the first column and one series per further
    column. Long files need columns named date, id and value, with a
    complete date-by-id grid listed in date order. Missing observations
    must already be encoded as 0.
    """
    if layout not in ("wide", "long"):
        raise ValueError(f"layout must be 'wide' or 'long', got {layout!r}")
    try:
        with open(path, newline="") as fh:
            header = next(csv.reader(fh), None)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if header is None:
        raise DataError(f"{path} is empty")
    try:
        frame = pd.read_csv(path)
    except Exception as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc
    if layout == "wide":
        if len(header) < 2:
            raise DataError("wide layout needs a date column plus at least one series")
        ids = header[1:]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate series ids in header")
        dates = frame.iloc[:, 0].tolist()
        if len(set(map(str, dates))) != len(dates):
            raise DataError("duplicate dates in table")
        _check_date_order(dates)
        body = frame.iloc[:, 1:]
        try:
            values = body.to_numpy(dtype=np.float64, na_value=np.nan).T
        except (ValueError, TypeError) as exc:
            raise DataError(f"non-numeric cells: {exc}") from exc
        if not np.isfinite(values).all():
            raise DataError("non-numeric or missing cells; encode missing data as 0")
        return RawTable(ids=ids, dates=dates, values=values)
    lower = {c.lower(): c for c in frame.columns}
    missing = {"date", "id", "value"} - set(lower)
    if missing:
        raise DataError(f"long layout needs date, id and value columns; missing {sorted(missing)}")
    frame = frame.rename(columns={lower[k]: k for k in ("date", "id", "value")})
    if frame.duplicated(subset=["date", "id"]).any():
        raise DataError("duplicate (date, id) keys in long table")
    dates = list(dict.fromkeys(frame["date"].tolist()))
    ids = list(dict.fromkeys(frame["id"].astype(str).tolist()))
    _check_date_order(dates)
    if len(frame) != len(dates) * len(ids):
        raise DataError("long table must cover the full date-by-id grid")
    values = np.full((len(ids), len(dates)), np.nan)
    date_pos = {d: k for k, d in enumerate(dates)}
    id_pos = {i: k for k, i in enumerate(ids)}
    rows = frame["id"].astype(str).map(id_pos).to_numpy()
    cols = frame["date"].map(date_pos).to_numpy()
    try:
        cell = frame["value"].astype(np.float64).to_numpy()
    except (ValueError, TypeError) as exc:
        raise DataError(f"non-numeric value cells: {exc}") from exc
    values[rows, cols] = cell
    if not np.isfinite(values).all():
        raise DataError("non-numeric or missing cells; encode missing data as 0")
    return RawTable(ids=ids, dates=dates, values=values)


def to_panel(raw: RawTable) -> TimeSeriesPanel:
    """Interpret a raw table directly as a clean panel, zeros included."""
    return TimeSeriesPanel(ids=raw.ids, times=raw.dates, values=raw.values)


def _split_market(raw: RawTable, market_id: str) -> tuple[np.ndarray, np.ndarray, list[str]]:
    if market_id not in raw.ids:
        raise ValueError(f"market id {market_id!r} not found in table")
    market_row = raw.ids.index(market_id)
    asset_rows = [i for i in range(len(raw.ids)) if i != market_row]
    if not asset_rows:
        raise ValueError("table holds only the market series")
    assets = raw.values[asset_rows]
    market = raw.values[market_row]
    return assets, market, [raw.ids[i] for i in asset_rows]


def _drop_days(
    assets: np.ndarray, dates, day_zero_frac: float, what: str
) -> tuple[np.ndarray, list, list[dict]]:
    zero_frac = (assets == 0.0).mean(axis=0)
    keep = zero_frac <= day_zero_frac
    dropped = [
        {
            "date": str(dates[k]),
            "rule": f"more than {day_zero_frac:.0%} of series have zero {what}",
            "zero_fraction": float(zero_frac[k]),
        }
        for k in np.flatnonzero(~keep)
    ]
    kept_dates = [d for d, ok in zip(dates, keep) if ok]
    return keep, kept_dates, dropped


def _fill_zeros(values: np.ndarray) -> np.ndarray:
    """Forward-fill zeros from the last nonzero, then backward-fill the
    leading ones. Rows with no nonzero entry at all cannot be filled."""
    if (values == 0.0).all(axis=1).any():
        raise DataError("a series is entirely zero and cannot be filled")
    n, t = values.shape
    cols = np.arange(t)
    nonzero = values != 0.0
    last_nz = np.maximum.accumulate(np.where(nonzero, cols, -1), axis=1)
    filled = values[np.arange(n)[:, None], np.maximum(last_nz, 0)]
    # After the forward pass only leading zeros remain; they all take the
    # first nonzero value of their row.
    leading = last_nz < 0
    first_value = values[np.arange(n), nonzero.argmax(axis=1)]
    filled[leading] = np.broadcast_to(first_value[:, None], (n, t))[leading]
    return filled


def preprocess_equity(
    raw: RawTable,
    market_id: str,
    day_zero_frac: float = 0.10,
    asset_zero_frac: float = 0.50,
    winsor_bound: float = 0.15,
) -> PreprocessResult:
    """Clean a panel of daily returns and express it in excess of the market.

    Days where more than day_zero_frac of the assets show an exact zero
    return are dropped first; assets that are zero on more than
    asset_zero_frac of the surviving days are dropped next. The market
    series never counts toward, and is never subject to, either filter.
    Survivors get the market subtracted and are winsorized symmetrically.
    """
    assets, market, asset_ids = _split_market(raw, market_id)
    keep_days, kept_dates, dropped_days = _drop_days(
        assets, raw.dates, day_zero_frac, "returns"
    )
    assets = assets[:, keep_days]
    market = market[keep_days]
    if assets.shape[1] == 0:
        raise DataError("every day was dropped by the zero-return filter")
    asset_zero = (assets == 0.0).mean(axis=1)
    keep_assets = asset_zero <= asset_zero_frac
    dropped_assets = [
        {
            "id": asset_ids[k],
            "rule": f"zero returns on more than {asset_zero_frac:.0%} of days",
            "zero_fraction": float(asset_zero[k]),
        }
        for k in np.flatnonzero(~keep_assets)
    ]
    if not keep_assets.any():
        raise DataError("every asset was dropped by the zero-return filter")
    panel = TimeSeriesPanel(
        ids=[i for i, ok in zip(asset_ids, keep_assets) if ok],
        times=kept_dates,
        values=assets[keep_assets],
    )
    panel = excess_returns(panel, market)
    panel = panel.with_values(winsorize(panel.values, winsor_bound))
    return PreprocessResult(panel=panel, dropped_days=dropped_days, dropped_assets=dropped_assets)


def preprocess_futures(
    raw: RawTable,
    market_id: str,
    day_zero_frac: float = 0.10,
    max_zero_days: int = 160,
    winsor_bound: float = 0.15,
) -> PreprocessResult:
    """Clean a panel of daily prices into excess log returns.

    Days where more than day_zero_frac of the futures show a zero price are
    dropped, then futures with more than max_zero_days zero prices. The
    remaining zeros are forward- then backward-filled before log returns,
    market subtraction and winsorization. The market series is filled and
    differenced the same way but is exempt from both filters.
    """
    assets, market, asset_ids = _split_market(raw, market_id)
    keep_days, kept_dates, dropped_days = _drop_days(
        assets, raw.dates, day_zero_frac, "prices"
    )
    assets = assets[:, keep_days]
    market = market[keep_days]
    if assets.shape[1] < 2:
        raise DataError("fewer than two days survive the zero-price filter")
    zero_days = (assets == 0.0).sum(axis=1)
    keep_assets = zero_days <= max_zero_days
    dropped_assets = [
        {
            "id": asset_ids[k],
            "rule": f"zero price on more than {max_zero_days} days",
            "zero_days": int(zero_days[k]),
        }
        for k in np.flatnonzero(~keep_assets)
    ]
    if not keep_assets.any():
        raise DataError("every future was dropped by the zero-price filter")
    prices = _fill_zeros(assets[keep_assets])
    market = _fill_zeros(market[np.newaxis, :])[0]
    returns = log_returns(prices)
    market_returns = log_returns(market)
    panel = TimeSeriesPanel(
        ids=[i for i, ok in zip(asset_ids, keep_assets) if ok],
        times=kept_dates[1:],
        values=returns,
    )
    panel = excess_returns(panel, market_returns)
    panel = panel.with_values(winsorize(panel.values, winsor_bound))
    return PreprocessResult(panel=panel, dropped_days=dropped_days, dropped_assets=dropped_assets)
