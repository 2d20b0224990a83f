"""Momentum trading on detected lead-lag structure, with performance metrics.

Each day the trailing window of the panel is re-clustered, series are ranked
by the row sums of the lag matrix, and the sign of an EWMA of the leaders'
recent mean return is traded on a basket held for a fixed horizon. PnL is
rescaled to a target annualised volatility before metrics are computed.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.stats

from .core import TimeSeriesPanel
from .detection import DetectConfig, METHODS, ccf_lead_lag_matrix, detect, rowsum_rank

TRADING_DAYS = 252
STRATEGY_METHODS = ("CCF",) + METHODS


@dataclass(frozen=True)
class StrategyConfig:
    """Parameters of the rolling lead-lag momentum strategy.

    window_length is the trailing span handed to the detector each day,
    lookback the EWMA span of the signal, horizon the holding offset. The
    leader_fraction splits the ranking into a leader basket (signal) and a
    lagger basket (traded alongside leaders for comparison).
    """

    method: str = "KM_Mod"
    window_length: int = 21
    q: int = 10
    s: int = 1
    n_clusters: int = 11
    theta: int = 6
    leader_fraction: float = 0.75
    lookback: int = 7
    horizon: int = 7
    seed: int = 0
    target_vol: float = 0.15
    k_nn: int | None = None
    sigma_kernel: float | None = None
    standardize: bool = False
    max_iter: int = 300
    tol: float = 1e-6
    restarts: int = 1
    ccf_max_lag: int = 5

    def __post_init__(self):
        if self.method not in STRATEGY_METHODS:
            raise ValueError(f"method must be one of {STRATEGY_METHODS}, got {self.method!r}")
        if not 1 <= self.q < self.window_length:
            raise ValueError("need 1 <= q < window_length")
        if not 0.0 < self.leader_fraction < 1.0:
            raise ValueError(f"leader_fraction must lie in (0, 1), got {self.leader_fraction}")
        for name in ("lookback", "horizon", "theta", "ccf_max_lag"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not self.target_vol > 0:
            raise ValueError(f"target_vol must be positive, got {self.target_vol}")

    def detect_config(self, seed: int) -> DetectConfig:
        return DetectConfig(
            q=self.q,
            method=self.method if self.method != "CCF" else "KM_Mod",
            s=self.s,
            n_clusters=self.n_clusters,
            theta=self.theta,
            seed=seed,
            k_nn=self.k_nn,
            sigma_kernel=self.sigma_kernel,
            standardize=self.standardize,
            max_iter=self.max_iter,
            tol=self.tol,
            restarts=self.restarts,
        )


@dataclass(frozen=True)
class PnLSeries:
    """Daily strategy returns, raw and rescaled to the target volatility."""

    dates: tuple
    raw: np.ndarray
    rescaled: np.ndarray
    target_vol: float


@dataclass(frozen=True)
class BacktestReport:
    """Annualised performance metrics of a rescaled PnL series.

    Ratios that lose their denominator (no drawdown, no losing days, no
    downside) are flagged as NaN rather than raising.
    """

    e_returns: float
    volatility: float
    downside_deviation: float
    max_drawdown: float
    sortino: float
    calmar: float
    hit_rate: float
    avg_profit_over_avg_loss: float
    pnl_per_trade: float
    sharpe: float
    sharpe_stat: float
    sharpe_p_value: float
    n_days: int


def ewma(x, lookback: int) -> float:
    """Exponentially weighted average of the last lookback + 1 observations.

    The smoothing factor is 2 / (lookback + 1) and weights are renormalised
    over the observed points, so a constant series returns that constant
    and lookback = 1 returns the latest observation.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("ewma needs a nonempty vector")
    if lookback < 1:
        raise ValueError(f"lookback must be a positive integer, got {lookback}")
    tail = x[-(lookback + 1) :]
    alpha = 2.0 / (lookback + 1)
    weights = (1.0 - alpha) ** np.arange(tail.size - 1, -1, -1)
    return float((weights * tail).sum() / weights.sum())


def _seed_at(master: int, t: int) -> int:
    return int(np.random.SeedSequence((master, t)).generate_state(1, np.uint64)[0])


def rolling_orders(
    panel: TimeSeriesPanel, cfg: StrategyConfig, t_first: int, t_last: int
) -> np.ndarray:
    """Ranked series orders (best leader first) for each day in [t_first, t_last].

    Day t ranks the trailing window_length days ending at t, reseeding the
    clustering from (seed, t) so runs are reproducible and independent of
    which other days are evaluated.
    """
    values = panel.values
    l = cfg.window_length
    orders = np.empty((t_last - t_first + 1, panel.n_series), dtype=np.int64)
    index_of = {sid: i for i, sid in enumerate(panel.ids)}
    base_det = cfg.detect_config(seed=0)
    for t in range(t_first, t_last + 1):
        window = TimeSeriesPanel(
            ids=panel.ids,
            times=panel.times[t - l + 1 : t + 1],
            values=values[:, t - l + 1 : t + 1],
        )
        if cfg.method == "CCF":
            gamma = ccf_lead_lag_matrix(window, cfg.ccf_max_lag)
        else:
            gamma = detect(window, dataclasses.replace(base_det, seed=_seed_at(cfg.seed, t)))
        ranking = rowsum_rank(gamma)
        orders[t - t_first] = [index_of[sid] for sid, _, _ in ranking]
    return orders


def _basket_split(n: int, leader_fraction: float) -> int:
    n_lead = int(math.floor(leader_fraction * n + 0.5))
    if not 1 <= n_lead <= n - 1:
        raise ValueError(
            f"leader_fraction {leader_fraction} leaves a degenerate basket for {n} series"
        )
    return n_lead


def run_strategy(
    panel: TimeSeriesPanel,
    cfg: StrategyConfig,
    precomputed_orders: np.ndarray | None = None,
) -> tuple[PnLSeries, PnLSeries]:
    """Trade the lagger and leader baskets; returns (laggers, leaders).

    For each day t from the first full window to horizon days before the
    end: detect, rank, split into leaders and laggers, form the position as
    the sign of the EWMA of the leaders' past cross-sectional mean return,
    and realise position times basket mean return at t + horizon.

    precomputed_orders may carry the output of rolling_orders for at least
    this config's day range, letting grid sweeps share one detection pass.
    """
    n, t_len = panel.values.shape
    l = cfg.window_length
    delta = cfg.horizon
    t_first = l - 1
    t_last = t_len - 1 - delta
    if t_last < t_first:
        raise ValueError(
            f"panel of length {t_len} too short for window {l} and horizon {delta}"
        )
    n_lead = _basket_split(n, cfg.leader_fraction)
    if precomputed_orders is None:
        orders = rolling_orders(panel, cfg, t_first, t_last)
    else:
        orders = precomputed_orders
        if orders.shape[0] < t_last - t_first + 1 or orders.shape[1] != n:
            raise ValueError("precomputed_orders do not cover this configuration")
    values = panel.values
    steps = t_last - t_first + 1
    raw_lag = np.empty(steps)
    raw_lead = np.empty(steps)
    for step in range(steps):
        t = t_first + step
        leaders = orders[step, :n_lead]
        laggers = orders[step, n_lead:]
        recent = values[leaders, max(0, t - cfg.lookback) : t + 1].mean(axis=0)
        position = float(np.sign(ewma(recent, cfg.lookback)))
        raw_lag[step] = position * values[laggers, t + delta].mean()
        raw_lead[step] = position * values[leaders, t + delta].mean()
    dates = tuple(panel.times[t_first + delta : t_last + delta + 1])
    lag_series = PnLSeries(
        dates=dates,
        raw=raw_lag,
        rescaled=rescale_pnl(raw_lag, cfg.target_vol),
        target_vol=cfg.target_vol,
    )
    lead_series = PnLSeries(
        dates=dates,
        raw=raw_lead,
        rescaled=rescale_pnl(raw_lead, cfg.target_vol),
        target_vol=cfg.target_vol,
    )
    return lag_series, lead_series


def rescale_pnl(raw: np.ndarray, target_vol: float) -> np.ndarray:
    """Scale a PnL series so its annualised sample volatility hits target_vol."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 1 or raw.size < 2:
        raise ValueError("rescaling needs at least two PnL observations")
    if not target_vol > 0:
        raise ValueError(f"target_vol must be positive, got {target_vol}")
    std = raw.std(ddof=1)
    if std == 0.0:
        raise ValueError("PnL series has zero variance; cannot rescale")
    return raw * (target_vol / (std * np.sqrt(TRADING_DAYS)))


def performance_report(pnl: PnLSeries) -> BacktestReport:
    """Annualised metrics of the rescaled series; 252 trading days a year."""
    r = pnl.rescaled
    t_len = r.size
    mean = r.mean()
    std = r.std(ddof=1)
    e_returns = mean * TRADING_DAYS
    volatility = std * np.sqrt(TRADING_DAYS)
    downside = np.sqrt(TRADING_DAYS) * np.sqrt(np.mean(np.minimum(r, 0.0) ** 2))
    cum = np.concatenate(([0.0], np.cumsum(r)))
    drawdown = cum - np.maximum.accumulate(cum)
    max_drawdown = float(drawdown.min())
    sortino = e_returns / downside if downside > 0 else float("nan")
    calmar = e_returns / abs(max_drawdown) if max_drawdown < 0 else float("nan")
    hit_rate = float(np.mean(r > 0))
    profits = r[r > 0]
    losses = r[r < 0]
    if profits.size and losses.size:
        ratio = float(profits.mean() / abs(losses.mean()))
    else:
        ratio = float("nan")
    stat, p_value = sharpe_significance(r)
    return BacktestReport(
        e_returns=float(e_returns),
        volatility=float(volatility),
        downside_deviation=float(downside),
        max_drawdown=max_drawdown,
        sortino=float(sortino),
        calmar=float(calmar),
        hit_rate=hit_rate,
        avg_profit_over_avg_loss=ratio,
        pnl_per_trade=float(mean * 1e4),
        sharpe=float(mean / std * np.sqrt(TRADING_DAYS)),
        sharpe_stat=float(stat),
        sharpe_p_value=float(p_value),
        n_days=int(t_len),
    )


def significance_from_moments(
    sr: float, n_obs: int, skewness: float, kurtosis: float
) -> tuple[float, float]:
    """Moment-adjusted test of a daily Sharpe ratio against zero.

    kurtosis is the raw (non-excess) fourth moment ratio, 3 for a normal.
    The statistic is compared to a standard normal; the p-value is
    two-sided.
    """
    if n_obs < 2:
        raise ValueError("need at least two observations")
    denom_sq = 1.0 - skewness * sr + (kurtosis - 1.0) / 4.0 * sr * sr
    if denom_sq <= 0.0:
        raise ValueError(
            f"moment adjustment 1 - skew*SR + (kurt-1)/4*SR^2 = {denom_sq:.6g} "
            "is not positive; statistic undefined"
        )
    stat = sr * np.sqrt(n_obs - 1) / np.sqrt(denom_sq)
    p_value = 2.0 * scipy.stats.norm.sf(abs(stat))
    return float(stat), float(p_value)


def sharpe_significance(values) -> tuple[float, float]:
    """Moment-adjusted significance of the daily (non-annualised) Sharpe."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size < 4:
        raise ValueError("significance test needs at least four observations")
    std = values.std(ddof=1)
    if std == 0.0:
        raise ValueError("PnL series has zero variance; Sharpe undefined")
    sr = values.mean() / std
    skewness = float(scipy.stats.skew(values))
    kurtosis = float(scipy.stats.kurtosis(values, fisher=False))
    return significance_from_moments(sr, values.size, skewness, kurtosis)


def sweep_strategies(
    panel: TimeSeriesPanel,
    base: StrategyConfig,
    lookbacks,
    horizons,
    fractions,
    methods,
) -> list[dict]:
    """Metrics for every (method, lookback, horizon, fraction) combination.

    One rolling detection pass per method is shared across the grid, since
    day-t rankings depend only on the detector settings. Each combination
    yields two rows, one per basket.
    """
    lookbacks = list(lookbacks)
    horizons = list(horizons)
    fractions = list(fractions)
    methods = list(methods)
    if min(horizons) < 1:
        raise ValueError("horizons must be positive")
    t_first = base.window_length - 1
    t_last_max = panel.n_times - 1 - min(horizons)
    rows: list[dict] = []
    for method in methods:
        method_cfg = dataclasses.replace(base, method=method)
        orders = rolling_orders(panel, method_cfg, t_first, t_last_max)
        for lookback, horizon, fraction in product(lookbacks, horizons, fractions):
            cfg = dataclasses.replace(
                method_cfg, lookback=lookback, horizon=horizon, leader_fraction=fraction
            )
            steps = (panel.n_times - 1 - horizon) - t_first + 1
            laggers, leaders = run_strategy(panel, cfg, precomputed_orders=orders[:steps])
            for basket, series in (("laggers", laggers), ("leaders", leaders)):
                report = performance_report(series)
                row = {
                    "method": method,
                    "lookback": lookback,
                    "horizon": horizon,
                    "leader_fraction": fraction,
                    "basket": basket,
                }
                row.update(
                    {k: v for k, v in dataclasses.asdict(report).items() if k != "n_days"}
                )
                row["n_days"] = report.n_days
                rows.append(row)
    return rows


def write_pnl_csv(pnl: PnLSeries, path) -> None:
    """Write dates, raw and rescaled PnL, and the cumulative rescaled sum."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "raw", "rescaled", "cumulative"])
        cum = 0.0
        for date, raw, scaled in zip(pnl.dates, pnl.raw, pnl.rescaled):
            cum += float(scaled)
            writer.writerow([date, repr(float(raw)), repr(float(scaled)), repr(cum)])


def _json_safe(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def write_report_json(report: BacktestReport, config: dict, path) -> None:
    """Write the metric set and the producing config as one JSON document."""
    metrics = {k: _json_safe(v) for k, v in dataclasses.asdict(report).items()}
    payload = {"config": config, "metrics": metrics}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
