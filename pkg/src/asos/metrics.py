"""Scalar objectives: price-reproduction error, Bollinger fluctuation,
stabilization fitness, threshold breaches and solution ranking."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ContractError
from .symbolic.operators import LIMIT_RTOL


@dataclass(frozen=True)
class ReproductionFitConfig:
    w1: float = 1.0
    w2: float = 1.0


@dataclass(frozen=True)
class BollingerConfig:
    window: int = 5
    k: float = 2.0

    def __post_init__(self):
        if self.window < 2 or self.k < 0:
            raise ContractError("Bollinger window must be >= 2 and K >= 0")


@dataclass(frozen=True)
class StabilizationConfig:
    lambda1: float = -1.0
    lambda2: float = 1.0


@dataclass
class Bollinger:
    ma: np.ndarray
    sigma: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    b_avg: float


def reproduction_fitness(real, sim, cfg: ReproductionFitConfig = ReproductionFitConfig()) -> float:
    """Weighted mean absolute error plus summed mismatch of relative increments.

    The increment term is a plain sum over consecutive quarters (it is not
    divided by the series length).
    """
    real = np.asarray(real, dtype=float)
    sim = np.asarray(sim, dtype=float)
    if real.shape != sim.shape or real.ndim != 1:
        raise ContractError("series must be 1-d and equally long")
    if real.size < 2:
        raise ContractError("need at least two quarters")
    if np.any(real <= 0):
        raise ContractError("real prices must be strictly positive")
    if np.any(sim[:-1] == 0):
        raise ContractError("simulated price of zero has no relative increment")
    mae = np.mean(np.abs(real - sim))
    inc_real = np.diff(real) / real[:-1]
    inc_sim = np.diff(sim) / sim[:-1]
    return float(cfg.w1 * mae + cfg.w2 * np.sum(np.abs(inc_real - inc_sim)))


def bollinger(series, cfg: BollingerConfig = BollingerConfig()) -> Bollinger:
    """Moving average and population deviation over ``window``-long windows.

    Window ``i`` covers ``series[i:i+window]``; ``b_avg`` is the mean band
    width ``upper - lower`` over all windows.
    """
    x = np.asarray(series, dtype=float)
    n = cfg.window
    if x.ndim != 1 or x.size < n:
        raise ContractError(f"series shorter than the window ({n})")
    windows = np.lib.stride_tricks.sliding_window_view(x, n)
    # a flat window has an exact mean and zero spread; floating sums may not agree
    flat = np.ptp(windows, axis=1) == 0 if windows.size else np.zeros(0, dtype=bool)
    ma = np.where(flat, windows[:, 0], windows.mean(axis=1))
    sigma = np.where(flat, 0.0, np.sqrt(np.mean((windows - ma[:, None]) ** 2, axis=1)))
    upper = ma + cfg.k * sigma
    lower = ma - cfg.k * sigma
    return Bollinger(ma, sigma, upper, lower, float(np.mean(upper - lower)))


def stabilization_fitness(series, volumes, bollinger_cfg: BollingerConfig = BollingerConfig(),
                          stab_cfg: StabilizationConfig = StabilizationConfig()) -> float:
    """``lambda1 * B_avg + lambda2 * mean volume`` (higher is better with lambda1 < 0)."""
    series = np.asarray(series, dtype=float)
    volumes = np.asarray(volumes, dtype=float)
    if series.shape != volumes.shape:
        raise ContractError("price and volume series must be aligned")
    b = bollinger(series, bollinger_cfg).b_avg
    mean_volume = float(np.mean(volumes)) if volumes.size else 0.0
    return float(stab_cfg.lambda1 * b + stab_cfg.lambda2 * mean_volume)


def breached(price, p0, lower_ratio, upper_ratio):
    """Boolean mask of prices at or beyond the fluctuation thresholds."""
    price = np.asarray(price, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    lo = p0 * lower_ratio
    hi = p0 * upper_ratio
    return (price <= lo + LIMIT_RTOL * np.abs(lo)) | (price >= hi - LIMIT_RTOL * np.abs(hi))


def breach_count(trade_prices, p0, lower_ratio=0.9, upper_ratio=1.1) -> int:
    """Trades priced at or beyond ``p0*lower_ratio`` / ``p0*upper_ratio``.

    ``p0`` may be a scalar or an array aligned with ``trade_prices`` (one
    opening price per trade).
    """
    if np.any(np.asarray(p0, dtype=float) <= 0):
        raise ContractError("reference price must be positive")
    prices = np.asarray(trade_prices, dtype=float)
    if prices.size == 0:
        return 0
    return int(np.count_nonzero(breached(prices, p0, lower_ratio, upper_ratio)))


@dataclass
class RankedSolution:
    index: int
    fitness: float
    complexity: float
    needs_review: bool = False


def rank_solutions(candidates, higher_is_better=True) -> list:
    """Order by fitness, then by lower structural complexity.

    Candidates tied on both keys are flagged ``needs_review``: telling them
    apart needs a human judgement of interpretability.
    """
    sign = -1.0 if higher_is_better else 1.0
    ranked = sorted(
        (RankedSolution(i, float(f), float(c)) for i, (f, c) in enumerate(candidates)),
        key=lambda r: (sign * r.fitness, r.complexity, r.index),
    )
    for a, b in zip(ranked, ranked[1:]):
        if a.fitness == b.fitness and a.complexity == b.complexity:
            a.needs_review = b.needs_review = True
    return ranked


def write_metric_report(path, rows):
    """Write ``(metric, value, config)`` rows; config objects become JSON."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value", "config"])
        for name, value, config in rows:
            if hasattr(config, "__dataclass_fields__"):
                config = asdict(config)
            w.writerow([name, repr(float(value)), json.dumps(config or {}, sort_keys=True)])


def read_metric_report(path) -> dict:
    with open(path, newline="") as fh:
        return {r["metric"]: float(r["value"]) for r in csv.DictReader(fh)}
