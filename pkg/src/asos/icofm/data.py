"""Quarterly factor and price series: CSV loaders/writers, synthetic
generators and the trade export."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from decimal import Decimal

import numpy as np

from ..errors import LoadError

CATEGORIES = ("supply", "demand", "geopolitics", "finance", "policy")
FACTOR_HEADER = ["quarter", "category", "name", "value"]
PRICE_HEADER = ["quarter", "price"]
TRADE_HEADER = ["day", "timestamp", "price", "quantity", "buyer", "seller"]


@dataclass
class FactorFrame:
    quarters: list
    names: list
    categories: list  # category of each name
    values: np.ndarray  # (n_quarters, n_factors)

    def __len__(self):
        return len(self.quarters)

    def __getitem__(self, quarter):
        i = self.quarters.index(quarter)
        return dict(zip(self.names, self.values[i].tolist()))

    def row(self, index):
        """Values for the ``index``-th quarter, clamped to the last one."""
        return self.values[min(index, len(self.quarters) - 1)]


def _read(path, header):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise LoadError(f"cannot open {path}: {exc}") from exc
    with fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != header:
        raise LoadError(f"expected header {','.join(header)}", 1)
    return rows[1:]


def _int(cell, row):
    try:
        return int(cell)
    except ValueError:
        raise LoadError(f"quarter {cell!r} is not an integer", row) from None


def _float(cell, row):
    try:
        v = float(cell)
    except ValueError:
        raise LoadError(f"value {cell!r} is not numeric", row) from None
    if not math.isfinite(v):
        raise LoadError(f"value {cell!r} is not finite", row)
    return v


def load_factors(path) -> FactorFrame:
    """Rows ``quarter,category,name,value``; quarters must be contiguous and
    each must list the same factor names."""
    rows = _read(path, FACTOR_HEADER)
    by_q: dict = {}
    first_row: dict = {}
    names: list = []
    cats: dict = {}
    for n, r in enumerate(rows, start=2):
        if len(r) != 4:
            raise LoadError("expected 4 columns", n)
        q = _int(r[0], n)
        cat, name = r[1].strip(), r[2].strip()
        if not name:
            raise LoadError("empty factor name", n)
        v = _float(r[3], n)
        if name not in cats:
            cats[name] = cat
            names.append(name)
        elif cats[name] != cat:
            raise LoadError(f"factor {name!r} changes category", n)
        if q in by_q and name in by_q[q]:
            raise LoadError(f"duplicate factor {name!r} in quarter {q}", n)
        if q not in by_q:
            if by_q and q != max(by_q) + 1:
                raise LoadError(f"quarter {q} breaks contiguity after {max(by_q)}", n)
            by_q[q] = {}
            first_row[q] = n
        by_q[q][name] = v
    if not by_q:
        raise LoadError("no data rows")
    quarters = sorted(by_q)
    values = np.empty((len(quarters), len(names)))
    for i, q in enumerate(quarters):
        missing = [k for k in names if k not in by_q[q]]
        if missing:
            raise LoadError(f"quarter {q} lacks factors {missing}", first_row[q])
        values[i] = [by_q[q][k] for k in names]
    return FactorFrame(quarters, names, [cats[k] for k in names], values)


def write_factors(path, frame: FactorFrame):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FACTOR_HEADER)
        for i, q in enumerate(frame.quarters):
            for j, name in enumerate(frame.names):
                w.writerow([q, frame.categories[j], name, repr(float(frame.values[i, j]))])


def load_prices(path):
    """Rows ``quarter,price``; returns ``(quarters, prices)``."""
    rows = _read(path, PRICE_HEADER)
    quarters, prices = [], []
    for n, r in enumerate(rows, start=2):
        if len(r) != 2:
            raise LoadError("expected 2 columns", n)
        q = _int(r[0], n)
        p = _float(r[1], n)
        if p <= 0:
            raise LoadError("price must be positive", n)
        if quarters and q != quarters[-1] + 1:
            raise LoadError(f"quarter {q} breaks contiguity after {quarters[-1]}", n)
        quarters.append(q)
        prices.append(p)
    if not prices:
        raise LoadError("no data rows")
    return quarters, np.array(prices)


def write_prices(path, quarters, prices):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PRICE_HEADER)
        for q, p in zip(quarters, prices):
            w.writerow([q, repr(float(p))])


def synthetic_factors(n_quarters, per_category=12, categories=CATEGORIES, seed=0,
                      phi=0.8) -> FactorFrame:
    """AR(1) factor paths with unit stationary variance."""
    rng = np.random.default_rng(seed)
    names = [f"{c}_{j:02d}" for c in categories for j in range(per_category)]
    k = len(names)
    x = np.empty((n_quarters, k))
    cur = rng.standard_normal(k)
    s = math.sqrt(1 - phi * phi)
    for t in range(n_quarters):
        x[t] = cur
        cur = phi * cur + s * rng.standard_normal(k)
    return FactorFrame(list(range(n_quarters)), names,
                       [c for c in categories for _ in range(per_category)], x)


def ticks_to_str(ticks, tick_size) -> str:
    return str(Decimal(int(ticks)) * Decimal(str(tick_size)))


def write_trades(path, trade_log, tick_size=0.01):
    """``trade_log`` holds ``(day, Trade)`` pairs with prices in ticks."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRADE_HEADER)
        for day, t in trade_log:
            w.writerow([day, t.timestamp, ticks_to_str(t.price, tick_size), t.quantity,
                        t.buyer, t.seller])


def read_trades(path) -> list:
    rows = _read(path, TRADE_HEADER)
    out = []
    for n, r in enumerate(rows, start=2):
        if len(r) != 6:
            raise LoadError("expected 6 columns", n)
        out.append({"day": _int(r[0], n), "timestamp": _int(r[1], n), "price": _float(r[2], n),
                    "quantity": _int(r[3], n), "buyer": r[4], "seller": r[5]})
    return out
