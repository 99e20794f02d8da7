"""Limit order book with price-time priority, continuous matching and the
pre-open call auction."""
from __future__ import annotations

import bisect
import itertools
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

from ..errors import ContractError


class Side(IntEnum):
    ASK = -1
    BID = 1


class OrderType(IntEnum):
    LMT = 0
    MKT = 1


@dataclass
class Order:
    side: Side
    quantity: int
    price: int | float | None = None
    order_type: OrderType = OrderType.LMT
    owner: object = None
    timestamp: int = 0
    contract_month: int = 0
    order_id: int = -1  # assigned by the book on first sight
    remaining: int = -1

    def __post_init__(self):
        self.side = Side(self.side)
        self.order_type = OrderType(self.order_type)
        if not isinstance(self.quantity, int) or isinstance(self.quantity, bool) or self.quantity < 1:
            raise ContractError(f"order quantity must be a positive integer, got {self.quantity!r}")
        if self.order_type == OrderType.LMT:
            if self.price is None or not self.price > 0:
                raise ContractError("limit orders need a positive price")
        elif self.price is not None:
            raise ContractError("market orders carry no price")
        if self.remaining < 0:
            self.remaining = self.quantity


class Trade(NamedTuple):
    price: int | float
    quantity: int
    buyer: object
    seller: object
    timestamp: int
    buy_order: int = -1
    sell_order: int = -1


class Fill(NamedTuple):
    """A would-be execution against one resting order."""

    price: int | float
    quantity: int
    order: Order


class OrderBook:
    """Outstanding orders per side: price levels, each a FIFO queue."""

    def __init__(self):
        self.levels = {Side.BID: {}, Side.ASK: {}}
        self.prices = {Side.BID: [], Side.ASK: []}  # ascending
        self.transactions: list[Trade] = []
        self._index: dict[int, Order] = {}
        self._seq = itertools.count()

    def _number(self, order):
        if order.order_id < 0:
            order.order_id = next(self._seq)

    # -- inspection -----------------------------------------------------

    def best(self, side):
        p = self.prices[Side(side)]
        if not p:
            return None
        return p[-1] if side == Side.BID else p[0]

    def best_bid(self):
        return self.best(Side.BID)

    def best_ask(self):
        return self.best(Side.ASK)

    def crossed(self):
        b, a = self.best_bid(), self.best_ask()
        return b is not None and a is not None and b >= a

    def orders(self, side=None):
        sides = [Side(side)] if side is not None else [Side.BID, Side.ASK]
        out = []
        for s in sides:
            for p in self._walk_prices(s):
                out.extend(self.levels[s][p])
        return out

    def __len__(self):
        return len(self._index)

    def chart(self):
        """Outstanding quantity per price; bid quantities are negative."""
        rows = []
        for s in (Side.BID, Side.ASK):
            for p, q in self.levels[s].items():
                rows.append((p, -int(s) * sum(o.remaining for o in q)))
        return sorted(rows)

    def _walk_prices(self, side):
        p = self.prices[side]
        return reversed(p) if side == Side.BID else iter(p)

    # -- mutation -------------------------------------------------------

    def add(self, order: Order, priority=False):
        """Rest ``order``; ``priority`` puts it at the head of its price level."""
        if order.order_type != OrderType.LMT:
            raise ContractError("only limit orders can rest")
        self._number(order)
        side = order.side
        level = self.levels[side].get(order.price)
        if level is None:
            level = self.levels[side][order.price] = deque()
            bisect.insort(self.prices[side], order.price)
        if priority:
            level.appendleft(order)
        else:
            level.append(order)
        self._index[order.order_id] = order

    def cancel(self, order_id) -> Order | None:
        order = self._index.pop(order_id, None)
        if order is None:
            return None
        level = self.levels[order.side][order.price]
        level.remove(order)
        if not level:
            self._drop_level(order.side, order.price)
        return order

    def _drop_level(self, side, price):
        del self.levels[side][price]
        p = self.prices[side]
        p.pop(bisect.bisect_left(p, price))

    def clear(self):
        for s in (Side.BID, Side.ASK):
            self.levels[s].clear()
            self.prices[s].clear()
        self._index.clear()

    # -- matching -------------------------------------------------------

    def _crosses(self, incoming, price):
        if incoming.order_type == OrderType.MKT:
            return True
        return price <= incoming.price if incoming.side == Side.BID else price >= incoming.price

    def simulate(self, incoming: Order) -> list:
        """Fills ``incoming`` would receive, without touching the book."""
        fills = []
        left = incoming.remaining
        contra = Side(-incoming.side)
        for p in self._walk_prices(contra):
            if left <= 0 or not self._crosses(incoming, p):
                break
            for o in self.levels[contra][p]:
                q = min(left, o.remaining)
                fills.append(Fill(p, q, o))
                left -= q
                if left <= 0:
                    break
        return fills

    def match(self, incoming: Order) -> list:
        """Cross ``incoming`` against the book; a limit remainder rests.

        Executions happen at the resting order's price; a market order's
        unfilled remainder is dropped.
        """
        self._number(incoming)
        trades = []
        contra = Side(-incoming.side)
        prices = self.prices[contra]
        while incoming.remaining > 0 and prices:
            p = prices[-1] if contra == Side.BID else prices[0]
            if not self._crosses(incoming, p):
                break
            level = self.levels[contra][p]
            while level and incoming.remaining > 0:
                top = level[0]
                q = min(incoming.remaining, top.remaining)
                top.remaining -= q
                incoming.remaining -= q
                if incoming.side == Side.BID:
                    t = Trade(p, q, incoming.owner, top.owner, incoming.timestamp,
                              incoming.order_id, top.order_id)
                else:
                    t = Trade(p, q, top.owner, incoming.owner, incoming.timestamp,
                              top.order_id, incoming.order_id)
                trades.append(t)
                if top.remaining == 0:
                    level.popleft()
                    del self._index[top.order_id]
            if not level:
                self._drop_level(contra, p)
        if incoming.remaining > 0 and incoming.order_type == OrderType.LMT:
            self.add(incoming)
        self.transactions.extend(trades)
        return trades


def match_continuous(book: OrderBook, incoming: Order):
    """Returns ``(trades, remainder)``; remainder is the unfilled quantity."""
    trades = book.match(incoming)
    return trades, incoming.remaining


class AuctionResult(NamedTuple):
    price: int | float
    volume: int
    trades: list


def executable_volume(book: OrderBook, price) -> int:
    demand = sum(o.remaining for p, q in book.levels[Side.BID].items() if p >= price for o in q)
    supply = sum(o.remaining for p, q in book.levels[Side.ASK].items() if p <= price for o in q)
    return min(demand, supply)


def auction_candidates(book: OrderBook, previous_close):
    return sorted(set(book.prices[Side.BID]) | set(book.prices[Side.ASK]) | {previous_close})


def call_auction_clear(book: OrderBook, previous_close, timestamp=0) -> AuctionResult:
    """Clear the accumulated book at the volume-maximizing price.

    Candidates are the resting order prices plus the previous close; ties go
    to the price nearest the previous close, then to the lower price.  With
    no executable volume the price stays at the previous close.  Unmatched
    orders remain in the book.
    """
    best_key, best_price, best_vol = None, previous_close, 0
    for p in auction_candidates(book, previous_close):
        v = executable_volume(book, p)
        key = (-v, abs(p - previous_close), p)
        if best_key is None or key < best_key:
            best_key, best_price, best_vol = key, p, v
    if best_vol == 0:
        return AuctionResult(previous_close, 0, [])
    bids = [o for p in reversed(book.prices[Side.BID]) if p >= best_price
            for o in book.levels[Side.BID][p]]
    asks = [o for p in book.prices[Side.ASK] if p <= best_price for o in book.levels[Side.ASK][p]]
    trades = []
    left = best_vol
    bi = ai = 0
    while left > 0:
        b, a = bids[bi], asks[ai]
        q = min(b.remaining, a.remaining, left)
        b.remaining -= q
        a.remaining -= q
        left -= q
        trades.append(Trade(best_price, q, b.owner, a.owner, timestamp, b.order_id, a.order_id))
        if b.remaining == 0:
            bi += 1
        if a.remaining == 0:
            ai += 1
    for o in bids + asks:
        if o.remaining == 0:
            book.cancel(o.order_id)
    book.transactions.extend(trades)
    return AuctionResult(best_price, best_vol, trades)
