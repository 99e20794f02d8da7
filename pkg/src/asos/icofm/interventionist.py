"""Non-profit front-running interventionist.

IM1/IM2 pre-empt incoming orders whose execution would trade at or beyond
the fluctuation bounds by placing priority orders at the threshold; HM later
liquidates the absorbed positions at their original contract prices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..symbolic.operators import eval_operator
from .book import Order, OrderBook, OrderType, Side
from .exchange import MarketState, Phase

OWNER = "interventionist"


@dataclass
class InterventionistState:
    owner: str = OWNER
    # open lots: [side, quantity, contract price]
    lots: list = field(default_factory=list)
    # "inside": first tick strictly inside the bounds; "threshold": the bound itself
    price_mode: str = "inside"
    interventions: int = 0
    liquidations: int = 0

    def net_position(self) -> int:
        return sum(int(s) * q for s, q, _ in self.lots)

    def record_fill(self, side, quantity, price):
        """Book a fill of our own order into the lot list (netting FIFO)."""
        side = Side(side)
        left = quantity
        for lot in self.lots:
            if left == 0:
                break
            if lot[0] != side and lot[1] > 0:
                q = min(left, lot[1])
                lot[1] -= q
                left -= q
        self.lots = [l for l in self.lots if l[1] > 0]
        if left:
            self.lots.append([side, left, price])


def threshold_prices(market: MarketState, mode="inside"):
    """Prices for priority bids (lower side) and asks (upper side)."""
    p0 = market.opening_price
    lo = p0 * market.lower_ratio
    hi = p0 * market.upper_ratio
    if mode == "threshold":
        return lo, hi
    ctx = market.limit_context()
    bid = math.floor(lo)
    while eval_operator("LimDown", [bid, p0], ctx):
        bid += 1
    ask = math.ceil(hi)
    while eval_operator("LimUp", [ask, p0], ctx):
        ask -= 1
    return bid, ask


def breach_flags(prices, market: MarketState, side: Side):
    ctx = market.limit_context()
    name = "LimDown" if side == Side.BID else "LimUp"
    p = np.asarray(prices, dtype=float)
    return np.asarray(eval_operator(name, [p, np.full(p.shape, float(market.opening_price))], ctx),
                      dtype=float).reshape(p.shape)


def interventionist_act(state: InterventionistState, incoming: Order, book: OrderBook,
                        market: MarketState) -> list:
    """Priority orders that keep ``incoming`` from trading beyond the bounds.

    The would-be execution is simulated against the book; the resting
    quantity it would consume at or beyond the threshold is summed with Sum3
    and a priority order for that amount is returned.
    """
    if incoming.owner == state.owner or market.phase != Phase.CONTINUOUS:
        return []
    fills = book.simulate(incoming)
    if not fills:
        return []
    contra = Side(-incoming.side)
    flags = breach_flags([f.price for f in fills], market, contra)
    qty = np.array([f.quantity for f in fills], dtype=float)
    q = eval_operator("Sum3", [flags, qty, np.ones_like(qty)])
    q = int(round(float(q)))
    if q <= 0:
        return []
    if incoming.order_type == OrderType.MKT:
        # a market order that would exhaust the book must not reach past us
        q += max(0, incoming.remaining - int(qty.sum()))
    bid_px, ask_px = threshold_prices(market, state.price_mode)
    price = bid_px if contra == Side.BID else ask_px
    state.interventions += 1
    return [Order(contra, q, price, OrderType.LMT, owner=state.owner,
                  contract_month=market.contract_month)]


def liquidation_orders(state: InterventionistState, book: OrderBook, market: MarketState) -> list:
    """HM: close each held lot at its contract price when that cannot breach."""
    if market.phase != Phase.CONTINUOUS or market.halted or not state.lots:
        return []
    if breach_flags([market.last_price], market, Side.BID)[0] or \
            breach_flags([market.last_price], market, Side.ASK)[0]:
        return []
    out = []
    for side, q, price in state.lots:
        o = Order(Side(-side), q, price, OrderType.LMT, owner=state.owner,
                  contract_month=market.contract_month)
        fills = book.simulate(o)
        if not fills:
            continue
        ps = [f.price for f in fills]
        if breach_flags(ps, market, Side.BID).any() or breach_flags(ps, market, Side.ASK).any():
            continue
        # only what trades now; no resting remainder
        o.quantity = o.remaining = sum(f.quantity for f in fills)
        out.append(o)
    return out


def flow_liquidation(state: InterventionistState, incoming: Order, book: OrderBook,
                     market: MarketState) -> list:
    """HM against order flow: meet an incoming order that would close a held
    lot, at the prevailing price but never worse than the lot's contract price.

    The returned priority order is sized so ``incoming`` consumes it fully.
    """
    if incoming.owner == state.owner or market.phase != Phase.CONTINUOUS or market.halted:
        return []
    lots = [l for l in state.lots if l[0] == incoming.side]
    if not lots:
        return []
    side, _, floor = lots[0]
    best = book.best(Side(-side))
    if incoming.order_type == OrderType.MKT:
        if best is None:
            return []
        price = best
    else:
        crosses = best is not None and (incoming.price >= best if side == Side.BID
                                        else incoming.price <= best)
        price = best if crosses else incoming.price
    if (side == Side.BID and price < floor) or (side == Side.ASK and price > floor):
        return []
    if breach_flags([price], market, Side.BID)[0] or breach_flags([price], market, Side.ASK)[0]:
        return []
    q = min(sum(l[1] for l in lots), incoming.remaining)
    if q <= 0:
        return []
    state.liquidations += 1
    return [Order(Side(-side), q, price, OrderType.LMT, owner=state.owner,
                  contract_month=market.contract_month)]


class InterventionHook:
    """Pre-match hook binding the interventionist to an exchange.

    Priority orders are inserted at the head of their price level and the
    resulting fills are booked to the interventionist's lots.
    """

    def __init__(self, state: InterventionistState):
        self.state = state
        self.armed = False

    def __call__(self, market, book, incoming):
        if not self.armed:
            return []
        orders = interventionist_act(self.state, incoming, book, market)
        if not orders:
            orders = flow_liquidation(self.state, incoming, book, market)
        for o in orders:
            book.add(o, priority=True)
        return []

    def on_trades(self, trades):
        s = self.state
        for t in trades:
            if t.buyer == s.owner and t.seller != s.owner:
                s.record_fill(Side.BID, t.quantity, t.price)
            elif t.seller == s.owner and t.buyer != s.owner:
                s.record_fill(Side.ASK, t.quantity, t.price)
