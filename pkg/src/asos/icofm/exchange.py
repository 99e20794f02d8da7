"""Exchange: market state, order admission, accounts, daily settlement and
physical delivery.

Prices and cash are integer ticks so every audit (zero-sum positions,
zero-sum postings, inventory) is exact.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

from ..errors import ContractError
from ..symbolic.operators import OperatorContext, eval_operator
from .book import Order, OrderBook, OrderType, Side, Trade, call_auction_clear

log = logging.getLogger(__name__)


class Phase(IntEnum):
    CALL_AUCTION = 0
    CONTINUOUS = 1
    CLOSED = 2


class Reject(str):
    pass


CLOSED = Reject("market_closed")
MKT_IN_AUCTION = Reject("mkt_in_call_auction")
RESTRICTED = Reject("order_type_restricted")
INACTIVE_MONTH = Reject("inactive_contract_month")


@dataclass
class MarketState:
    phase: Phase = Phase.CALL_AUCTION
    day: int = 0
    round: int = 0
    opening_price: int = 0
    closing_price: int = 0
    previous_close: int = 0
    last_price: int = 0
    volume_today: int = 0
    settle_day: bool = False
    lower_ratio: float = 0.9
    upper_ratio: float = 1.1
    halted: bool = False
    mkt_only: bool = False
    contract_month: int = 0

    def __post_init__(self):
        if not 0 < self.lower_ratio < 1 < self.upper_ratio:
            raise ContractError("bounds must satisfy 0 < lower_ratio < 1 < upper_ratio")

    def limit_context(self) -> OperatorContext:
        return OperatorContext(upper_limit_ratio=self.upper_ratio - 1.0,
                               lower_limit_ratio=1.0 - self.lower_ratio)


@dataclass
class Account:
    owner: object
    role: str = "speculator"
    cash: int = 0
    inventory: int = 0
    # month -> [signed quantity, signed cost basis in ticks]
    book: dict = field(default_factory=dict)

    def position(self, month=None) -> int:
        if month is not None:
            return self.book.get(month, [0, 0])[0]
        return sum(v[0] for v in self.book.values())

    def open_positions(self):
        """``(side, quantity, entry price, month)`` per open contract month."""
        out = []
        for month, (q, cost) in sorted(self.book.items()):
            if q:
                out.append((Side.BID if q > 0 else Side.ASK, abs(q), cost / q, month))
        return out


class Submission(NamedTuple):
    accepted: bool
    reason: str
    trades: list


class Posting(NamedTuple):
    owner: object
    amount: int


@dataclass
class DeliveryReport:
    price: int
    delivered: list = field(default_factory=list)  # (long, short, barrels)
    cash_settled: list = field(default_factory=list)  # (long, short, contracts, penalty)

    def __bool__(self):
        return bool(self.delivered or self.cash_settled)


def apply_trade(accounts: dict, trade: Trade, month: int):
    for owner, sign in ((trade.buyer, 1), (trade.seller, -1)):
        acc = accounts[owner]
        entry = acc.book.setdefault(month, [0, 0])
        entry[0] += sign * trade.quantity
        entry[1] += sign * trade.quantity * trade.price


def submit_order(market: MarketState, book: OrderBook, order: Order, accounts=None,
                 hooks=()) -> Submission:
    """Admit ``order`` under the phase and restriction rules.

    In the call auction, limit orders accumulate unmatched and market orders
    are rejected.  In continuous trading, ``hooks`` may insert priority
    orders before the incoming order is matched.
    """
    if market.phase == Phase.CLOSED or market.halted:
        return Submission(False, CLOSED, [])
    if order.contract_month != market.contract_month:
        return Submission(False, INACTIVE_MONTH, [])
    if market.phase == Phase.CALL_AUCTION:
        if order.order_type == OrderType.MKT:
            return Submission(False, MKT_IN_AUCTION, [])
        book.add(order)
        return Submission(True, "", [])
    if market.mkt_only and order.order_type == OrderType.LMT:
        return Submission(False, RESTRICTED, [])
    trades = []
    for hook in hooks:
        trades.extend(hook(market, book, order))
    trades.extend(book.match(order))
    _book_trades(market, accounts, trades)
    return Submission(True, "", trades)


def _book_trades(market, accounts, trades):
    for t in trades:
        if accounts is not None:
            apply_trade(accounts, t, market.contract_month)
        market.last_price = t.price
        market.volume_today += t.quantity


def open_market(market: MarketState, book: OrderBook, accounts=None, timestamp=0):
    """Run the call auction; its price becomes the opening price."""
    if market.phase != Phase.CALL_AUCTION:
        raise ContractError("call auction only runs before the open")
    res = call_auction_clear(book, market.previous_close, timestamp)
    _book_trades(market, accounts, res.trades)
    market.opening_price = res.price
    market.last_price = res.price
    market.phase = Phase.CONTINUOUS
    return res


def close_day(market: MarketState, trades_today) -> int:
    """Closing price: last trade of the day, else the previous close."""
    market.closing_price = trades_today[-1].price if trades_today else market.previous_close
    market.phase = Phase.CLOSED
    return market.closing_price


def mark_to_market(market: MarketState, accounts: dict) -> list:
    """Post ``pos * close - cost`` to cash and reset the basis to the close."""
    c = market.closing_price
    out = []
    for owner in sorted(accounts, key=str):
        acc = accounts[owner]
        amount = 0
        for entry in acc.book.values():
            amount += entry[0] * c - entry[1]
            entry[1] = entry[0] * c
        if amount or any(e[0] for e in acc.book.values()):
            acc.cash += amount
            out.append(Posting(owner, amount))
    market.previous_close = c
    return out


def deliver(market: MarketState, accounts: dict, price=None, penalty=0) -> DeliveryReport:
    """Settle every open contract of the current month physically.

    Longs and shorts are paired in account order.  A short lacking barrels
    settles the shortfall in cash at the settlement price plus ``penalty``
    ticks per contract paid to the long.  Positions must already be marked
    to ``price`` (the close), so the cost basis equals ``pos * price``.
    """
    s = market.closing_price if price is None else price
    month = market.contract_month
    longs, shorts = [], []
    for owner in sorted(accounts, key=str):
        q = accounts[owner].position(month)
        if q > 0:
            longs.append([owner, q])
        elif q < 0:
            shorts.append([owner, -q])
    report = DeliveryReport(s)
    li = si = 0
    while li < len(longs) and si < len(shorts):
        lo, so = longs[li], shorts[si]
        q = min(lo[1], so[1])
        la, sa = accounts[lo[0]], accounts[so[0]]
        d = min(q, max(sa.inventory, 0))
        if d:
            sa.inventory -= d
            la.inventory += d
            la.cash -= d * s
            sa.cash += d * s
            report.delivered.append((lo[0], so[0], d))
        short = q - d
        if short:
            fine = short * penalty
            sa.cash -= fine
            la.cash += fine
            report.cash_settled.append((lo[0], so[0], short, fine))
        lo[1] -= q
        so[1] -= q
        li += lo[1] == 0
        si += so[1] == 0
    for acc in accounts.values():
        entry = acc.book.pop(month, None)
        if entry is not None and entry[0] * s != entry[1]:
            raise ContractError("delivery requires positions marked to the settlement price")
    return report


def stabilizer_close_market(market: MarketState, live_price) -> bool:
    """Halt trading for the day once ``live_price`` reaches either bound."""
    if market.phase != Phase.CONTINUOUS:
        return False
    ctx = market.limit_context()
    p0 = market.opening_price
    hit = eval_operator("Or", [eval_operator("LimUp", [live_price, p0], ctx),
                               eval_operator("LimDown", [live_price, p0], ctx)], ctx)
    if hit:
        market.halted = True
        market.phase = Phase.CLOSED
    return bool(hit)


def stabilizer_restrict_order_type(market: MarketState) -> None:
    """While installed, continuous trading admits market orders only."""
    market.mkt_only = True


class Exchange:
    """One futures market: state, front-month book and participant accounts."""

    def __init__(self, initial_price: int, lower_ratio=0.9, upper_ratio=1.1, penalty=0):
        if initial_price <= 0:
            raise ContractError("initial price must be positive")
        self.market = MarketState(opening_price=initial_price, closing_price=initial_price,
                                  previous_close=initial_price, last_price=initial_price,
                                  lower_ratio=lower_ratio, upper_ratio=upper_ratio)
        self.book = OrderBook()
        self.accounts: dict = {}
        self.penalty = penalty
        self.hooks: list = []
        self.clock = 0
        self.trades_today: list = []
        self.trade_log: list = []  # (day, Trade)
        self.postings: list = []  # (day, [Posting])
        self.deliveries: list = []

    def open_account(self, owner, role="speculator", cash=0, inventory=0) -> Account:
        if owner in self.accounts:
            raise ContractError(f"account {owner!r} exists")
        acc = self.accounts[owner] = Account(owner, role, cash, inventory)
        return acc

    def tick(self) -> int:
        self.clock += 1
        return self.clock

    def _record(self, trades):
        self.trades_today.extend(trades)
        self.trade_log.extend((self.market.day, t) for t in trades)

    def submit(self, order: Order, hooks=None) -> Submission:
        if order.owner not in self.accounts:
            raise ContractError(f"unknown participant {order.owner!r}")
        order.timestamp = self.tick()
        res = submit_order(self.market, self.book, order, self.accounts,
                           self.hooks if hooks is None else hooks)
        self._record(res.trades)
        return res

    def open(self):
        res = open_market(self.market, self.book, self.accounts, self.tick())
        self._record(res.trades)
        return res

    def close(self):
        return close_day(self.market, self.trades_today)

    def settle(self):
        """Mark to market at the close, then deliver on settle days."""
        posts = mark_to_market(self.market, self.accounts)
        self.postings.append((self.market.day, posts))
        rep = None
        if self.market.settle_day:
            rep = deliver(self.market, self.accounts, penalty=self.penalty)
            self.deliveries.append((self.market.day, rep))
            self.market.contract_month += 1
        return posts, rep

    def new_day(self, day, settle_day=False):
        m = self.market
        m.day = day
        m.round = 0
        m.phase = Phase.CALL_AUCTION
        m.halted = False
        m.mkt_only = False
        m.volume_today = 0
        m.settle_day = settle_day
        self.book.clear()
        self.trades_today = []

    def open_interest(self) -> int:
        return sum(max(a.position(), 0) for a in self.accounts.values())

    def net_position(self) -> int:
        return sum(a.position() for a in self.accounts.values())
