"""Market environment behind the world rules, and the day/round runner."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .. import protocol as P
from ..errors import ContractError
from ..hypergraph import ValueKind
from ..metrics import breach_count
from ..scenario import Scenario
from ..scheduler import Scheduler, execute_step
from .agents import (ENTERPRISE_ACT_HIGH, ENTERPRISE_ACT_LOW, ROLES, SETTLE_HORIZON, AgentConfig,
                     RewardWeights, decode_enterprise_action, enterprise_obs, enterprise_reward,
                     expert_enterprise, expert_region, region_obs, region_reward)
from .book import Order, OrderType, Side
from .data import FactorFrame, synthetic_factors
from .exchange import Exchange, Phase, deliver, mark_to_market
from .interventionist import OWNER as IV_OWNER
from .interventionist import InterventionHook, InterventionistState, liquidation_orders
from .scenario import ENTERPRISE, FACTORS, MARKET, REGION, IcofmConfig

log = logging.getLogger(__name__)

STUB, SHOCK = "stub", "shock"


@dataclass
class DayRecord:
    day: int
    quarter: int
    open: float
    high: float
    low: float
    close: float
    volume: int
    trades: int
    breaches: int


DAY_HEADER = ["day", "quarter", "open", "high", "low", "close", "volume", "trades", "breaches"]


def _agent_config(cfg: IcofmConfig) -> AgentConfig:
    d = dict(cfg.agent)
    w = d.pop("weights", None)
    ac = AgentConfig(**d)
    if w is not None:
        ac.weights = RewardWeights(**w)
    return ac


class IcofmEnv:
    """Exchange, participants and bookkeeping shared by the world rules.

    ``policies`` maps a role name (``producer``, ``consumer``, ``speculator``)
    or ``region`` to a callable ``obs -> action``; missing entries use the
    expert rules.
    """

    def __init__(self, cfg: IcofmConfig, seed=None, policies=None, frame: FactorFrame | None = None):
        self.cfg = cfg
        self.acfg = _agent_config(cfg)
        self.rng = np.random.default_rng(cfg.seed if seed is None else seed)
        self.policies = dict(policies or {})
        self.frame = frame if frame is not None else synthetic_factors(
            64, cfg.factors_per_category, cfg.categories, cfg.factor_seed)
        self.exchange = Exchange(cfg.ticks(cfg.initial_price), cfg.lower_ratio, cfg.upper_ratio,
                                 cfg.ticks(cfg.delivery_penalty))
        self.iv: InterventionistState | None = None
        self.iv_hook: InterventionHook | None = None
        self.owners = {}
        self.carry = {}
        self.shortfall = {}
        self.last_cash = {}
        self.reward_log = []  # (day, round, agent, total, parts)
        self.faults = []  # (day, round, agent, message)
        self.stub_ids = []
        self.anchor = self.exchange.market.previous_close
        self.day = 0
        self.round = 0
        self.graph = None

    # -- binding --------------------------------------------------------

    def bind(self, graph):
        self.graph = graph
        self.pid = {p.name: p.id for p in graph.properties.values() if p.name}
        self.market_iid = graph.instances_of(MARKET)[0]
        self.factor_iid = graph.instances_of(FACTORS)[0]
        self.regions = list(graph.instances_of(REGION))
        self.enterprises = list(graph.instances_of(ENTERPRISE))
        counts = {}
        for iid in self.enterprises:
            role = ROLES[self.eget(iid, "role")]
            k = counts.get(role, 0)
            counts[role] = k + 1
            owner = f"{role}{k}"
            self.owners[iid] = owner
            acc = self.exchange.open_account(owner, role, self.cfg.ticks(self.cfg.initial_cash))
            if role == "consumer":
                acc.inventory = int(self.cfg.base_consumption * 2)
            self.carry[iid] = 0.0
            self.last_cash[iid] = acc.cash
        self.iid_of = {o: i for i, o in self.owners.items()}
        if self.cfg.stub_levels:
            self.exchange.open_account(STUB)
        if self.cfg.shocks:
            self.exchange.open_account(SHOCK)
        self.sync_enterprises()

    def p(self, name):
        return self.pid[name]

    def mget(self, name):
        return self.graph.instances[self.market_iid].state[self.pid[f"market.{name}"]]

    def mset(self, name, value):
        self.graph.set(self.pid[f"market.{name}"], value, self.market_iid)

    def eget(self, iid, name):
        return self.graph.instances[iid].state[self.pid[f"enterprise.{name}"]]

    def eset(self, iid, name, value):
        self.graph.set(self.pid[f"enterprise.{name}"], value, iid)

    def rget(self, iid, name):
        return self.graph.instances[iid].state[self.pid[f"region.{name}"]]

    def rset(self, iid, name, value):
        self.graph.set(self.pid[f"region.{name}"], value, iid)

    def price(self, ticks):
        return round(ticks * self.cfg.tick_size, 10)

    # -- lifecycle driven by the runner ---------------------------------

    def begin_day(self, day):
        cfg = self.cfg
        self.day = day
        quarter = day // cfg.days_per_quarter
        if day % cfg.days_per_quarter == 0:
            row = self.frame.row(quarter)
            for name, v in zip(cfg.factor_names(), row):
                self.graph.set(self.pid[f"factor.{name}"], float(v), self.factor_iid)
        settle = day % cfg.settle_cycle == cfg.settle_cycle - 1
        self.exchange.new_day(day, settle)
        self.stub_ids = []
        m = self.exchange.market
        pressure = np.mean([self.rget(r, "supply_pressure") + self.rget(r, "demand_pressure")
                            for r in self.regions])
        prod = sum(self.rget(r, "production") for r in self.regions)
        cons = sum(self.rget(r, "consumption") for r in self.regions)
        imbalance = (cons - prod) / prod if prod > 0 else 0.0
        drift = cfg.drift_pressure * pressure + cfg.drift_imbalance * imbalance
        drift = float(np.clip(drift, -0.03, 0.03))
        ref = cfg.anchor_memory * self.anchor + (1 - cfg.anchor_memory) * m.previous_close
        self.anchor = max(1, int(round(ref * (1.0 + drift))))
        self.mset("halted", False)
        self.sync_market()

    def begin_round(self, r):
        self.round = r
        m = self.exchange.market
        m.round = r
        m.mkt_only = False
        self.mset("mkt_only", False)
        if self.iv_hook is not None:
            self.iv_hook.armed = False
        self.sync_market()

    def sync_market(self):
        m = self.exchange.market
        for name in ("opening_price", "last_price", "closing_price", "previous_close"):
            self.mset(name, self.price(getattr(m, name)))
        self.mset("phase", int(m.phase))
        self.mset("day", m.day)
        self.mset("round", m.round)
        self.mset("volume_today", m.volume_today)
        b, a = self.exchange.book.best_bid(), self.exchange.book.best_ask()
        self.mset("best_bid", self.price(b) if b is not None else 0.0)
        self.mset("best_ask", self.price(a) if a is not None else 0.0)

    def sync_enterprises(self):
        for iid in self.enterprises:
            acc = self.exchange.accounts[self.owners[iid]]
            self.eset(iid, "cash", self.price(acc.cash))
            self.eset(iid, "inventory", acc.inventory)
            self.eset(iid, "position", acc.position())

    def _after_trades(self, trades):
        for t in trades:
            for owner, sign in ((t.buyer, 1), (t.seller, -1)):
                iid = self.iid_of.get(owner)
                if iid is None:
                    continue
                role = ROLES[self.eget(iid, "role")]
                task = self.eget(iid, "task")
                if role == "producer":
                    done = -sign * t.quantity
                elif role == "consumer":
                    done = sign * t.quantity
                else:
                    continue
                self.eset(iid, "task", task - done)
                self.eset(iid, "progress", self.eget(iid, "progress") + done)
        if self.iv_hook is not None:
            self.iv_hook.on_trades(trades)

    def _policy(self, key, obs, expert):
        fn = self.policies.get(key)
        if fn is None:
            return expert(obs)
        return fn(obs)

    # -- world rules ----------------------------------------------------

    def region_adjust(self, graph, m):
        signals = self.rng.uniform(-1, 1, len(self.regions))
        if self.round != 0:
            return 0
        prev = self.exchange.market.previous_close
        change = (self.exchange.market.last_price - prev) / prev if prev else 0.0
        scale = max(self.cfg.base_production, 1.0)
        for iid, s in zip(self.regions, signals):
            obs = region_obs(self.rget(iid, "production"), self.rget(iid, "consumption"),
                             self.rget(iid, "supply_pressure"), self.rget(iid, "demand_pressure"),
                             change, self.rget(iid, "market_share"), s, scale)
            try:
                a = np.asarray(self._policy("region", obs, expert_region), dtype=float)
                a = np.clip(a, -0.05, 0.05)
            except Exception as exc:
                self.faults.append((self.day, self.round, f"region{iid}", repr(exc)))
                continue
            self.rset(iid, "production", max(0.0, self.rget(iid, "production") * (1 + a[0])))
            self.rset(iid, "consumption", max(0.0, self.rget(iid, "consumption") * (1 + a[1])))
            self.rset(iid, "production_change", float(a[0]))
            self.rset(iid, "consumption_change", float(a[1]))
        return len(self.regions)

    def supply_flow(self, graph, m):
        if self.round != 0:
            return 0
        by_region = {}
        for iid in self.enterprises:
            by_region.setdefault((self.eget(iid, "role"), self.eget(iid, "region")), []).append(iid)
        for (role_i, r), members in sorted(by_region.items()):
            role = ROLES[role_i]
            if role == "speculator" or r >= len(self.regions):
                continue
            reg = self.regions[r]
            flow = self.rget(reg, "production" if role == "producer" else "consumption")
            share = flow / len(members)
            for iid in members:
                self.carry[iid] += share
                q = int(self.carry[iid])
                self.carry[iid] -= q
                acc = self.exchange.accounts[self.owners[iid]]
                task = self.eget(iid, "task")
                if role == "producer":
                    acc.inventory += q
                    self.eset(iid, "task", task + q)
                else:
                    acc.inventory -= min(q, acc.inventory)
                    self.eset(iid, "task", min(task + q, 5 * max(q, 1)))
        self.sync_enterprises()
        return len(self.enterprises)

    def enterprise_decide(self, graph, m):
        signals = self.rng.uniform(-1, 1, len(self.enterprises))
        mk = self.exchange.market
        closed = mk.phase == Phase.CLOSED or mk.halted
        book = self.exchange.book
        scale = self.acfg.max_qty
        sp = np.mean([self.rget(r, "supply_pressure") for r in self.regions])
        dp = np.mean([self.rget(r, "demand_pressure") for r in self.regions])
        days_left = self.cfg.settle_cycle - 1 - self.day % self.cfg.settle_cycle
        settle_in = min(days_left, SETTLE_HORIZON) / SETTLE_HORIZON
        for iid, s in zip(self.enterprises, signals):
            for k in ("order_side", "order_qty"):
                self.eset(iid, k, 0)
            if closed:
                continue
            role = ROLES[self.eget(iid, "role")]
            acc = self.exchange.accounts[self.owners[iid]]
            obs = enterprise_obs(role, acc.inventory, acc.position(), self.eget(iid, "task"),
                                 mk.last_price, mk.opening_price, self.anchor, book.best_bid(),
                                 book.best_ask(), sp + dp, self.round / self.cfg.rounds_per_day,
                                 settle_in, s, scale)
            try:
                u = self._policy(role, obs, lambda o: expert_enterprise(o, self.acfg))
                order = decode_enterprise_action(u, self.owners[iid], self.anchor,
                                                 mk.phase == Phase.CALL_AUCTION, mk.contract_month,
                                                 self.acfg)
            except Exception as exc:
                self.faults.append((self.day, self.round, self.owners[iid], repr(exc)))
                continue
            if order is None:
                continue
            self.eset(iid, "order_side", int(order.side))
            self.eset(iid, "order_type", int(order.order_type))
            self.eset(iid, "order_price", self.price(order.price) if order.price else 0.0)
            self.eset(iid, "order_qty", order.quantity)
        return len(self.enterprises)

    def _post_stub_quotes(self):
        ex = self.exchange
        for oid in self.stub_ids:
            ex.book.cancel(oid)
        self.stub_ids = []
        p0 = ex.market.opening_price
        for lvl in self.cfg.stub_levels:
            if lvl < 1:
                o = Order(Side.BID, self.cfg.stub_quantity, max(1, int(np.floor(p0 * lvl))),
                          owner=STUB, contract_month=ex.market.contract_month)
            else:
                o = Order(Side.ASK, self.cfg.stub_quantity, int(np.ceil(p0 * lvl)),
                          owner=STUB, contract_month=ex.market.contract_month)
            res = ex.submit(o)
            self._after_trades(res.trades)
            if o.remaining:
                self.stub_ids.append(o.order_id)

    def submit_orders(self, graph, m):
        ex = self.exchange
        mk = ex.market
        perm = self.rng.permutation(len(self.enterprises))
        if self.mget("halted") and mk.phase == Phase.CONTINUOUS:
            mk.halted = True
            mk.phase = Phase.CLOSED
        mk.mkt_only = bool(self.mget("mkt_only"))
        if mk.phase == Phase.CLOSED:
            return 0
        stub_today = self.cfg.stub_days is None or self.day in self.cfg.stub_days
        if self.cfg.stub_levels and stub_today and mk.phase == Phase.CONTINUOUS:
            self._post_stub_quotes()
        n = 0
        for k in perm:
            iid = self.enterprises[k]
            qty = self.eget(iid, "order_qty")
            side = self.eget(iid, "order_side")
            if qty < 1 or side == 0:
                continue
            otype = OrderType(self.eget(iid, "order_type"))
            price = None if otype == OrderType.MKT else self.cfg.ticks(self.eget(iid, "order_price"))
            order = Order(Side(side), qty, price, otype, owner=self.owners[iid],
                          contract_month=mk.contract_month)
            res = ex.submit(order)
            self._after_trades(res.trades)
            n += res.accepted
        for sh in self.cfg.shocks:
            if sh["day"] == self.day and sh["round"] == self.round and mk.phase == Phase.CONTINUOUS:
                side = Side.ASK if sh["side"] == "ask" else Side.BID
                res = ex.submit(Order(side, int(sh["quantity"]), None, OrderType.MKT, owner=SHOCK,
                                      contract_month=mk.contract_month))
                self._after_trades(res.trades)
        self.sync_enterprises()
        self.sync_market()
        return n

    def call_auction(self, graph, m):
        ex = self.exchange
        if ex.market.phase != Phase.CALL_AUCTION:
            return 0
        res = ex.open()
        self._after_trades(res.trades)
        self.sync_enterprises()
        self.sync_market()
        return 1

    def quote_update(self, graph, m):
        self.sync_market()
        return 1

    def _last_round(self):
        return self.round == self.cfg.rounds_per_day - 1

    def close_day(self, graph, m):
        if not self._last_round():
            return 0
        self.exchange.close()
        self.sync_market()
        return 1

    def mark_to_market(self, graph, m):
        if not self._last_round() or self.exchange.market.phase != Phase.CLOSED:
            return 0
        ex = self.exchange
        posts = mark_to_market(ex.market, ex.accounts)
        ex.postings.append((self.day, posts))
        self.sync_enterprises()
        self.sync_market()
        return len(posts)

    def delivery(self, graph, m):
        ex = self.exchange
        if not self._last_round() or not ex.market.settle_day or ex.market.phase != Phase.CLOSED:
            return 0
        mk = ex.market
        if any(e[0] * mk.closing_price != e[1] for a in ex.accounts.values()
               for mo, e in a.book.items() if mo == mk.contract_month):
            # marking was skipped (mechanism inactive): settle at the close anyway
            mark_to_market(mk, ex.accounts)
        rep = deliver(mk, ex.accounts, penalty=ex.penalty)
        ex.deliveries.append((self.day, rep))
        mk.contract_month += 1
        for long, short, contracts, _ in rep.cash_settled:
            iid = self.iid_of.get(short)
            if iid is not None:
                self.shortfall[iid] = self.shortfall.get(iid, 0) + contracts
        if self.iv is not None:
            self.iv.lots = []
        self.sync_enterprises()
        return 1

    def market_share(self, graph, m):
        prods = [self.rget(r, "production") for r in self.regions]
        total = sum(prods)
        for r, p in zip(self.regions, prods):
            self.rset(r, "market_share", p / total if total > 0 else 0.0)
        return len(self.regions)

    def region_reward(self, graph, m):
        prev = self.mget("previous_close")
        change = (self.mget("last_price") - prev) / prev if prev else 0.0
        scale = max(self.cfg.base_production * self.cfg.initial_price, 1e-9)
        for r in self.regions:
            cost = self.rget(r, "production") * self.rget(r, "unit_cost")
            total, parts = region_reward(self.rget(r, "market_share"), self.rget(r, "economic_growth"),
                                         change, self.rget(r, "revenue"), cost, scale,
                                         self.acfg.weights)
            self.rset(r, "reward", total)
            self.reward_log.append((self.day, self.round, f"region{r}", total, parts))
        return len(self.regions)

    def enterprise_reward(self, graph, m):
        scale = float(self.acfg.max_qty)
        for iid in self.enterprises:
            acc = self.exchange.accounts[self.owners[iid]]
            cash_change = self.price(acc.cash - self.last_cash[iid]) / self.cfg.initial_price
            self.last_cash[iid] = acc.cash
            total, parts = enterprise_reward(self.eget(iid, "progress"), self.shortfall.pop(iid, 0),
                                             cash_change, scale, self.acfg.weights)
            self.eset(iid, "reward", total)
            self.eset(iid, "progress", 0)
            self.reward_log.append((self.day, self.round, self.owners[iid], total, parts))
        return len(self.enterprises)

    def interventionist(self, graph, m):
        ex = self.exchange
        if self.iv is None:
            self.iv = InterventionistState(price_mode=self.cfg.interventionist_price)
            self.iv_hook = InterventionHook(self.iv)
            ex.open_account(IV_OWNER, "interventionist")
            ex.hooks = [self.iv_hook]
        self.iv_hook.armed = True
        # one lot at a time against the current book; nothing may rest
        while True:
            orders = liquidation_orders(self.iv, ex.book, ex.market)
            if not orders:
                break
            o = orders[0]
            res = ex.submit(o, hooks=[])
            if o.remaining:
                ex.book.cancel(o.order_id)
            self.iv.liquidations += 1
            self._after_trades(res.trades)
            if not res.trades:
                break
        exposure = sum(q * p for _, q, p in self.iv.lots) * self.cfg.tick_size
        values = [self.iv.net_position(), exposure, self.iv.interventions]
        for pid, v in zip(m.target_ids, values):
            if graph.properties[pid].value_kind != ValueKind.REAL:
                v = round(v)
            graph.set(pid, v, self.market_iid)
        return 1


@dataclass
class SimulationResult:
    days: list = field(default_factory=list)
    trade_log: list = field(default_factory=list)
    events: list = field(default_factory=list)
    reward_log: list = field(default_factory=list)
    faults: list = field(default_factory=list)
    iv_position: int | None = None
    tick_size: float = 0.01

    def closes(self):
        return np.array([d.close for d in self.days])

    def volumes(self):
        return np.array([d.volume for d in self.days], dtype=float)

    def breaches(self) -> int:
        return sum(d.breaches for d in self.days)

    def quarterly_prices(self):
        qs = {}
        for d in self.days:
            qs.setdefault(d.quarter, []).append(d.close)
        return np.array([np.mean(qs[q]) for q in sorted(qs)])

    def trade_prices(self):
        return np.array([t.price * self.tick_size for _, t in self.trade_log])

    def write_days(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DAY_HEADER)
            for d in self.days:
                w.writerow([d.day, d.quarter, repr(d.open), repr(d.high), repr(d.low),
                            repr(d.close), d.volume, d.trades, d.breaches])


def read_days(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [DayRecord(int(r["day"]), int(r["quarter"]), float(r["open"]), float(r["high"]),
                      float(r["low"]), float(r["close"]), int(r["volume"]), int(r["trades"]),
                      int(r["breaches"])) for r in rows]


class MarketSimulation:
    """One run of a scenario: a private graph copy, plan and environment."""

    def __init__(self, scenario: Scenario, seed=None, policies=None, frame=None, ops=(),
                 audit=None):
        if scenario.domain != "icofm":
            raise ContractError("not a market scenario")
        self.cfg = IcofmConfig.from_dict(scenario.config)
        self.graph = scenario.graph.copy()
        self.scheduler = Scheduler(self.graph, scenario.dag)
        self.env = IcofmEnv(self.cfg, seed, policies, frame)
        self.env.bind(self.graph)
        self.audit = audit
        for op in ops:
            P.apply_operation(self.graph, self.scheduler, op, self.cfg.operator_context())
        self.step = 0
        self.result = SimulationResult(tick_size=self.cfg.tick_size)

    def run(self, days) -> SimulationResult:
        env = self.env
        ex = env.exchange
        start = len(self.result.days)
        for day in range(start, start + days):
            env.begin_day(day)
            for r in range(self.cfg.rounds_per_day):
                env.begin_round(r)
                self.result.events.extend(execute_step(self.graph, self.scheduler.plan, env, self.step))
                self.step += 1
                if self.audit is not None:
                    self.audit(self, day, r)
            self._record_day(day)
        res = self.result
        res.trade_log = list(ex.trade_log)
        res.reward_log = env.reward_log
        res.faults = env.faults
        res.iv_position = ex.accounts[IV_OWNER].position() if IV_OWNER in ex.accounts else None
        return res

    def _record_day(self, day):
        ex = self.env.exchange
        m = ex.market
        tick = self.cfg.tick_size
        prices = [t.price for t in ex.trades_today]
        p0 = m.opening_price
        close = m.closing_price if m.phase == Phase.CLOSED else (prices[-1] if prices else m.previous_close)
        self.result.days.append(DayRecord(
            day, day // self.cfg.days_per_quarter, p0 * tick,
            (max(prices) if prices else p0) * tick, (min(prices) if prices else p0) * tick,
            close * tick, sum(t.quantity for t in ex.trades_today), len(prices),
            breach_count(prices, p0, m.lower_ratio, m.upper_ratio) if prices else 0))


# -- stabilization solutions -------------------------------------------------

def _plan_insert(plan, mid, before=None, after=None):
    steps = [s for s in plan if s != mid]
    if before is not None:
        i = steps.index(before)
    else:
        i = steps.index(after) + 1
    return steps[:i] + [mid] + steps[i:]


def close_market_ops(sc: Scenario, fn=None) -> list:
    """Install a close-market rule reading (last price, opening price) and
    writing ``halted``, scheduled right after order submission.

    ``fn`` is a protocol function reference; by default the built-in rule.
    """
    g = sc.graph
    reg = g.registry
    fn = fn or P.RegistryFn(reg.id_of("icofm.close_market"))
    new_mid = max(g.mechanisms) + 1
    src = [g.property_id("market.last_price"), g.property_id("market.opening_price")]
    plan = sc.scheduler().plan.steps
    return [P.add_edge(src, [g.property_id("market.halted")], fn),
            P.reschedule(_plan_insert(plan, new_mid, after=g.mechanism_id("submit_orders")))]


def restrict_order_type_ops(sc: Scenario) -> list:
    g = sc.graph
    new_mid = max(g.mechanisms) + 1
    plan = sc.scheduler().plan.steps
    return [P.add_edge([g.property_id("market.phase")], [g.property_id("market.mkt_only")],
                       P.RegistryFn(g.registry.id_of("icofm.restrict_order_type"))),
            P.reschedule(_plan_insert(plan, new_mid, before=g.mechanism_id("submit_orders")))]


def interventionist_ops(sc: Scenario) -> list:
    """Three market properties, the interventionist rule and a plan placing
    it ahead of order matching."""
    g = sc.graph
    base = max(g.properties) + 1
    new_mid = max(g.mechanisms) + 1
    src = [g.property_id(f"market.{n}") for n in ("last_price", "opening_price", "lower_ratio",
                                                  "upper_ratio")]
    plan = sc.scheduler().plan.steps
    return [P.add_node(MARKET, ValueKind.INTEGER), P.add_node(MARKET, ValueKind.REAL),
            P.add_node(MARKET, ValueKind.INTEGER),
            P.add_edge(src, [base, base + 1, base + 2],
                       P.RegistryFn(g.registry.id_of("icofm.interventionist"))),
            P.reschedule(_plan_insert(plan, new_mid, before=g.mechanism_id("submit_orders")))]


def factor_mask_op(sc: Scenario, mask) -> P.OperationVector:
    """Node elimination op switching factor properties by ``mask``."""
    g = sc.graph
    factor_ids = set(g.kinds[FACTORS].property_ids)
    bits = iter(mask)
    full = [int(next(bits)) if pid in factor_ids else int(g.properties[pid].active)
            for pid in sorted(g.properties)]
    return P.eliminate(P.Component.NODE, full)


def simulate(sc: Scenario, days, seed=None, ops=(), policies=None, frame=None) -> SimulationResult:
    return MarketSimulation(sc, seed, policies, frame, ops).run(days)
