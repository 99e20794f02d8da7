"""The crude-oil futures market as a hypergraph.

Four object kinds (international factors, market, regions, enterprises)
carry 98 properties by default; 76 mechanisms (60 factor impacts plus the
market, region and enterprise rules) run once per intraday round.  World
rules dispatch to methods of :class:`asos.icofm.simulation.IcofmEnv`.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from ..hypergraph import Hypergraph, ValueKind
from ..registry import WORLD, FunctionRegistry
from ..scenario import Scenario
from ..scheduler import ScheduleDag
from ..symbolic.operators import OperatorContext, eval_operator
from .agents import ROLES
from .data import CATEGORIES

FACTORS, MARKET, REGION, ENTERPRISE = 0, 1, 2, 3

MARKET_PROPS = [
    ("phase", ValueKind.CATEGORICAL), ("day", ValueKind.INTEGER), ("round", ValueKind.INTEGER),
    ("opening_price", ValueKind.REAL), ("last_price", ValueKind.REAL),
    ("closing_price", ValueKind.REAL), ("previous_close", ValueKind.REAL),
    ("volume_today", ValueKind.INTEGER), ("best_bid", ValueKind.REAL), ("best_ask", ValueKind.REAL),
    ("halted", ValueKind.BOOLEAN), ("mkt_only", ValueKind.BOOLEAN),
    ("lower_ratio", ValueKind.REAL), ("upper_ratio", ValueKind.REAL),
]
REGION_PROPS = [
    ("production", ValueKind.REAL), ("consumption", ValueKind.REAL),
    ("supply_pressure", ValueKind.REAL), ("demand_pressure", ValueKind.REAL),
    ("market_share", ValueKind.REAL), ("economic_growth", ValueKind.REAL),
    ("unit_cost", ValueKind.REAL), ("revenue", ValueKind.REAL), ("reward", ValueKind.REAL),
    ("stance", ValueKind.SEQUENCE), ("production_change", ValueKind.REAL),
    ("consumption_change", ValueKind.REAL),
]
ENTERPRISE_PROPS = [
    ("role", ValueKind.CATEGORICAL), ("region", ValueKind.INTEGER), ("cash", ValueKind.REAL),
    ("inventory", ValueKind.INTEGER), ("position", ValueKind.INTEGER), ("task", ValueKind.INTEGER),
    ("order_side", ValueKind.INTEGER), ("order_type", ValueKind.CATEGORICAL),
    ("order_price", ValueKind.REAL), ("order_qty", ValueKind.INTEGER),
    ("reward", ValueKind.REAL), ("progress", ValueKind.INTEGER),
]

# category -> pressure it feeds
PRESSURE_OF = {"supply": "supply_pressure", "geopolitics": "supply_pressure",
               "demand": "demand_pressure", "finance": "demand_pressure",
               "policy": "demand_pressure"}

# (name, scope, sources, targets); names prefixed by kind
OTHER_MECHANISMS = [
    ("reset_pressure", "instance", ["region.supply_pressure", "region.demand_pressure"],
     ["region.supply_pressure", "region.demand_pressure"]),
    ("region_adjust", WORLD, ["region.production", "region.consumption", "region.supply_pressure",
                              "region.demand_pressure", "market.last_price", "market.previous_close"],
     ["region.production", "region.consumption", "region.production_change",
      "region.consumption_change"]),
    ("stance_update", "instance", ["region.stance", "region.market_share"], ["region.stance"]),
    ("supply_flow", WORLD, ["region.production", "region.consumption", "enterprise.role",
                            "enterprise.region", "enterprise.inventory", "enterprise.task"],
     ["enterprise.inventory", "enterprise.task"]),
    ("enterprise_decide", WORLD, ["enterprise.role", "enterprise.inventory", "enterprise.position",
                                  "enterprise.task", "market.last_price", "market.opening_price",
                                  "market.best_bid", "market.best_ask", "region.supply_pressure",
                                  "region.demand_pressure"],
     ["enterprise.order_side", "enterprise.order_type", "enterprise.order_price",
      "enterprise.order_qty"]),
    ("submit_orders", WORLD, ["enterprise.order_side", "enterprise.order_type",
                              "enterprise.order_price", "enterprise.order_qty", "market.halted",
                              "market.mkt_only"],
     ["market.last_price", "market.volume_today", "enterprise.position", "enterprise.task",
      "enterprise.progress"]),
    ("call_auction", WORLD, ["market.phase", "market.previous_close"],
     ["market.opening_price", "market.last_price", "market.phase"]),
    ("quote_update", WORLD, ["market.phase", "market.last_price"],
     ["market.best_bid", "market.best_ask"]),
    ("close_day", WORLD, ["market.round", "market.last_price"],
     ["market.closing_price", "market.phase"]),
    ("mark_to_market", WORLD, ["market.closing_price", "enterprise.position"],
     ["enterprise.cash", "market.previous_close"]),
    ("delivery", WORLD, ["market.day", "market.closing_price", "enterprise.position",
                         "enterprise.inventory"],
     ["enterprise.inventory", "enterprise.cash", "enterprise.position"]),
    ("market_share", WORLD, ["region.production"], ["region.market_share"]),
    ("economy", "instance", ["region.consumption_change", "region.economic_growth"],
     ["region.economic_growth"]),
    ("cost_revenue", "instance", ["region.production", "market.last_price"], ["region.revenue"]),
    ("region_reward", WORLD, ["region.market_share", "region.economic_growth", "region.revenue",
                              "region.unit_cost", "region.production", "market.last_price",
                              "market.previous_close"], ["region.reward"]),
    ("enterprise_reward", WORLD, ["enterprise.progress", "enterprise.cash", "enterprise.role"],
     ["enterprise.reward"]),
]

WORLD_RULES = [name for name, scope, _, _ in OTHER_MECHANISMS if scope == WORLD] + ["interventionist"]


@dataclass
class IcofmConfig:
    seed: int = 0
    n_regions: int = 3
    producers: int = 3
    consumers: int = 3
    speculators: int = 2
    categories: tuple = CATEGORIES
    factors_per_category: int = 12
    rounds_per_day: int = 6
    days_per_quarter: int = 5
    settle_cycle: int = 20
    tick_size: float = 0.01
    initial_price: float = 60.0
    lower_ratio: float = 0.9
    upper_ratio: float = 1.1
    delivery_penalty: float = 1.0
    initial_cash: float = 1e6
    base_production: float = 30.0
    base_consumption: float = 30.0
    unit_cost: float = 40.0
    factor_scale: float = 0.0015
    drift_pressure: float = 0.5
    drift_imbalance: float = 0.05
    # weight of yesterday's valuation anchor against yesterday's close
    anchor_memory: float = 0.5
    factor_seed: int = 0
    # scripted participants: [{"day", "round", "side", "quantity"}] market orders
    shocks: list = field(default_factory=list)
    # deep-book quotes as fractions of the opening price, posted every round
    stub_levels: list = field(default_factory=list)
    stub_quantity: int = 5
    stub_days: list | None = None  # None: every day
    interventionist_price: str = "inside"
    agent: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.lower_ratio < 1 < self.upper_ratio:
            raise ContractError("bounds must satisfy 0 < lower < 1 < upper")
        if self.rounds_per_day < 2:
            raise ContractError("a day needs the auction round plus one trading round")
        if min(self.n_regions, self.producers, self.consumers) < 1 or self.speculators < 0:
            raise ContractError("need at least one region, producer and consumer")
        if self.settle_cycle < 1 or self.days_per_quarter < 1:
            raise ContractError("settle cycle and quarter length must be positive")
        self.categories = tuple(self.categories)

    @classmethod
    def from_dict(cls, d) -> "IcofmConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ContractError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["categories"] = list(self.categories)
        return d

    def operator_context(self) -> OperatorContext:
        return OperatorContext(upper_limit_ratio=self.upper_ratio - 1.0,
                               lower_limit_ratio=1.0 - self.lower_ratio)

    def factor_names(self):
        return [f"{c}_{j:02d}" for c in self.categories for j in range(self.factors_per_category)]

    def factor_weights(self):
        rng = np.random.default_rng(self.factor_seed)
        return self.factor_scale * rng.choice([-1.0, 1.0], size=len(self.factor_names()))

    def ticks(self, price) -> int:
        return int(round(price / self.tick_size))


def _impact(weight):
    def fn(f, p):
        return p + weight * f
    return fn


def _reset(sp, dp):
    return np.zeros_like(sp, dtype=float), np.zeros_like(dp, dtype=float)


def _stance(stance, share):
    return tuple(0.9 * s + 0.1 * share for s in stance)


def _economy(dc, g):
    return 0.8 * g + 0.2 * dc


def _revenue(production, last_price):
    return production * last_price


def build_registry(cfg: IcofmConfig) -> FunctionRegistry:
    reg = FunctionRegistry()
    for name, w in zip(cfg.factor_names(), cfg.factor_weights()):
        reg.add(f"icofm.impact.{name}", _impact(float(w)), 2, 1, vectorized=True)
    reg.add("icofm.reset_pressure", _reset, 2, 2, vectorized=True)
    reg.add("icofm.stance_update", _stance, 2, 1)
    reg.add("icofm.economy", _economy, 2, 1, vectorized=True)
    reg.add("icofm.cost_revenue", _revenue, 2, 1, vectorized=True)
    for name in WORLD_RULES:
        reg.add(f"icofm.{name}", _dispatch(name), None, None, scope=WORLD)
    ctx = cfg.operator_context()

    def close_market(live, p0):
        return eval_operator("Or", [eval_operator("LimUp", [live, p0], ctx),
                                    eval_operator("LimDown", [live, p0], ctx)], ctx)

    reg.add("icofm.close_market", close_market, 2, 1)
    reg.add("icofm.restrict_order_type", lambda phase: 1, 1, 1)
    return reg


def _dispatch(name):
    def fn(world, mechanism):
        if world.env is None:
            raise ContractError(f"world rule {name!r} needs a market environment")
        return getattr(world.env, name)(world.graph, mechanism)
    fn.__name__ = name
    return fn


def build_graph(cfg: IcofmConfig, registry=None) -> tuple:
    """Returns ``(graph, dag)`` with the default plan encoded in the DAG."""
    g = Hypergraph(registry if registry is not None else build_registry(cfg))
    g.add_kind("international_factors", FACTORS)
    g.add_kind("market", MARKET)
    g.add_kind("region", REGION)
    g.add_kind("enterprise", ENTERPRISE)
    pid = {}
    for name in cfg.factor_names():
        pid[f"factor.{name}"] = g.add_property(FACTORS, ValueKind.REAL, f"factor.{name}")
    for kind, props, prefix in ((MARKET, MARKET_PROPS, "market"), (REGION, REGION_PROPS, "region"),
                                (ENTERPRISE, ENTERPRISE_PROPS, "enterprise")):
        for name, vk in props:
            pid[f"{prefix}.{name}"] = g.add_property(kind, vk, f"{prefix}.{name}")

    g.add_instance(FACTORS)
    p0 = cfg.ticks(cfg.initial_price) * cfg.tick_size
    g.add_instance(MARKET, {pid["market.opening_price"]: p0, pid["market.last_price"]: p0,
                            pid["market.closing_price"]: p0, pid["market.previous_close"]: p0,
                            pid["market.lower_ratio"]: cfg.lower_ratio,
                            pid["market.upper_ratio"]: cfg.upper_ratio})
    n = cfg.n_regions
    mid_r = (n - 1) / 2
    for r in range(n):
        g.add_instance(REGION, {
            pid["region.production"]: cfg.base_production * (1 + 0.1 * (r - mid_r)),
            pid["region.consumption"]: cfg.base_consumption * (1 - 0.1 * (r - mid_r)),
            pid["region.market_share"]: 1.0 / n,
            pid["region.unit_cost"]: cfg.unit_cost,
            pid["region.stance"]: [0.0] * n,
        })
    for role, count in zip(ROLES, (cfg.producers, cfg.consumers, cfg.speculators)):
        for k in range(count):
            g.add_instance(ENTERPRISE, {pid["enterprise.role"]: ROLES.index(role),
                                        pid["enterprise.region"]: k % n,
                                        pid["enterprise.cash"]: cfg.initial_cash})

    impacts = []
    for name, cat in zip(cfg.factor_names(),
                         [c for c in cfg.categories for _ in range(cfg.factors_per_category)]):
        target = f"region.{PRESSURE_OF.get(cat, 'demand_pressure')}"
        impacts.append(g.add_mechanism([pid[f"factor.{name}"], pid[target]], [pid[target]],
                                       f"icofm.impact.{name}", name=f"impact.{name}"))
    others = []
    for name, _, src, tgt in OTHER_MECHANISMS:
        others.append(g.add_mechanism([pid[s] for s in src], [pid[t] for t in tgt],
                                      f"icofm.{name}", name=name))
    # reset -> every impact -> region_adjust -> ... in listed order
    reset, adjust = others[0], others[1]
    edges = {(reset, k) for k in impacts} | {(k, adjust) for k in impacts}
    edges |= {(a, b) for a, b in zip(others[1:], others[2:])}
    dag = ScheduleDag(set(impacts) | set(others), edges)
    return g, dag


def build_scenario(cfg: IcofmConfig | None = None) -> Scenario:
    cfg = cfg or IcofmConfig()
    g, dag = build_graph(cfg)
    return Scenario(g, dag, cfg.to_dict(), "icofm")


def shock_fixture(seed=0, **overrides) -> IcofmConfig:
    """Scripted-shock scenario: deep-book stub quotes and a two-round sell-off
    that trades through the lower bound without stabilization."""
    base = dict(
        seed=seed,
        stub_levels=[0.8, 0.85, 0.9, 1.1, 1.15, 1.2],
        stub_quantity=5,
        shocks=[{"day": 2, "round": 2, "side": "ask", "quantity": 80},
                {"day": 2, "round": 3, "side": "ask", "quantity": 80}],
        stub_days=[2],
        settle_cycle=1000,
    )
    base.update(overrides)
    return IcofmConfig.from_dict(base)
