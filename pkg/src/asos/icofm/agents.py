"""Enterprise and region observations, expert rules, action decoding and
reward components.

Experts are pure functions of the observation (a private signal drawn by
the environment is part of it), so an expert can sit inside a gated policy
and be reproduced bit-exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .book import Order, OrderType, Side

ROLES = ("producer", "consumer", "speculator")

ENTERPRISE_OBS = ("is_producer", "is_consumer", "is_speculator", "inventory", "position",
                  "task", "last_vs_anchor", "open_vs_anchor", "spread", "pressure",
                  "round_frac", "settle_in", "signal")
ENTERPRISE_ACT_LOW = np.array([-1.0, -0.05, 0.0, 0.0])
ENTERPRISE_ACT_HIGH = np.array([1.0, 0.05, 1.0, 1.0])

# days-to-settlement is observed as min(days, SETTLE_HORIZON) / SETTLE_HORIZON
SETTLE_HORIZON = 10

REGION_OBS = ("production", "consumption", "supply_pressure", "demand_pressure",
              "price_change", "market_share", "signal")
REGION_ACT_LOW = np.array([-0.05, -0.05])
REGION_ACT_HIGH = np.array([0.05, 0.05])


@dataclass(frozen=True)
class RewardWeights:
    task: float = 1.0
    settlement: float = 1.0
    profit: float = 0.5
    share: float = 1.0
    growth: float = 1.0
    fluctuation: float = 5.0
    margin: float = 0.5


@dataclass
class AgentConfig:
    max_qty: int = 20
    side_threshold: float = 0.33
    mkt_threshold: float = 0.8
    producer_discount: float = 0.003
    consumer_premium: float = 0.003
    noise: float = 0.01
    flatten_days: int = 2
    weights: RewardWeights = field(default_factory=RewardWeights)


def enterprise_obs(role, inventory, position, task, last, opening, anchor, bid, ask,
                   pressure, round_frac, settle_in, signal, scale):
    r = ROLES.index(role) if isinstance(role, str) else int(role)
    onehot = [float(r == i) for i in range(3)]
    spread = ((ask - bid) / anchor) if (bid is not None and ask is not None) else 0.0
    return np.array(onehot + [inventory / scale, position / scale, task / scale,
                              last / anchor - 1.0, opening / anchor - 1.0, spread, pressure,
                              round_frac, settle_in, signal])


def expert_enterprise(obs, cfg: AgentConfig = AgentConfig()):
    """Baseline trading rule; returns ``[side, price offset, qty fraction, type]``."""
    o = np.asarray(obs, dtype=float)
    producer, consumer = o[0] > 0.5, o[1] > 0.5
    position, task, settle_in, signal = o[4], o[5], o[11], o[12]
    tilt = cfg.noise * signal
    if producer:
        if task <= 0:
            return np.array([0.0, 0.0, 0.0, 0.0])
        return np.array([-1.0, -cfg.producer_discount + tilt, min(1.0, task), 0.0])
    if consumer:
        if task <= 0:
            return np.array([0.0, 0.0, 0.0, 0.0])
        return np.array([1.0, cfg.consumer_premium + tilt, min(1.0, task), 0.0])
    # speculator: flatten ahead of settlement, otherwise trade the signal
    if settle_in * SETTLE_HORIZON <= cfg.flatten_days and position != 0:
        return np.array([-np.sign(position), -np.sign(position) * 0.01, min(1.0, abs(position)), 0.0])
    side = float(np.sign(signal)) if abs(signal) > 0.3 else 0.0
    kind = 1.0 if abs(signal) > 0.95 else 0.0
    return np.array([side, tilt, 0.25, kind])


def decode_enterprise_action(u, owner, anchor_ticks, call_phase, month, cfg: AgentConfig = AgentConfig()):
    """Turn an action vector into an order (or ``None``)."""
    u = np.clip(np.asarray(u, dtype=float), ENTERPRISE_ACT_LOW, ENTERPRISE_ACT_HIGH)
    if u[0] > cfg.side_threshold:
        side = Side.BID
    elif u[0] < -cfg.side_threshold:
        side = Side.ASK
    else:
        return None
    qty = int(round(u[2] * cfg.max_qty))
    if qty < 1:
        return None
    if u[3] > cfg.mkt_threshold and not call_phase:
        return Order(side, qty, None, OrderType.MKT, owner=owner, contract_month=month)
    price = max(1, int(round(anchor_ticks * (1.0 + u[1]))))
    return Order(side, qty, price, OrderType.LMT, owner=owner, contract_month=month)


def region_obs(production, consumption, supply_pressure, demand_pressure, price_change,
               market_share, signal, scale):
    return np.array([production / scale, consumption / scale, supply_pressure, demand_pressure,
                     price_change, market_share, signal])


def expert_region(obs):
    """Production follows price and supply tightness; consumption shrinks with price."""
    o = np.asarray(obs, dtype=float)
    change, sp, dp, signal = o[4], o[2], o[3], o[6]
    prod = np.clip(0.3 * change + 0.5 * sp + 0.002 * signal, -0.05, 0.05)
    cons = np.clip(-0.2 * change + 0.5 * dp, -0.05, 0.05)
    return np.array([prod, cons])


def enterprise_reward(task_done, shortfall, cash_change, scale, w: RewardWeights = RewardWeights()):
    """Weighted task, settlement and profit terms; returns ``(total, parts)``."""
    parts = {"task": task_done / scale, "settlement": -shortfall / scale,
             "profit": cash_change / scale}
    total = w.task * parts["task"] + w.settlement * parts["settlement"] + w.profit * parts["profit"]
    return total, parts


def region_reward(market_share, growth, price_change, revenue, cost, scale,
                  w: RewardWeights = RewardWeights()):
    """Weighted share, growth, fluctuation and margin terms; ``(total, parts)``.

    The fluctuation term is ``-|price change|`` so larger swings lower the
    reward with everything else fixed.
    """
    parts = {"share": market_share, "growth": growth, "fluctuation": -abs(price_change),
             "margin": (revenue - cost) / scale}
    total = (w.share * parts["share"] + w.growth * parts["growth"]
             + w.fluctuation * parts["fluctuation"] + w.margin * parts["margin"])
    return total, parts


def recompute_reward(parts, w: RewardWeights = RewardWeights()) -> float:
    """Total from logged components (audit helper)."""
    return float(sum(getattr(w, k) * v for k, v in parts.items()))
