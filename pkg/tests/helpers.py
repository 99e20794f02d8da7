"""Shared generators and frozen task definitions for the test suite."""
from __future__ import annotations

import numpy as np

from asos import protocol as P
from asos.symbolic import cgp, vm
from asos.symbolic.operators import OperatorContext, eval_operator


def random_fn(rng):
    if rng.random() < 0.6:
        return P.RegistryFn(int(rng.integers(0, 500)))
    return P.InlineProgram(tuple(int(x) for x in rng.integers(-3, 1000, int(rng.integers(0, 30)))))


def random_op(rng) -> P.OperationVector:
    """Any well-formed operation; ids need not exist in a graph."""
    k = int(rng.integers(7))
    ints = lambda lo, hi, n: tuple(int(x) for x in rng.integers(lo, hi, n))  # noqa: E731
    if k == 0:
        return P.alter_node(int(rng.integers(0, 200)),
                            None if rng.random() < 0.5 else int(rng.integers(0, 20)),
                            None if rng.random() < 0.5 else int(rng.integers(0, 5)))
    if k == 1:
        return P.alter_edge(int(rng.integers(0, 200)), random_fn(rng))
    if k == 2:
        return P.add_node(int(rng.integers(0, 20)), int(rng.integers(0, 5)))
    if k == 3:
        return P.add_edge(ints(0, 200, int(rng.integers(0, 5))), ints(0, 200, int(rng.integers(0, 4))),
                          random_fn(rng), ints(0, 200, int(rng.integers(0, 3))))
    if k == 4:
        return P.eliminate(P.Component.NODE, ints(0, 2, int(rng.integers(0, 120))))
    if k == 5:
        return P.eliminate(P.Component.HYPEREDGE, ints(0, 2, int(rng.integers(0, 90))))
    return P.reschedule(ints(0, 200, int(rng.integers(0, 100))))


# -- threshold-rule recovery task -------------------------------------------------

# frozen from a pilot on seeds 100..119 (18/20 solved); the test uses seeds 0..19
RECOVERY_BUDGET = dict(mu=4, lam=16, mutation_rate=0.15, max_generations=200, cols=20,
                       levels_back=20)


def recovery_task():
    """100 (price, reference) points straddling the upper threshold; the
    target is the LimUp indicator at the default 10% ratio."""
    ratios = np.linspace(0.805, 1.395, 100)
    ref = 50 + 100 * np.random.default_rng(7).random(100)
    X = np.column_stack([ref * ratios, ref])
    ctx = OperatorContext()
    y = np.array([eval_operator("LimUp", [a, b], ctx) for a, b in X])
    return X, y


def recovery_fitness(X, y):
    def fitness(genome):
        Y, _ = vm.evaluate(cgp.decode_genome(genome), X)
        return float(np.sum(Y[:, 0] != y))

    return fitness


# -- order streams ----------------------------------------------------------------

def random_stream(rng, n_max=200, lo=45, hi=55, owners=6, p_market=0.15):
    """(side, price|None, qty, owner) tuples with integer prices."""
    n = int(rng.integers(1, n_max + 1))
    out = []
    for _ in range(n):
        side = 1 if rng.random() < 0.5 else -1
        price = None if rng.random() < p_market else int(rng.integers(lo, hi + 1))
        out.append((side, price, int(rng.integers(1, 20)), f"a{int(rng.integers(owners))}"))
    return out


def run_stream(stream):
    """Feed a stream to the book and to the reference matcher; returns both
    trade lists in the same tuple layout."""
    from asos.icofm.book import Order, OrderBook, OrderType, Side

    from oracles import NaiveMatcher

    book, ref = OrderBook(), NaiveMatcher()
    got, want = [], []
    for i, (side, price, qty, owner) in enumerate(stream):
        o = Order(Side(side), qty, price, OrderType.MKT if price is None else OrderType.LMT,
                  owner=owner, timestamp=i, order_id=i)
        got.extend((t.price, t.quantity, t.buyer, t.seller, t.buy_order, t.sell_order)
                   for t in book.match(o))
        want.extend(ref.submit(i, side, price, qty, owner))
        assert not book.crossed()
    return got, want


def random_auction(rng):
    """(orders, previous_close) for a call auction with integer prices."""
    n = int(rng.integers(0, 30))
    orders = [(1 if rng.random() < 0.5 else -1, int(rng.integers(40, 61)), int(rng.integers(1, 15)))
              for _ in range(n)]
    return orders, int(rng.integers(40, 61))


def exchange_run(seed, days=50, n_agents=6, settle_every=10):
    """Random multi-day trading on one exchange with per-day audits.

    Returns a list of failure strings (empty when every audit held).
    """
    from asos.icofm.book import Order, OrderType, Side
    from asos.icofm.exchange import Exchange

    rng = np.random.default_rng(seed)
    ex = Exchange(5000, penalty=7)
    for i in range(n_agents):
        ex.open_account(f"a{i}", cash=0, inventory=int(rng.integers(0, 40)))
    owners = sorted(ex.accounts)
    bad = []
    for day in range(days):
        ex.new_day(day, settle_day=(day + 1) % settle_every == 0)
        cash0 = sum(a.cash for a in ex.accounts.values())
        inv0 = sum(a.inventory for a in ex.accounts.values())
        mid = ex.market.previous_close
        for _ in range(int(rng.integers(0, 15))):
            ex.submit(Order(Side(1 if rng.random() < 0.5 else -1), int(rng.integers(1, 10)),
                            int(mid + rng.integers(-60, 61)), owner=owners[rng.integers(n_agents)],
                            contract_month=ex.market.contract_month))
        ex.open()
        for _ in range(int(rng.integers(0, 40))):
            side = Side(1 if rng.random() < 0.5 else -1)
            if rng.random() < 0.2:
                o = Order(side, int(rng.integers(1, 10)), None, OrderType.MKT,
                          owner=owners[rng.integers(n_agents)], contract_month=ex.market.contract_month)
            else:
                o = Order(side, int(rng.integers(1, 10)), int(mid + rng.integers(-60, 61)),
                          owner=owners[rng.integers(n_agents)], contract_month=ex.market.contract_month)
            ex.submit(o)
            if ex.net_position() != 0:
                bad.append(f"day {day}: positions not zero-sum")
            if ex.book.crossed():
                bad.append(f"day {day}: crossed book")
        ex.close()
        posts, rep = ex.settle()
        if sum(p.amount for p in posts) != 0:
            bad.append(f"day {day}: postings sum to {sum(p.amount for p in posts)}")
        if sum(a.cash for a in ex.accounts.values()) != cash0:
            bad.append(f"day {day}: cash not conserved")
        if sum(a.inventory for a in ex.accounts.values()) != inv0:
            bad.append(f"day {day}: inventory not conserved")
        if any(a.inventory < 0 for a in ex.accounts.values()):
            bad.append(f"day {day}: negative inventory")
        if rep is not None and ex.open_interest() != 0:
            bad.append(f"day {day}: open interest after delivery")
    return bad


# -- surrogate gradient check ---------------------------------------------------------

def surrogate_gradcheck(seed, gate="bernoulli", batch=16, h=1e-6, margin=1e-3):
    """Relative error between the analytic clipped-surrogate gradient and
    central differences, at a random point of a 2-layer net.

    Samples whose ratio sits within ``margin`` (in log space) of a clip
    kink are dropped so the loss is smooth over the stencil.
    """
    from asos.hybrid.happo import surrogate
    from asos.hybrid.policy import GatedPolicy, NeuralPolicy

    rng = np.random.default_rng(seed)
    net = NeuralPolicy(3, [-1.0, 0.0], [1.0, 2.0], hidden=(8,), gate=gate, rng=rng)
    net.net.params = [p + rng.normal(0, 0.5, p.shape) for p in net.net.params]
    pol = GatedPolicy(lambda o: np.zeros(2), net)
    obs = rng.normal(size=(batch, 3))
    x = rng.uniform(0.05, 0.95, (batch, 2))
    g = (rng.random(batch) < 0.5).astype(float) if gate == "bernoulli" else rng.uniform(0.05, 0.95, batch)
    clip = 0.2
    logp_old = net.log_prob(obs, x, g) + rng.normal(0, 0.3, batch)
    lr = net.log_prob(obs, x, g) - logp_old
    keep = (np.abs(lr - np.log(1 - clip)) > margin) & (np.abs(lr - np.log(1 + clip)) > margin)
    obs, x, g, logp_old = obs[keep], x[keep], g[keep], logp_old[keep]
    M = rng.normal(size=obs.shape[0])
    _, grads, _ = surrogate(pol, obs, x, g, logp_old, M, clip)
    analytic = np.concatenate([a.ravel() for a in grads])
    flat = net.net.get_flat()
    numeric = np.zeros_like(flat)
    for k in range(flat.size):
        for sgn in (1, -1):
            f = flat.copy()
            f[k] += sgn * h
            net.net.set_flat(f)
            numeric[k] += sgn * surrogate(pol, obs, x, g, logp_old, M, clip)[0]
        numeric[k] /= 2 * h
    net.net.set_flat(flat)
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12))


def reference_clipped_update(pol, obs, x, g, A, cfg, rng, opt):
    """Single-agent clipped policy-gradient epochs written out directly."""
    logp_old = pol.net.log_prob(obs, x, g)
    n = len(A)
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for s in range(0, n, cfg.minibatch):
            idx = perm[s:s + cfg.minibatch]
            ratio = np.exp(pol.net.log_prob(obs[idx], x[idx], g[idx]) - logp_old[idx])
            adv = A[idx]
            unclipped = ratio * adv
            clipped = np.clip(ratio, 1 - cfg.clip, 1 + cfg.clip) * adv
            coef = np.where(unclipped <= clipped, -adv * ratio / len(idx), 0.0)
            _, grads = pol.net.log_prob_grad(obs[idx], x[idx], g[idx], coef)
            opt.step(pol.net.net.params, grads)
