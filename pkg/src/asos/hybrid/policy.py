"""Gated expert/neural policy with Beta-distributed continuous actions.

The net emits Beta shape parameters for every action dimension plus a gate
head. The executed action is ``u = g * a + (1 - g) * expert(obs)``; with a
Bernoulli gate exactly one source is used per step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln, digamma, expit

from ..errors import ContractError, PolicyError
from .nets import MLP

BERNOULLI = "bernoulli"
BETA = "beta"
GATES = (BERNOULLI, BETA)

_EPS = 1e-9


def softplus(z):
    return np.logaddexp(0.0, z)


def beta_log_prob(x, alpha, beta):
    """Log density of Beta(alpha, beta) at ``x`` in (0, 1)."""
    x = np.clip(x, _EPS, 1.0 - _EPS)
    return (alpha - 1.0) * np.log(x) + (beta - 1.0) * np.log1p(-x) - betaln(alpha, beta)


def beta_log_prob_grads(x, alpha, beta):
    """Partial derivatives of :func:`beta_log_prob` w.r.t. alpha and beta."""
    x = np.clip(x, _EPS, 1.0 - _EPS)
    ab = digamma(alpha + beta)
    return np.log(x) - digamma(alpha) + ab, np.log1p(-x) - digamma(beta) + ab


def sample_beta_action(alpha, beta, low, high, rng):
    """``low + (high - low) * X`` with ``X ~ Beta(alpha, beta)``; returns ``(action, x, logp)``.

    ``logp`` is the density of the scaled action (change of variables included).
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    if np.any(alpha <= 0) or np.any(beta <= 0):
        raise ContractError("Beta shape parameters must be positive")
    if np.any(low >= high):
        raise ContractError("action bounds need low < high")
    x = rng.beta(alpha, beta)
    logp = beta_log_prob(x, alpha, beta) - np.log(high - low)
    return low + (high - low) * x, x, logp


class RunningNormalizer:
    """Affine pre-scale to [-1, 1] from declared raw bounds, then running
    standardization (Chan/Welford merge), then clipping."""

    def __init__(self, low, high, clip=5.0, eps=1e-8):
        self.low = np.asarray(low, dtype=float)
        self.high = np.asarray(high, dtype=float)
        if self.low.shape != self.high.shape or np.any(self.high <= self.low):
            raise ContractError("normalizer bounds need low < high per dimension")
        self.clip = clip
        self.eps = eps
        self.mean = np.zeros(self.low.shape)
        self.var = np.ones(self.low.shape)
        self.m2 = np.zeros(self.low.shape)
        self.count = 0

    def prescale(self, x):
        return 2.0 * (np.asarray(x, dtype=float) - self.low) / (self.high - self.low) - 1.0

    def update(self, x):
        b = np.atleast_2d(self.prescale(x))
        n = b.shape[0]
        if n == 0:
            return
        bmean = b.mean(axis=0)
        bm2 = ((b - bmean) ** 2).sum(axis=0)
        tot = self.count + n
        delta = bmean - self.mean
        self.mean = self.mean + delta * n / tot
        self.m2 = self.m2 + bm2 + delta * delta * self.count * n / tot
        self.count = tot
        self.var = self.m2 / tot

    def normalize(self, x, update=False):
        if update:
            self.update(x)
        z = (self.prescale(x) - self.mean) / np.sqrt(self.var + self.eps)
        return np.clip(z, -self.clip, self.clip)

    __call__ = normalize

    def state(self):
        return {"mean": self.mean, "var": self.var, "m2": self.m2,
                "count": np.array([self.count], dtype=float)}

    def load_state(self, d):
        self.mean = np.asarray(d["mean"], dtype=float).copy()
        self.var = np.asarray(d["var"], dtype=float).copy()
        self.m2 = np.asarray(d["m2"], dtype=float).copy()
        self.count = int(np.asarray(d["count"]).ravel()[0])


@dataclass
class Act:
    u: np.ndarray       # executed action
    a: np.ndarray       # net action (scaled Beta sample)
    g: float            # gate value
    logp: float         # log-probability of (a, g) under the sampling policy
    x: np.ndarray = field(default=None, repr=False)  # unscaled Beta sample in (0, 1)


class NeuralPolicy:
    """MLP head: ``2 * act_dim`` Beta logits then gate logit(s).

    ``gate`` is ``"bernoulli"`` (g in {0, 1}) or ``"beta"`` (g in [0, 1]).
    Hidden recurrent state is carried through the interface at size zero.
    """

    def __init__(self, obs_dim, act_low, act_high, hidden=(32, 32), activation="tanh",
                 gate=BERNOULLI, gate_bias=0.0, rng=None):
        if gate not in GATES:
            raise ValueError(f"unknown gate kind {gate!r}")
        self.obs_dim = int(obs_dim)
        self.act_low = np.asarray(act_low, dtype=float)
        self.act_high = np.asarray(act_high, dtype=float)
        self.act_dim = self.act_low.size
        self.gate = gate
        self.n_gate = 1 if gate == BERNOULLI else 2
        self.hidden_size = 0
        out = 2 * self.act_dim + self.n_gate
        self.net = MLP((self.obs_dim, *hidden, out), activation, rng)
        if gate == BERNOULLI:
            self.net.params[-1][-1] = gate_bias
        else:
            self.net.params[-1][-2] = gate_bias

    # raw head -> distribution parameters
    def heads(self, out):
        k = self.act_dim
        alpha = softplus(out[:, :k]) + 1.0
        beta = softplus(out[:, k:2 * k]) + 1.0
        return alpha, beta, out[:, 2 * k:]

    def gate_prob(self, glogit):
        return expit(glogit[:, 0])

    def scale(self, x):
        return self.act_low + (self.act_high - self.act_low) * x

    def unscale(self, a):
        return (np.asarray(a, dtype=float) - self.act_low) / (self.act_high - self.act_low)

    def log_prob(self, obs, x, g, out=None):
        """Log-probability of unscaled samples ``x`` and gates ``g`` (batched).

        With a Bernoulli gate the action term is masked by ``g``: when the
        expert acted, the net's sample does not reach the environment.
        """
        if out is None:
            out = self.net(obs)
        alpha, beta, gl = self.heads(out)
        la = beta_log_prob(x, alpha, beta).sum(axis=1) - np.log(self.act_high - self.act_low).sum()
        g = np.asarray(g, dtype=float)
        if self.gate == BERNOULLI:
            lg = g * np.log(expit(gl[:, 0]) + 0.0) + (1 - g) * np.log(expit(-gl[:, 0]))
            return lg + g * la
        ga, gb = softplus(gl[:, 0]) + 1.0, softplus(gl[:, 1]) + 1.0
        return beta_log_prob(g, ga, gb) + la

    def log_prob_grad(self, obs, x, g, coef):
        """Returns ``(logp, grads)`` where grads are of ``sum(coef * logp)``."""
        out, cache = self.net.forward(obs)
        k = self.act_dim
        logp = self.log_prob(obs, x, g, out)
        alpha, beta, gl = self.heads(out)
        g = np.asarray(g, dtype=float)
        coef = np.asarray(coef, dtype=float)
        w = coef * g if self.gate == BERNOULLI else coef
        da, db = beta_log_prob_grads(x, alpha, beta)
        d = np.zeros_like(out)
        d[:, :k] = w[:, None] * da * expit(out[:, :k])
        d[:, k:2 * k] = w[:, None] * db * expit(out[:, k:2 * k])
        if self.gate == BERNOULLI:
            d[:, 2 * k] = coef * (g - expit(gl[:, 0]))
        else:
            ga, gb = softplus(gl[:, 0]) + 1.0, softplus(gl[:, 1]) + 1.0
            dga, dgb = beta_log_prob_grads(g, ga, gb)
            d[:, 2 * k] = coef * dga * expit(gl[:, 0])
            d[:, 2 * k + 1] = coef * dgb * expit(gl[:, 1])
        return logp, self.net.backward(cache, d)

    def sample(self, obs, rng, deterministic=False):
        """``(a, x, g)`` for a single observation."""
        out = self.net(np.asarray(obs, dtype=float)[None, :])
        alpha, beta, gl = self.heads(out)
        alpha, beta = alpha[0], beta[0]
        if deterministic:
            x = alpha / (alpha + beta)
        else:
            x = rng.beta(alpha, beta)
        if self.gate == BERNOULLI:
            p = float(self.gate_prob(gl)[0])
            if deterministic:
                g = 1.0 if p > 0.5 else 0.0
            else:
                g = 1.0 if rng.random() < p else 0.0
        else:
            ga, gb = softplus(gl[0, 0]) + 1.0, softplus(gl[0, 1]) + 1.0
            g = float(ga / (ga + gb)) if deterministic else float(rng.beta(ga, gb))
        return self.scale(x), x, g


class GatedPolicy:
    """Expert rule plus neural policy joined by a switch gate.

    ``fixed_gate`` pins the gate to a constant (0 reproduces the expert,
    1 the net); ``None`` lets the gate head decide.
    """

    def __init__(self, expert, net: NeuralPolicy, fixed_gate=None):
        self.expert = expert
        self.net = net
        self.fixed_gate = fixed_gate

    def __call__(self, obs):
        return gated_act(self, obs, None, deterministic=True).u


def blend(g, a, e):
    """Switch-gate blend; exact selection at g in {0, 1}."""
    if g == 0:
        return np.array(e, dtype=float, copy=True)
    if g == 1:
        return np.array(a, dtype=float, copy=True)
    return g * np.asarray(a, dtype=float) + (1.0 - g) * np.asarray(e, dtype=float)


def gated_act(policy: GatedPolicy, obs, rng=None, deterministic=False, norm_obs=None) -> Act:
    """One gated action. ``norm_obs`` (if given) is what the net sees; the
    expert always reads the raw observation."""
    net = policy.net
    seen = obs if norm_obs is None else norm_obs
    if rng is None:
        if not deterministic:
            raise ContractError("stochastic action needs an rng")
        rng = np.random.default_rng(0)
    a, x, g = net.sample(seen, rng, deterministic)
    if policy.fixed_gate is not None:
        g = float(policy.fixed_gate)
    try:
        e = np.asarray(policy.expert(obs), dtype=float)
    except Exception as exc:
        raise PolicyError(f"expert failed: {exc!r}") from exc
    u = blend(g, a, e)
    logp = float(net.log_prob(np.asarray(seen, dtype=float)[None, :], x[None, :], [g])[0])
    return Act(u, a, g, logp, x)
