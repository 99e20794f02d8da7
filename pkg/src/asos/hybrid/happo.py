"""Sequential per-agent clipped policy updates with a centralized critic.

Advantages come from GAE on the team reward; agent ``i`` is updated on the
estimator ``M`` already rescaled by the probability ratios of agents
``1..i-1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, RolloutError, TrainingError
from .nets import MLP, SGDMomentum
from .policy import GatedPolicy, RunningNormalizer, gated_act


@dataclass
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    minibatch: int = 64
    lr: float = 3e-3
    critic_lr: float = 1e-2
    momentum: float = 0.9
    max_grad_norm: float | None = 5.0
    rollout_steps: int = 256  # T
    n_agents: int = 2
    adv_norm: bool = True
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.gamma <= 1 and 0 <= self.gae_lambda <= 1):
            raise ContractError("gamma and gae_lambda must lie in [0, 1]")
        if min(self.epochs, self.minibatch, self.rollout_steps, self.n_agents) < 1:
            raise ContractError("epochs, minibatch, rollout_steps and n_agents must be >= 1")


@dataclass
class RolloutBuffer:
    """Per-agent aligned sequences; ``values`` and ``dones`` are shared."""
    n_agents: int
    obs: list = field(default_factory=list)       # [agent][t] normalized observation
    raw_obs: list = field(default_factory=list)
    x: list = field(default_factory=list)         # unscaled Beta sample
    actions: list = field(default_factory=list)   # executed action u
    gates: list = field(default_factory=list)
    logp: list = field(default_factory=list)
    rewards: list = field(default_factory=list)   # [agent][t]
    hidden: list = field(default_factory=list)    # zero-size recurrent state
    states: list = field(default_factory=list)    # critic input per step
    values: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    last_value: float = 0.0

    def __post_init__(self):
        for name in ("obs", "raw_obs", "x", "actions", "gates", "logp", "rewards", "hidden"):
            if not getattr(self, name):
                setattr(self, name, [[] for _ in range(self.n_agents)])

    def __len__(self):
        return len(self.dones)

    def check(self):
        n = len(self.dones)
        for name in ("obs", "raw_obs", "x", "actions", "gates", "logp", "rewards", "hidden"):
            seqs = getattr(self, name)
            if len(seqs) != self.n_agents or any(len(s) != n for s in seqs):
                raise ContractError(f"buffer field {name!r} is misaligned")
        if len(self.values) != n or len(self.states) != n:
            raise ContractError("buffer values/states are misaligned")

    def arrays(self, agent):
        return (np.asarray(self.obs[agent], dtype=float), np.asarray(self.x[agent], dtype=float),
                np.asarray(self.gates[agent], dtype=float))

    def team_rewards(self):
        return np.asarray(self.rewards, dtype=float).mean(axis=0)

    def episode_returns(self):
        """Undiscounted team return of each complete episode."""
        out, acc = [], 0.0
        for r, d in zip(self.team_rewards(), self.dones):
            acc += r
            if d:
                out.append(acc)
                acc = 0.0
        return out


def compute_gae(rewards, values, dones, gamma, gae_lambda, last_value=0.0):
    """Returns ``(advantages, reward_to_go)``.

    ``dones[t]`` marks the last step of an episode; a trailing unfinished
    episode is bootstrapped with ``last_value``.
    """
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    d = np.asarray(dones, dtype=bool)
    if not (r.shape == v.shape == d.shape) or r.ndim != 1:
        raise ContractError("rewards, values and dones must be aligned 1-D sequences")
    n = r.size
    adv = np.zeros(n)
    rtg = np.zeros(n)
    gae = 0.0
    ret = last_value
    next_v = last_value
    for t in reversed(range(n)):
        if d[t]:
            gae, ret, next_v = 0.0, 0.0, 0.0
        delta = r[t] + gamma * next_v - v[t]
        gae = delta + gamma * gae_lambda * gae
        ret = r[t] + gamma * ret
        adv[t] = gae
        rtg[t] = ret
        next_v = v[t]
    return adv, rtg


class Critic:
    """Centralized value net on the critic input (global state plus the
    agents' private observation fields)."""

    def __init__(self, in_dim, hidden=(64, 64), rng=None, low=None, high=None):
        self.net = MLP((in_dim, *hidden, 1), "tanh", rng, out_scale=1.0 / np.sqrt(hidden[-1]))
        self.norm = RunningNormalizer(low if low is not None else -np.ones(in_dim),
                                      high if high is not None else np.ones(in_dim))

    def value(self, z):
        return self.net(np.atleast_2d(z))[:, 0]


def surrogate(policy: GatedPolicy, obs, x, g, logp_old, M, clip):
    """Clipped surrogate loss ``-mean(min(r M, clip(r) M))`` and its gradient."""
    net = policy.net
    out, cache = net.net.forward(obs)
    logp = net.log_prob(obs, x, g, out)
    ratio = np.exp(logp - logp_old)
    s1 = ratio * M
    s2 = np.clip(ratio, 1.0 - clip, 1.0 + clip) * M
    loss = -float(np.mean(np.minimum(s1, s2)))
    coef = np.where(s1 <= s2, -M * ratio / len(M), 0.0)
    _, grads = net.log_prob_grad(obs, x, g, coef)
    return loss, grads, ratio


def _finite(grads):
    return all(np.all(np.isfinite(g)) for g in grads)


def happo_update(policies, critic: Critic, buffer: RolloutBuffer, cfg: TrainConfig, rng,
                 optimizers=None, critic_opt=None) -> dict:
    """One training iteration over ``buffer``; returns a loss report."""
    buffer.check()
    if len(policies) != buffer.n_agents:
        raise ContractError("one policy per buffer agent is required")
    if optimizers is None:
        optimizers = [SGDMomentum(cfg.lr, cfg.momentum, cfg.max_grad_norm) for _ in policies]
    if critic_opt is None:
        critic_opt = SGDMomentum(cfg.critic_lr, cfg.momentum, cfg.max_grad_norm)
    adv, rtg = compute_gae(buffer.team_rewards(), buffer.values, buffer.dones, cfg.gamma,
                           cfg.gae_lambda, buffer.last_value)
    A = adv.copy()
    if cfg.adv_norm and A.size > 1:
        A = (A - A.mean()) / (A.std() + 1e-8)
    M = A.copy()
    n = len(buffer)
    report = {"policy_loss": [], "value_loss": 0.0, "ratio_mean": [], "gate_rate": []}
    for i, pol in enumerate(policies):
        obs, x, g = buffer.arrays(i)
        params = pol.net.net.params
        logp_old = pol.net.log_prob(obs, x, g)
        losses = []
        for _ in range(cfg.epochs):
            perm = rng.permutation(n)
            for s in range(0, n, cfg.minibatch):
                idx = perm[s:s + cfg.minibatch]
                loss, grads, _ = surrogate(pol, obs[idx], x[idx], g[idx], logp_old[idx], M[idx],
                                           cfg.clip)
                if not np.isfinite(loss) or not _finite(grads):
                    raise TrainingError(i, "non-finite policy loss")
                optimizers[i].step(params, grads)
                losses.append(loss)
        ratio = np.exp(pol.net.log_prob(obs, x, g) - logp_old)
        if not np.all(np.isfinite(ratio)):
            raise TrainingError(i, "non-finite probability ratio")
        M = ratio * M
        report["policy_loss"].append(float(np.mean(losses)))
        report["ratio_mean"].append(float(ratio.mean()))
        report["gate_rate"].append(float(g.mean()))
    Z = critic.norm(np.asarray(buffer.states, dtype=float))
    vlosses = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for s in range(0, n, cfg.minibatch):
            idx = perm[s:s + cfg.minibatch]
            out, cache = critic.net.forward(Z[idx])
            err = out[:, 0] - rtg[idx]
            vloss = float(np.mean(err ** 2))
            if not np.isfinite(vloss):
                raise TrainingError("critic", "non-finite value loss")
            grads = critic.net.backward(cache, (2.0 * err / len(idx))[:, None])
            critic_opt.step(critic.net.params, grads)
            vlosses.append(vloss)
    report["value_loss"] = float(np.mean(vlosses))
    report["M"] = M
    report["advantages"] = A
    return report


def critic_input(env, state, obs):
    parts = [np.asarray(state, dtype=float)]
    for i, o in enumerate(obs):
        parts.append(np.asarray(o, dtype=float)[list(env.private_obs[i])])
    return np.concatenate(parts)


def collect_rollout(env, policies, critic: Critic, cfg: TrainConfig, rng, normalizers=None,
                    update_norm=True, deterministic=False) -> RolloutBuffer:
    """``cfg.rollout_steps`` steps of gated actions; episodes restart on ``done``."""
    N = len(policies)
    buf = RolloutBuffer(N)
    try:
        obs, state = env.reset()
    except Exception as exc:
        raise RolloutError(f"env reset failed: {exc!r}") from exc
    for _ in range(cfg.rollout_steps):
        z = critic_input(env, state, obs)
        if update_norm:
            critic.norm.update(z)
        buf.states.append(z)
        buf.values.append(float(critic.value(critic.norm(z))[0]))
        us = []
        for i, pol in enumerate(policies):
            seen = obs[i]
            if normalizers is not None:
                seen = normalizers[i].normalize(obs[i], update=update_norm)
            act = gated_act(pol, obs[i], rng, deterministic, norm_obs=seen)
            buf.obs[i].append(np.asarray(seen, dtype=float))
            buf.raw_obs[i].append(np.asarray(obs[i], dtype=float))
            buf.x[i].append(act.x)
            buf.actions[i].append(act.u)
            buf.gates[i].append(act.g)
            buf.logp[i].append(act.logp)
            buf.hidden[i].append(np.zeros(pol.net.hidden_size))
            us.append(act.u)
        try:
            obs, state, rewards, done = env.step(us)
        except Exception as exc:
            raise RolloutError(f"env step failed: {exc!r}") from exc
        for i in range(N):
            buf.rewards[i].append(float(rewards[i]))
        buf.dones.append(bool(done))
        if done:
            obs, state = env.reset()
    if not buf.dones[-1]:
        z = critic_input(env, state, obs)
        buf.last_value = float(critic.value(critic.norm(z))[0])
    return buf


def evaluate(env, policies, episodes, normalizers=None, deterministic=True, rng=None):
    """Team return of each of ``episodes`` episodes (normalizers frozen)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    out = []
    for _ in range(episodes):
        obs, _ = env.reset()
        total, done = 0.0, False
        while not done:
            us = []
            for i, pol in enumerate(policies):
                seen = normalizers[i].normalize(obs[i]) if normalizers is not None else obs[i]
                us.append(gated_act(pol, obs[i], rng, deterministic, norm_obs=seen).u)
            obs, _, rewards, done = env.step(us)
            total += float(np.mean(rewards))
        out.append(total)
    return out


CURVE_HEADER = ["update", "mean_reward", "policy_loss", "value_loss", "gate_rate"]


class Trainer:
    """Bundles policies, critic, normalizers and optimizer state."""

    def __init__(self, env, cfg: TrainConfig, hidden=(32, 32), gate="bernoulli", gate_bias=0.0,
                 critic_hidden=(64, 64)):
        from .policy import NeuralPolicy

        self.env = env
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.policies = []
        self.normalizers = []
        for i in range(env.n_agents):
            net = NeuralPolicy(env.obs_dim(i), env.act_low[i], env.act_high[i], hidden,
                               gate=gate, gate_bias=gate_bias, rng=self.rng)
            self.policies.append(GatedPolicy(env.experts[i], net))
            self.normalizers.append(RunningNormalizer(env.obs_low[i], env.obs_high[i]))
        zl = critic_input(env, env.state_low, env.obs_low)
        zh = critic_input(env, env.state_high, env.obs_high)
        self.critic = Critic(zl.size, critic_hidden, self.rng, zl, zh)
        self.optimizers = [SGDMomentum(cfg.lr, cfg.momentum, cfg.max_grad_norm)
                           for _ in self.policies]
        self.critic_opt = SGDMomentum(cfg.critic_lr, cfg.momentum, cfg.max_grad_norm)
        self.curve = []

    def step(self):
        buf = collect_rollout(self.env, self.policies, self.critic, self.cfg, self.rng,
                              self.normalizers)
        rep = happo_update(self.policies, self.critic, buf, self.cfg, self.rng, self.optimizers,
                           self.critic_opt)
        rets = buf.episode_returns()
        row = [len(self.curve), float(np.mean(rets)) if rets else float("nan"),
               float(np.mean(rep["policy_loss"])), rep["value_loss"],
               float(np.mean(rep["gate_rate"]))]
        self.curve.append(row)
        return row

    def train(self, updates):
        for _ in range(updates):
            self.step()
        return self.curve

    def evaluate(self, episodes, expert_only=False):
        saved = [p.fixed_gate for p in self.policies]
        if expert_only:
            for p in self.policies:
                p.fixed_gate = 0.0
        try:
            return evaluate(self.env, self.policies, episodes, self.normalizers)
        finally:
            for p, s in zip(self.policies, saved):
                p.fixed_gate = s

    # checkpoint view
    def arrays(self) -> dict:
        out = {}
        for i, (p, n) in enumerate(zip(self.policies, self.normalizers)):
            for k, a in enumerate(p.net.net.params):
                out[f"policy{i}.p{k}"] = a
            for k, a in n.state().items():
                out[f"norm{i}.{k}"] = a
        for k, a in enumerate(self.critic.net.params):
            out[f"critic.p{k}"] = a
        for k, a in self.critic.norm.state().items():
            out[f"critic_norm.{k}"] = a
        return out

    def load_arrays(self, arrays: dict):
        for i, (p, n) in enumerate(zip(self.policies, self.normalizers)):
            params = p.net.net.params
            for k in range(len(params)):
                a = np.asarray(arrays[f"policy{i}.p{k}"], dtype=float)
                if a.shape != params[k].shape:
                    raise ContractError(f"shape mismatch for policy{i}.p{k}")
                params[k] = a.copy()
            n.load_state({k: arrays[f"norm{i}.{k}"] for k in ("mean", "var", "m2", "count")})
        for k in range(len(self.critic.net.params)):
            self.critic.net.params[k] = np.asarray(arrays[f"critic.p{k}"], dtype=float).copy()
        self.critic.norm.load_state({k: arrays[f"critic_norm.{k}"]
                                     for k in ("mean", "var", "m2", "count")})
