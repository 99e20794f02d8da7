"""Desk-scale multi-agent environments for the training loop.

Both expose ``reset() -> (obs, state)`` and ``step(actions) -> (obs,
state, rewards, done)``, per-agent bounds, expert rules and the indices of
each agent's private observation fields (what the critic adds on top of
the global state). Every emitted reward is appended to ``reward_log``.
"""
from __future__ import annotations

import numpy as np


class MatrixGame:
    """Repeated 2-agent cooperative coordination game.

    Each agent's action in [-1, 1] picks choice 1 when positive. Payoffs
    are shared: ``payoff[c0][c1]``. The expert always plays choice 0.
    """

    n_agents = 2

    def __init__(self, horizon=10, payoff=((2.0, 0.0), (0.0, 4.0)), seed=0):
        self.horizon = horizon
        self.payoff = np.asarray(payoff, dtype=float)
        self.rng = np.random.default_rng(seed)
        self.t = 0
        self.act_low = [np.array([-1.0])] * 2
        self.act_high = [np.array([1.0])] * 2
        self.obs_low = [np.array([0.0, 0.0])] * 2
        self.obs_high = [np.array([1.0, 1.0])] * 2
        self.state_low = np.array([0.0])
        self.state_high = np.array([1.0])
        self.private_obs = [[0], [0]]
        self.experts = [self.expert, self.expert]
        self.reward_log = []

    def obs_dim(self, i):
        return 2

    @staticmethod
    def expert(obs):
        return np.array([-0.5])

    def _obs(self):
        f = self.t / self.horizon
        return [np.array([1.0, f]), np.array([1.0, f])], np.array([f])

    def reset(self):
        self.t = 0
        return self._obs()

    def step(self, actions):
        c = [int(np.asarray(a, dtype=float)[0] > 0) for a in actions]
        r = float(self.payoff[c[0], c[1]])
        self.t += 1
        obs, state = self._obs()
        rewards = [r, r]
        self.reward_log.append(list(rewards))
        return obs, state, rewards, self.t >= self.horizon


class ToyMarket:
    """A single-asset dealer market with mispricing and shared price impact.

    The price deviates from fair value by an AR(1) mispricing ``m``. Agent
    ``i`` sees a noisy signal of ``m`` and trades ``q_i`` in [-1, 1] (buy
    positive), earning ``-q_i * m - cost * q_i**2 - impact * q_i * sum(q)``.
    Trades push the next mispricing by ``push * sum(q)``. The expert is
    myopic: it sizes against its own cost only, ``q = -s / (2 * cost)``,
    and ignores the impact of the other agents, so it over-trades.
    """

    def __init__(self, n_agents=2, horizon=20, phi=0.7, sigma=0.7, noise=0.2, cost=0.5,
                 impact=0.25, push=0.1, seed=0):
        self.n_agents = n_agents
        self.horizon = horizon
        self.phi, self.sigma, self.noise = phi, sigma, noise
        self.cost, self.impact, self.push = cost, impact, push
        self.rng = np.random.default_rng(seed)
        self.t = 0
        self.m = 0.0
        self.signals = np.zeros(n_agents)
        lim = 3.0
        self.act_low = [np.array([-1.0])] * n_agents
        self.act_high = [np.array([1.0])] * n_agents
        # obs: [signal, last own trade, time fraction]
        self.obs_low = [np.array([-lim, -1.0, 0.0])] * n_agents
        self.obs_high = [np.array([lim, 1.0, 1.0])] * n_agents
        self.state_low = np.array([-lim, 0.0])
        self.state_high = np.array([lim, 1.0])
        self.private_obs = [[0, 1]] * n_agents
        self.experts = [self.expert] * n_agents
        self.last = np.zeros(n_agents)
        self.reward_log = []

    def obs_dim(self, i):
        return 3

    def expert(self, obs):
        return np.array([float(np.clip(-obs[0] / (2.0 * self.cost), -1.0, 1.0))])

    def _obs(self):
        # signals are drawn every step so paired runs stay on the same stream
        self.signals = self.m + self.noise * self.rng.standard_normal(self.n_agents)
        f = self.t / self.horizon
        obs = [np.array([self.signals[i], self.last[i], f]) for i in range(self.n_agents)]
        return obs, np.array([self.m, f])

    def reset(self):
        self.t = 0
        self.m = self.sigma * self.rng.standard_normal()
        self.last = np.zeros(self.n_agents)
        return self._obs()

    def step(self, actions):
        q = np.array([float(np.clip(np.asarray(a, dtype=float)[0], -1, 1)) for a in actions])
        total = q.sum()
        rewards = [float(-q[i] * self.m - self.cost * q[i] ** 2 - self.impact * q[i] * total)
                   for i in range(self.n_agents)]
        self.last = q
        self.m = self.phi * self.m + self.push * total + self.sigma * self.rng.standard_normal()
        self.t += 1
        obs, state = self._obs()
        self.reward_log.append(list(rewards))
        return obs, state, rewards, self.t >= self.horizon


ENVS = {"toy-market": ToyMarket, "matrix-game": MatrixGame}
