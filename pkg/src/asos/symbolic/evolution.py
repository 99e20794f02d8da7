"""Elitist mu+lambda evolution of CGP genomes and activation bit-masks.

Fitness is minimized.  Offspring that tie a parent replace it (neutral
drift), so a parent survives only while no offspring matches or beats it.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from .cgp import DEFAULT_LOOP_CAP, CgpGenome, mutate, random_genome
from .operators import LIBRARY

log = logging.getLogger(__name__)

INF = math.inf


def _default_functions():
    return tuple(d.code for d in LIBRARY)


@dataclass
class EvolutionConfig:
    mu: int = 4
    lam: int = 16
    mutation_rate: float = 0.05
    max_generations: int = 200
    loop_cap: int = DEFAULT_LOOP_CAP
    seed: int = 0
    target_fitness: float | None = 0.0
    # genome shape
    n_inputs: int = 2
    n_outputs: int = 1
    rows: int = 1
    cols: int = 20
    levels_back: int = 20
    functions: tuple = field(default_factory=_default_functions)

    def __post_init__(self):
        if self.mu < 1 or self.lam < 0:
            raise ContractError("need mu >= 1 and lambda >= 0")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ContractError("mutation rate must lie in [0, 1]")


@dataclass
class EvolutionResult:
    best: object
    best_fitness: float
    history: list
    evaluations: int = 0
    population: list = field(default_factory=list)


def _safe(fitness, cand):
    try:
        f = float(fitness(cand))
    except Exception as exc:  # degenerate candidates must not abort a run
        log.debug("candidate failed: %r", exc)
        return INF
    return f if math.isfinite(f) else INF


def _done(cfg, best):
    return cfg.target_fitness is not None and best <= cfg.target_fitness


def _mu_plus_lambda(cfg, parents, fitness, vary, rng, key=None):
    cache = {}

    def score(c):
        k = key(c) if key else None
        if k is not None and k in cache:
            return cache[k]
        f = _safe(fitness, c)
        if k is not None:
            cache[k] = f
        return f

    evals = 0
    pop = []
    for c in parents:
        pop.append((score(c), c))
        evals += 1
        if _done(cfg, pop[-1][0]):
            break
    pop.sort(key=lambda t: t[0])
    pop = pop[:cfg.mu]
    history = [pop[0][0]]
    for _ in range(cfg.max_generations):
        if _done(cfg, pop[0][0]) or cfg.lam == 0:
            break
        children = []
        for _ in range(cfg.lam):
            parent = pop[int(rng.integers(len(pop)))][1]
            child = vary(parent, rng)
            children.append((score(child), child))
            evals += 1
        # stable sort with children first: ties go to offspring
        merged = sorted(children + pop, key=lambda t: t[0])
        pop = merged[:cfg.mu]
        history.append(pop[0][0])
    return EvolutionResult(pop[0][1], pop[0][0], history, evals, [c for _, c in pop])


def evolve(config: EvolutionConfig, fitness, initial: CgpGenome | None = None) -> EvolutionResult:
    """Evolve genomes minimizing ``fitness``; history is per-generation best."""
    rng = np.random.default_rng(config.seed)
    parents = [] if initial is None else [initial]
    while len(parents) < config.mu:
        parents.append(random_genome(config.n_inputs, config.n_outputs, config.rows,
                                     config.cols, config.levels_back, config.functions, rng))

    def vary(g, rng):
        return mutate(g, config.mutation_rate, rng)

    return _mu_plus_lambda(config, parents, fitness, vary, rng,
                           key=lambda g: tuple(g.to_ints()))


def mutate_mask(mask, rate, rng):
    mask = np.asarray(mask, dtype=np.int8)
    flips = rng.random(mask.size) < rate
    if not flips.any():
        flips[int(rng.integers(mask.size))] = True
    return tuple(int(b) for b in np.where(flips, 1 - mask, mask))


def evolve_activation_mask(evaluate, n_bits, config: EvolutionConfig, initial=None) -> EvolutionResult:
    """Search binary activation masks of length ``n_bits``.

    ``evaluate(mask)`` returns the reproduction error of the model with that
    mask applied (failures count as +inf).  The all-ones mask is always
    evaluated first and returned at once if it already scores zero.
    """
    if n_bits < 1:
        raise ContractError("mask must have at least one bit")
    rng = np.random.default_rng(config.seed)
    ones = tuple([1] * n_bits) if initial is None else tuple(int(b) for b in initial)
    parents = [ones]
    while len(parents) < config.mu:
        parents.append(tuple(int(b) for b in rng.integers(0, 2, n_bits)))

    def vary(m, rng):
        return mutate_mask(m, config.mutation_rate, rng)

    return _mu_plus_lambda(config, parents, evaluate, vary, rng, key=lambda m: m)
