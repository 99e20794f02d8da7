"""Command-line entry points.

Every command takes ``--config FILE`` (JSON object keyed by option name);
explicit flags win over the file, which wins over built-in defaults.

Exit codes: 0 success, 1 validation error (bad input, bad file, bad
option), 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import metrics as M
from . import protocol as P
from .errors import (ASOSError, ContractError, CycleError, DecodeError, LoadError,
                     UnknownReference)
from .scenario import Scenario, load_scenario, save_scenario, scenario_from_dict, scenario_to_dict

log = logging.getLogger("asos")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
VALIDATION_ERRORS = (ContractError, LoadError, DecodeError, UnknownReference, CycleError)

DEFAULTS = {
    "common": {"seed": 0, "out": "out", "scenario": None, "config": None, "bounds": None,
               "verbose": False},
    "build-scenario": {"fixture": "default"},
    "simulate": {"horizon": 40, "factors": None},
    "calibrate": {"horizon": None, "prices": None, "factors": None, "budget": 5, "mu": 4,
                  "lambda": 8, "rate": 0.05},
    "evolve-mechanism": {"horizon": 10, "budget": 10, "mu": 4, "lambda": 16, "rate": 0.15},
    "train-hybrid": {"env": "toy-market", "train_steps": 100, "rollout_steps": 400,
                     "minibatch": 100, "lr": None, "eval_episodes": 50, "gate_bias": 0.0},
    "evaluate-solution": {"horizon": 10, "solution": None},
}


# learning rates frozen from pilot runs
ENV_LR = {"toy-market": 3e-3, "matrix-game": 0.02}


class ValidationError(ASOSError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _bounds(text):
    try:
        lo, hi = (float(x) for x in str(text).split(","))
    except ValueError:
        raise ValidationError(f"--bounds expects LOWER,UPPER, got {text!r}") from None
    if not 0 < lo < 1 < hi:
        raise ValidationError("--bounds needs 0 < lower < 1 < upper")
    return lo, hi


def build_parser():
    p = _Parser(prog="asos", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp, scenario=True, horizon=False):
        # defaults are None so that unset flags fall back to --config, then DEFAULTS
        sp.add_argument("--config", help="JSON file of option values")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--bounds", help="fluctuation bounds LOWER,UPPER (ratios of the opening price)")
        sp.add_argument("-v", "--verbose", action="store_const", const=True)
        if scenario:
            sp.add_argument("--scenario", help="scenario JSON file")
        if horizon:
            sp.add_argument("--horizon", type=int, help="simulated days")

    sp = sub.add_parser("build-scenario", help="write a market scenario file")
    common(sp, scenario=False)
    sp.add_argument("--fixture", choices=("default", "shock"))

    sp = sub.add_parser("simulate", help="run a scenario and export prices, trades and events")
    common(sp, horizon=True)
    sp.add_argument("--factors", help="factor CSV (quarter,category,name,value)")

    sp = sub.add_parser("calibrate", help="evolve a factor activation mask against reference prices")
    common(sp, horizon=True)
    sp.add_argument("--prices", help="reference price CSV (quarter,price)")
    sp.add_argument("--factors")
    sp.add_argument("--budget", type=int, help="generations")
    sp.add_argument("--mu", type=int)
    sp.add_argument("--lambda", type=int, dest="lambda")
    sp.add_argument("--rate", type=float, help="mutation rate")

    sp = sub.add_parser("evolve-mechanism", help="evolve a close-market rule by CGP")
    common(sp, horizon=True)
    sp.add_argument("--budget", type=int, help="generations")
    sp.add_argument("--mu", type=int)
    sp.add_argument("--lambda", type=int, dest="lambda")
    sp.add_argument("--rate", type=float, help="mutation rate")

    sp = sub.add_parser("train-hybrid", help="train gated policies and export checkpoints")
    common(sp, scenario=False)
    sp.add_argument("--env", choices=("toy-market", "matrix-game"))
    sp.add_argument("--train-steps", type=int, dest="train_steps", help="policy updates")
    sp.add_argument("--rollout-steps", type=int, dest="rollout_steps")
    sp.add_argument("--minibatch", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--eval-episodes", type=int, dest="eval_episodes")
    sp.add_argument("--gate-bias", type=float, dest="gate_bias")

    sp = sub.add_parser("evaluate-solution", help="paired baseline/solution runs")
    common(sp, horizon=True)
    sp.add_argument("--solution", help="solution file (one encoded op per line)")
    return p


def resolve(args) -> dict:
    """Merge defaults, the ``--config`` file and explicit flags."""
    cmd = args.command
    opts = dict(DEFAULTS["common"])
    opts.update(DEFAULTS[cmd])
    if args.config:
        try:
            with open(args.config) as fh:
                file_opts = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise LoadError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(file_opts, dict):
            raise ValidationError("config file must hold a JSON object")
        file_opts = {k.replace("-", "_"): v for k, v in file_opts.items()}
        unknown = set(file_opts) - set(opts) - {"icofm"}
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}")
        opts.update(file_opts)
    for k, v in vars(args).items():
        if k != "command" and v is not None:
            opts[k] = v
    if opts.get("bounds") is not None:
        opts["bounds"] = _bounds(opts["bounds"] if isinstance(opts["bounds"], str)
                                 else ",".join(map(str, opts["bounds"])))
    if opts.get("horizon") is not None and opts["horizon"] < 0:
        raise ValidationError("--horizon must be >= 0")
    return opts


# -- helpers ---------------------------------------------------------------

def _market():
    from .icofm import scenario as S, simulation as sim

    return S, sim


def _out(opts):
    os.makedirs(opts["out"], exist_ok=True)
    return opts["out"]


def with_bounds(sc: Scenario, bounds) -> Scenario:
    """Copy of a market scenario with new fluctuation bounds."""
    if bounds is None:
        return sc
    d = scenario_to_dict(sc)
    d["config"] = dict(d["config"], lower_ratio=bounds[0], upper_ratio=bounds[1])
    names = {p["id"]: p["name"] for p in d["properties"]}
    for inst in d["instances"]:
        for pid, _ in list(inst["state"].items()):
            n = names[int(pid)]
            if n == "market.lower_ratio":
                inst["state"][pid] = bounds[0]
            elif n == "market.upper_ratio":
                inst["state"][pid] = bounds[1]
    return scenario_from_dict(d)


def _scenario(opts, fixture_default=False) -> Scenario:
    S, _ = _market()
    if opts.get("scenario"):
        sc = load_scenario(opts["scenario"])
    elif fixture_default:
        sc = S.build_scenario(S.shock_fixture(opts["seed"], **opts.get("icofm", {})))
    else:
        raise ValidationError("--scenario is required")
    if sc.domain != "icofm":
        raise ValidationError("command needs a market scenario")
    return with_bounds(sc, opts.get("bounds"))


def _frame(opts):
    if not opts.get("factors"):
        return None
    from .icofm.data import load_factors

    return load_factors(opts["factors"])


def _bollinger_cfg(n):
    w = M.BollingerConfig().window
    if n < 2:
        raise ContractError("stabilization fitness needs a horizon of at least 2 days")
    return M.BollingerConfig(window=min(w, n))


def stabilization_report(result):
    """Metric rows of one run, all recomputable from its days CSV."""
    closes, vols = result.closes(), result.volumes()
    bcfg = _bollinger_cfg(len(closes))
    b = M.bollinger(closes, bcfg)
    fit = M.stabilization_fitness(closes, vols, bcfg, M.StabilizationConfig())
    return {"stabilization_fitness": fit, "b_avg": b.b_avg, "mean_volume": float(vols.mean()),
            "breaches": float(result.breaches())}


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


# -- commands --------------------------------------------------------------

def cmd_build_scenario(opts):
    S, _ = _market()
    over = dict(opts.get("icofm", {}))
    if opts["fixture"] == "shock":
        cfg = S.shock_fixture(opts["seed"], **over)
    else:
        cfg = S.IcofmConfig.from_dict(dict({"seed": opts["seed"]}, **over))
    sc = with_bounds(S.build_scenario(cfg), opts.get("bounds"))
    out = _out(opts)
    path = os.path.join(out, "scenario.json")
    save_scenario(path, sc)
    print(f"wrote {path}: {len(sc.graph.properties)} properties, "
          f"{len(sc.graph.mechanisms)} mechanisms")
    return EXIT_OK


def cmd_simulate(opts):
    from .icofm.data import write_trades
    from .scheduler import write_event_log

    _, sim = _market()
    sc = _scenario(opts)
    res = sim.MarketSimulation(sc, opts["seed"], frame=_frame(opts)).run(opts["horizon"])
    out = _out(opts)
    res.write_days(os.path.join(out, "days.csv"))
    write_trades(os.path.join(out, "trades.csv"), res.trade_log, res.tick_size)
    write_event_log(os.path.join(out, "events.csv"), res.events)
    rows = [("breaches", res.breaches(), {}), ("days", len(res.days), {})]
    if len(res.days) >= 2:
        rep = stabilization_report(res)
        cfg = {"bollinger": _bollinger_cfg(len(res.days)).__dict__,
               "stabilization": M.StabilizationConfig().__dict__}
        rows += [(k, v, cfg) for k, v in rep.items() if k != "breaches"]
    M.write_metric_report(os.path.join(out, "metrics.csv"), rows)
    print(f"simulated {len(res.days)} days, {len(res.trade_log)} trades, "
          f"{res.breaches()} breaches")
    return EXIT_OK


def cmd_calibrate(opts):
    from .icofm.data import load_prices
    from .symbolic.evolution import EvolutionConfig, evolve_activation_mask

    S, sim = _market()
    if not opts.get("prices"):
        raise ValidationError("--prices is required")
    sc = _scenario(opts)
    _, ref = load_prices(opts["prices"])
    cfg = S.IcofmConfig.from_dict(sc.config)
    days = opts["horizon"] or len(ref) * cfg.days_per_quarter
    if days != len(ref) * cfg.days_per_quarter:
        raise ValidationError(f"horizon {days} does not cover {len(ref)} reference quarters")
    frame = _frame(opts)
    n_bits = len(sc.graph.kinds[S.FACTORS].property_ids)

    def evaluate(mask):
        res = sim.simulate(sc, days, opts["seed"], [sim.factor_mask_op(sc, mask)], frame=frame)
        return M.reproduction_fitness(ref, res.quarterly_prices())

    ecfg = EvolutionConfig(mu=opts["mu"], lam=opts["lambda"], mutation_rate=opts["rate"],
                           max_generations=opts["budget"], seed=opts["seed"], target_fitness=0.0)
    res = evolve_activation_mask(evaluate, n_bits, ecfg)
    out = _out(opts)
    with open(os.path.join(out, "mask.txt"), "w") as fh:
        fh.write(" ".join(str(b) for b in res.best) + "\n")
    _write_rows(os.path.join(out, "history.csv"), ["generation", "best_fitness"],
                [(i, _fmt(f)) for i, f in enumerate(res.history)])
    P.write_solution(os.path.join(out, "solution.txt"), [sim.factor_mask_op(sc, res.best)],
                     {"fitness": res.best_fitness, "kind": "activation-mask"})
    print(f"best reproduction fitness {res.best_fitness!r} after {res.evaluations} evaluations")
    return EXIT_OK


def mechanism_fitness(sc, genome_ints, days, seed):
    """Stabilization fitness (higher is better) of a close-market program."""
    _, sim = _market()
    ops = sim.close_market_ops(sc, P.InlineProgram(tuple(genome_ints)))
    res = sim.simulate(sc, days, seed, ops)
    return stabilization_report(res)["stabilization_fitness"], ops


def cmd_evolve_mechanism(opts):
    from .symbolic.cgp import decode_genome, expression, structural_complexity
    from .symbolic.evolution import EvolutionConfig, evolve

    sc = _scenario(opts, fixture_default=True)
    days, seed = opts["horizon"], opts["seed"]
    ecfg = EvolutionConfig(mu=opts["mu"], lam=opts["lambda"], mutation_rate=opts["rate"],
                           max_generations=opts["budget"], seed=seed, target_fitness=None,
                           n_inputs=2, n_outputs=1)

    def fitness(genome):
        return -mechanism_fitness(sc, genome.to_ints(), days, seed)[0]

    res = evolve(ecfg, fitness)
    # rank the surviving population: fitness first, then lower complexity
    pop = res.population
    fits = [-fitness(g) for g in pop]
    comps = [structural_complexity(decode_genome(g)) for g in pop]
    ranked = M.rank_solutions(list(zip(fits, comps)))
    best = pop[ranked[0].index]
    fit, ops = mechanism_fitness(sc, best.to_ints(), days, seed)
    prog = decode_genome(best)
    meta = {"kind": "close-market", "genome": best.to_ints(), "fitness": fit,
            "complexity": structural_complexity(prog),
            "expression": expression(prog, ["live_price", "opening_price"]),
            "seed": seed, "horizon": days, "needs_review": ranked[0].needs_review}
    out = _out(opts)
    P.write_solution(os.path.join(out, "solution.txt"), ops, meta)
    _write_rows(os.path.join(out, "history.csv"), ["generation", "best_fitness"],
                [(i, _fmt(-f)) for i, f in enumerate(res.history)])
    _write_rows(os.path.join(out, "candidates.csv"),
                ["rank", "fitness", "complexity", "needs_review"],
                [(k, _fmt(r.fitness), _fmt(r.complexity), int(r.needs_review))
                 for k, r in enumerate(ranked)])
    print(f"best stabilization fitness {fit!r}, complexity {meta['complexity']!r}")
    return EXIT_OK


def cmd_train_hybrid(opts):
    from .hybrid.checkpoint import save_checkpoint, write_curve
    from .hybrid.envs import ENVS
    from .hybrid.happo import CURVE_HEADER, TrainConfig, Trainer, evaluate

    seed = opts["seed"]
    make = ENVS[opts["env"]]
    lr = opts["lr"] if opts["lr"] is not None else ENV_LR[opts["env"]]
    cfg = TrainConfig(seed=seed, rollout_steps=opts["rollout_steps"], minibatch=opts["minibatch"],
                      lr=lr, n_agents=make(seed=seed).n_agents)
    tr = Trainer(make(seed=seed), cfg, gate_bias=opts["gate_bias"])
    out = _out(opts)
    save_checkpoint(os.path.join(out, "init"), tr.arrays(), {"env": opts["env"], "seed": seed})
    if opts["train_steps"] < 0:
        raise ValidationError("--train-steps must be >= 0")
    tr.train(opts["train_steps"])
    save_checkpoint(os.path.join(out, "final"), tr.arrays(),
                    {"env": opts["env"], "seed": seed, "updates": opts["train_steps"]})
    write_curve(os.path.join(out, "curve.csv"), CURVE_HEADER, tr.curve)
    # paired evaluation: the same episode stream for the trained and expert-only policies
    eval_seed = seed + 10_000
    trained = evaluate(make(seed=eval_seed), tr.policies, opts["eval_episodes"], tr.normalizers)
    for p in tr.policies:
        p.fixed_gate = 0.0
    expert = evaluate(make(seed=eval_seed), tr.policies, opts["eval_episodes"], tr.normalizers)
    for p in tr.policies:
        p.fixed_gate = None
    _write_rows(os.path.join(out, "evaluation.csv"), ["episode", "trained", "expert"],
                [(i, _fmt(a), _fmt(b)) for i, (a, b) in enumerate(zip(trained, expert))])
    print(f"mean episode reward: trained {float(np.mean(trained))!r}, expert {float(np.mean(expert))!r}")
    return EXIT_OK


def cmd_evaluate_solution(opts):
    from .symbolic.cgp import CgpGenome, decode_genome, structural_complexity

    _, sim = _market()
    if not opts.get("solution"):
        raise ValidationError("--solution is required")
    sc = _scenario(opts, fixture_default=True)
    ops, meta = P.read_solution(opts["solution"])
    days, seed = opts["horizon"], opts["seed"]
    base = sim.simulate(sc, days, seed)
    treated = sim.simulate(sc, days, seed, ops)
    out = _out(opts)
    base.write_days(os.path.join(out, "days_baseline.csv"))
    treated.write_days(os.path.join(out, "days_solution.csv"))
    rb, rs = stabilization_report(base), stabilization_report(treated)
    cs = 0.0
    if "genome" in meta:
        cs = structural_complexity(decode_genome(CgpGenome.from_ints(meta["genome"])))
    rows = [(k, _fmt(rb[k]), _fmt(rs[k]), _fmt(rs[k] - rb[k])) for k in rb]
    rows.append(("complexity", _fmt(0.0), _fmt(cs), _fmt(cs)))
    _write_rows(os.path.join(out, "report.csv"), ["metric", "baseline", "solution", "delta"], rows)
    print(f"breaches: baseline {int(rb['breaches'])}, solution {int(rs['breaches'])}; "
          f"stabilization fitness delta {rs['stabilization_fitness'] - rb['stabilization_fitness']!r}")
    return EXIT_OK


COMMANDS = {
    "build-scenario": cmd_build_scenario,
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "evolve-mechanism": cmd_evolve_mechanism,
    "train-hybrid": cmd_train_hybrid,
    "evaluate-solution": cmd_evaluate_solution,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        opts = resolve(args)
        logging.basicConfig(level=logging.DEBUG if opts["verbose"] else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](opts)
    except (ValidationError, *VALIDATION_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - everything else is a runtime failure
        print(f"runtime error: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
