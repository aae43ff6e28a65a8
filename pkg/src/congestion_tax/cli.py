"""Command-line harness: ``congestion-tax {run,sweep,oracle,validate}``.

Exit codes: 0 ok, 2 configuration error, 3 solver failure, 4 property
failure, 5 instance too large for a brute-force oracle.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

from . import io
from .equilibrium import SolverConfig, SolverTrace, solve_equilibrium
from .errors import AssumptionError, SizeError, SolverError
from .game import pigou_game
from .oracles import equilibrium_by_enumeration, optimal_social_cost, pigou_analytic, pigou_report
from .taxdesign import default_tol_eq, init_designer, run
from .validate import perturbation_violations, validate_game

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PROPERTY, EXIT_SIZE = 0, 2, 3, 4, 5


class ConfigError(Exception):
    pass


def parse_pigou(text: str) -> tuple[float, int]:
    """``"c=0.2,p=2"`` -> (0.2, 2)."""
    try:
        kv = dict(part.split("=", 1) for part in text.split(","))
        c, p = float(kv["c"]), float(kv["p"])
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"--pigou expects c=<value>,p=<integer>, got {text!r}") from exc
    if p != int(p) or p < 1:
        raise ConfigError(f"Pigou power must be a positive integer, got {p!r}")
    return c, int(p)


def load_game(args):
    """Game, source label, extra document keys, and Pigou parameters (or None)."""
    chosen = [a for a in ("pigou", "game", "network") if getattr(args, a, None)]
    if len(chosen) != 1:
        raise ConfigError("give exactly one of --pigou, --game, --network")
    try:
        if args.pigou:
            c, p = parse_pigou(args.pigou)
            return pigou_game(c, p), f"pigou c={c:g} p={p}", {}, (c, p)
        path = args.game or args.network
        game, doc = io.load_instance(path)
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot load instance: {exc}") from exc
    except (AssumptionError, ValueError) as exc:
        raise ConfigError(f"invalid instance: {exc}") from exc
    return game, str(path), doc, None


def default_beta(game) -> float:
    """Largest of the cost smoothness and the marginal-cost tax at full load."""
    top = max(float(c.marginal_tax()(1.0)) for c in game.costs)
    return max(game.smoothness, top) or 1.0


def optimum(game, pigou) -> float | None:
    if pigou is not None:
        return pigou_analytic(*pigou)[3]
    try:
        return float(optimal_social_cost(game).value)
    except SizeError:
        return None


def _solver_logger(game, out: Path):
    """Oracle that also dumps each solve's trace CSV."""
    counter = {"n": 0}

    def oracle_factory(cfg):
        def oracle(tax):
            counter["n"] += 1
            tr = SolverTrace()
            fb = solve_equilibrium(game, tax, cfg, trace=tr)
            tr.to_csv(out / "solver" / f"solve_{counter['n']:05d}.csv")
            return fb
        return oracle
    return oracle_factory


def run_experiment(game, label: str, eps: float, beta: float, t_max: int | None, out: Path,
                   pigou=None, trace_solver: bool = False) -> tuple[int, dict]:
    out.mkdir(parents=True, exist_ok=True)
    F = game.n_facilities
    state0 = init_designer(F, eps, beta)
    tol_eq = default_tol_eq(state0)
    cfg = SolverConfig(tol_eq=tol_eq)
    oracle = None
    if trace_solver:
        (out / "solver").mkdir(exist_ok=True)
        oracle = _solver_logger(game, out)(cfg)
    psi_star = optimum(game, pigou)

    trace_fh = open(out / "trace.csv", "w", newline="")
    rounds_fh = open(out / "rounds.csv", "w", newline="")
    trace_fh.write("round,social_cost,optimal_social_cost,gap\n")
    rounds_fh.write("round,phase,social_cost,facility,load,cost\n")

    def on_round(rec):
        gap = "" if psi_star is None else io.fmt(rec.social_cost - psi_star)
        trace_fh.write(f"{rec.round},{io.fmt(rec.social_cost)},{io.fmt(psi_star)},{gap}\n")
        phases = [("primary", rec.social_cost, rec.load, rec.cost)]
        if rec.perturbed_load is not None:
            phases.append(("perturbed", rec.perturbed_social_cost, rec.perturbed_load, rec.perturbed_cost))
        for name, psi, y, c in phases:
            for f in range(F):
                rounds_fh.write(f"{rec.round},{name},{io.fmt(psi)},{f},{io.fmt(y[f])},{io.fmt(c[f])}\n")
        if rec.outcome == "aborted":
            rounds_fh.write(f"{rec.round},aborted,{io.fmt(rec.social_cost)},{rec.facility},"
                            f"{io.fmt(rec.displacement)},\n")
        trace_fh.flush()
        rounds_fh.flush()

    try:
        res = run(game, eps, beta, oracle=oracle, t_max=t_max, solver=cfg, on_round=on_round)
    finally:
        trace_fh.close()
        rounds_fh.close()

    for f, tau in enumerate(res.plan.applied()):
        (out / f"tax_f{f}.csv").write_text(tau.to_csv())
    K = res.state.K
    gap = None if psi_star is None else res.social_cost - psi_star
    gap_bound = 6 * eps * F + 10 * math.sqrt(2 * tol_eq / eps)
    viol = perturbation_violations(res)
    summary = {
        "instance": label, "eps": eps, "beta": beta, "K": K, "delta": res.state.delta,
        "tol_eq": tol_eq, "termination": res.termination, "rounds": res.rounds,
        "exploratory_rounds": res.exploratory_rounds,
        "final_social_cost": res.social_cost, "optimal_social_cost": psi_star, "gap": gap,
        "gap_bound": gap_bound, "gap_within_bound": None if gap is None else gap <= gap_bound,
        "worst_case_rounds": 2 * F * beta / eps, "round_bound": (K + 1) * F,
        "bound_satisfied": res.exploratory_rounds <= (K + 1) * F,
        "max_queries_per_round": max(r.queries for r in res.trace),
        "locality_violations": viol, "message": res.message,
    }
    io.write_json(out / "summary.json", summary)
    if res.termination == "aborted":
        return EXIT_SOLVER, summary
    if viol:
        return EXIT_PROPERTY, summary
    return EXIT_OK, summary


def cmd_run(args) -> int:
    game, label, doc, pigou = load_game(args)
    eps = args.eps if args.eps is not None else doc.get("eps", 0.05)
    beta = args.beta if args.beta is not None else doc.get("beta", default_beta(game))
    if not eps > 0 or not beta > 0:
        raise ConfigError("--eps and --beta must be positive")
    if beta < game.smoothness:
        print(f"warning: beta={beta:g} is below the cost smoothness {game.smoothness:g}; "
              "the accuracy guarantee does not apply", file=sys.stderr)
    code, summary = run_experiment(game, label, eps, beta, args.tmax, Path(args.out), pigou,
                                   args.trace_solver)
    print(json.dumps({k: summary[k] for k in ("termination", "rounds", "final_social_cost",
                                              "optimal_social_cost", "gap")}))
    return code


def cmd_sweep(args) -> int:
    jobs = [(c, p, e) for c in args.c for p in args.p for e in args.eps]
    for c, p, _ in jobs:
        if not 0 < c <= 1 or p != int(p) or p < 1:
            raise ConfigError(f"invalid Pigou parameters c={c}, p={p}")

    def one(job):
        c, p, e = job
        game = pigou_game(c, int(p))
        beta = args.beta if args.beta is not None else default_beta(game)
        out = Path(args.out) / f"c{c:g}_p{int(p)}_eps{e:g}"
        return job, run_experiment(game, f"pigou c={c:g} p={int(p)}", e, beta, args.tmax, out, (c, int(p)))

    with ThreadPoolExecutor(max_workers=args.workers) as ex:
        results = list(ex.map(one, jobs))
    worst = EXIT_OK
    for (c, p, e), (code, s) in results:
        print(f"c={c:g} p={int(p)} eps={e:g}: {s['termination']} rounds={s['rounds']} gap={s['gap']:.3g}")
        worst = max(worst, code)
    return worst


def cmd_oracle(args) -> int:
    game, label, doc, pigou = load_game(args)
    reports = []
    if pigou is not None:
        reports.append(pigou_report(*pigou).to_dict())
    reports.append(optimal_social_cost(game).to_dict())
    reports.append(equilibrium_by_enumeration(game, None).to_dict())
    print(json.dumps(reports, indent=2))
    return EXIT_OK


def bundled_fixtures() -> list[Path]:
    root = resources.files("congestion_tax") / "fixtures"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".json"))


def cmd_validate(args) -> int:
    if args.pigou or args.game or args.network:
        targets = [None]
    else:
        targets = [p for p in bundled_fixtures() if not p.name.startswith("invalid_")]
    failed = False
    for path in targets:
        if path is None:
            try:
                game, label, _, _ = load_game(args)
            except ConfigError as exc:
                print(f"FAIL assumptions: {exc}")
                failed = True
                continue
        else:
            label = path.name
            try:
                game, _ = io.load_instance(path)
            except (AssumptionError, ValueError) as exc:
                print(f"[{label}]\nFAIL assumptions: {exc}")
                failed = True
                continue
        print(f"[{label}]")
        for r in validate_game(game, eps=args.eps or 0.05, seed=args.seed, n_pairs=args.pairs):
            print(r.line())
            failed |= not r.passed
    return EXIT_PROPERTY if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="congestion-tax", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def source(p):
        p.add_argument("--pigou", help="inline Pigou instance, e.g. c=0.2,p=2")
        p.add_argument("--game", help="explicit-action game JSON")
        p.add_argument("--network", help="network game JSON")

    p = sub.add_parser("run", help="learn a tax and write trace.csv, tax_f<i>.csv, summary.json")
    source(p)
    p.add_argument("--eps", type=float)
    p.add_argument("--beta", type=float, help="smoothness bound (below the true value voids the guarantee)")
    p.add_argument("--tmax", type=int)
    p.add_argument("--out", default="out")
    p.add_argument("--trace-solver", action="store_true", help="dump one CSV per equilibrium solve")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="independent Pigou runs in parallel threads")
    p.add_argument("--c", type=float, nargs="+", default=[0.2, 0.6, 1.0])
    p.add_argument("--p", type=int, nargs="+", default=[2, 4])
    p.add_argument("--eps", type=float, nargs="+", default=[0.05])
    p.add_argument("--beta", type=float)
    p.add_argument("--tmax", type=int)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="print brute-force reports as JSON")
    source(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("validate", help="run the named property checks")
    source(p)
    p.add_argument("--eps", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pairs", type=int, default=1000)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except SizeError as exc:
        print(f"too large: {exc}", file=sys.stderr)
        return EXIT_SIZE


if __name__ == "__main__":
    sys.exit(main())
