"""Command-line front end: ``demapf run | verify | bench | worker``.

Exit codes: 0 success, 1 bad input, 2 the instance has no (valid) solution.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import resource
import statistics
import sys
import time
from pathlib import Path
from typing import Sequence

from .baselines import OversizedInstance, brute_force_optimal, priority_plan
from .engine import Engine, EngineConfig, FailureReport, LocalHost, load_config
from .netmodel import NetworkError, RoadNetwork, TravellerSpec, parse_map, parse_scenario
from .plan import PlanError, ProtocolViolation, SolutionSet, solution_cost, validate_plan, validate_solution
from .traveller import Traveller

METRICS_FIELDS = ["scenario", "n_travellers", "rounds", "total_cost", "makespan",
                  "ct_nodes_expanded", "messages_sent", "wall_ms", "peak_alloc_estimate"]
BENCH_FIELDS = ["scenario", "solver", "n_travellers", "status", "cost", "makespan", "rounds",
                "wall_ms_median", "repeat"]
SOLVERS = ("demapf", "priority", "oracle")


class InputError(Exception):
    pass


def _fail(msg: str) -> None:
    print(f"demapf: {msg}", file=sys.stderr)


def _load_instance(map_path, scen_path, config_path) -> tuple[RoadNetwork, list[TravellerSpec], EngineConfig]:
    try:
        cfg = load_config(config_path) if config_path else EngineConfig()
        net = parse_map(Path(map_path).read_text(), cfg.world)
        specs = parse_scenario(Path(scen_path).read_text(), net)
    except (OSError, ValueError, TypeError, NetworkError) as exc:
        raise InputError(str(exc)) from exc
    if not specs:
        raise InputError(f"{scen_path}: no travellers")
    return net, specs, cfg


def _peak_bytes() -> int:
    # ru_maxrss is kilobytes on Linux
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024


def _build_engine(net, specs, cfg: EngineConfig, transport: str, listen: str | None):
    if transport == "local":
        return Engine(net, specs, cfg.world)
    from .tcp import RemoteHost, spawn_worker

    ids = sorted(s.id for s in specs)
    by_id = {s.id: s for s in specs}
    half = (len(ids) + 1) // 2
    local = LocalHost([Traveller(by_id[i], net, cfg.world) for i in ids[:half]])
    link, proc = spawn_worker(listen or "127.0.0.1:0", external=listen is not None)
    try:
        remote = RemoteHost(link, [by_id[i] for i in ids[half:]], net, cfg.world, proc)
    except Exception:
        link.close()
        if proc is not None:
            proc.kill()
        raise
    return Engine(net, specs, cfg.world, hosts=[local, remote])


def run_demapf(net, specs, cfg: EngineConfig, transport: str = "local", listen: str | None = None,
               max_rounds: int | None = None, trace: bool = False):
    """Run the negotiation and return (result, engine)."""
    engine = _build_engine(net, specs, cfg, transport, listen)
    engine.trace = trace
    try:
        result = engine.run_to_convergence(max_rounds or cfg.max_rounds)
    finally:
        engine.close()
    return result, engine


def _write_trace(out: Path, engine: Engine) -> None:
    trees = [t.tree_json() for h in engine.hosts if isinstance(h, LocalHost)
             for t in h.travellers.values()]
    (out / "ct_trace.json").write_text(json.dumps(trees, indent=2, sort_keys=True) + "\n")
    with open(out / "router_trace.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["round", "location", "traveller", "requested_entry", "requested_exit",
                    "proposed_entry", "proposed_exit"])
        for rnd, loc, tid, req, prop in engine.router_trace:
            w.writerow([rnd, loc, tid, *req, *prop])


def _append_metrics(path: Path, row: dict) -> None:
    fresh = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as f:
        w = csv.DictWriter(f, fieldnames=METRICS_FIELDS)
        if fresh:
            w.writeheader()
        w.writerow(row)


def cmd_run(args) -> int:
    if args.transport == "tcp" and args.connect:
        from .tcp import serve_worker
        return serve_worker(args.connect)
    try:
        net, specs, cfg = _load_instance(args.map, args.scen, args.config)
    except InputError as exc:
        _fail(str(exc))
        return 1
    transport = args.transport or cfg.transport
    listen = args.listen or cfg.listen
    if args.max_rounds is not None and args.max_rounds < 1:
        _fail("--max-rounds must be at least 1")
        return 1
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    rounds = ct_nodes = messages = 0
    engine = None
    if args.solver == "demapf":
        try:
            result, engine = run_demapf(net, specs, cfg, transport, listen, args.max_rounds, args.trace)
        except (ProtocolViolation, ConnectionError) as exc:
            _fail(f"negotiation aborted: {exc}")
            return 2
        rounds, ct_nodes, messages = engine.round, engine.ct_nodes_expanded, engine.messages
    elif args.solver == "priority":
        result = priority_plan(specs, net, cfg.world)
        rounds = len(specs)
    else:
        try:
            result = brute_force_optimal(specs, net, cfg.world)
        except OversizedInstance as exc:
            _fail(str(exc))
            return 1
        if result is None:
            _fail("no conflict-free solution within the oracle horizon")
            return 2
    wall_ms = round((time.perf_counter() - started) * 1000)
    if engine is not None and args.trace:
        _write_trace(out, engine)
    if isinstance(result, FailureReport):
        (out / "failure.json").write_text(json.dumps(result.to_json(), indent=2, sort_keys=True) + "\n")
        _fail(f"{result.reason} after {result.rounds} rounds; unresolved: {', '.join(result.failed)}")
        return 2
    (out / "solution.json").write_text(result.dumps())
    _append_metrics(out / "metrics.csv", {
        "scenario": Path(args.scen).name, "n_travellers": len(specs), "rounds": rounds,
        "total_cost": result.cost, "makespan": result.makespan, "ct_nodes_expanded": ct_nodes,
        "messages_sent": messages, "wall_ms": wall_ms, "peak_alloc_estimate": _peak_bytes(),
    })
    print(f"solved {len(specs)} travellers: cost {result.cost}, makespan {result.makespan}, "
          f"{rounds} rounds")
    return 0


def cmd_verify(args) -> int:
    try:
        net, specs, cfg = _load_instance(args.map, args.scen, args.config)
        solution = SolutionSet.from_json(json.loads(Path(args.solution).read_text()))
    except (InputError, OSError, ValueError, PlanError) as exc:
        _fail(str(exc))
        return 1
    by_id = {s.id: s for s in specs}
    unknown = sorted(set(solution.plans) - set(by_id))
    if unknown:
        _fail(f"solution names unknown travellers: {', '.join(unknown)}")
        return 1
    missing = sorted(set(by_id) - set(solution.plans))
    if missing:
        _fail(f"solution has no plan for: {', '.join(missing)}")
        return 1
    for tid in sorted(solution.plans):
        try:
            validate_plan(solution.plans[tid], by_id[tid], net)
        except (PlanError, NetworkError, KeyError) as exc:
            _fail(f"plan of {tid} is invalid: {exc}")
            return 2
    cost = solution_cost(solution.plans.values(), by_id, net)
    if cost != solution.cost:
        _fail(f"declared cost {solution.cost} but plans add up to {cost}")
        return 2
    conflict = validate_solution(solution, by_id, net, cfg.world)
    if conflict is not None:
        a, b = conflict.slots
        _fail(f"conflict at {conflict.location} between {conflict.travellers[0]} {tuple(a)} "
              f"and {conflict.travellers[1]} {tuple(b)}")
        return 2
    print(f"valid: {len(solution.plans)} plans, cost {solution.cost}")
    return 0


def _suite(suite: Path) -> list[tuple[Path, Path]]:
    pairs = []
    for scen in sorted(suite.glob("*.scen")):
        map_path = scen.with_suffix(".map")
        if not map_path.exists():
            first = next((ln.split() for ln in scen.read_text().splitlines()
                          if ln.strip() and not ln.startswith("version")), None)
            map_path = suite / first[1] if first else map_path
        pairs.append((map_path, scen))
    return pairs


def _bench_once(solver: str, net, specs, cfg: EngineConfig):
    started = time.perf_counter()
    rounds = ""
    if solver == "demapf":
        engine = Engine(net, specs, cfg.world)
        result = engine.run_to_convergence(cfg.max_rounds)
        rounds = engine.round
    elif solver == "priority":
        result = priority_plan(specs, net, cfg.world)
    else:
        result = brute_force_optimal(specs, net, cfg.world)
    return result, rounds, (time.perf_counter() - started) * 1000


def cmd_bench(args) -> int:
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    bad = [s for s in solvers if s not in SOLVERS]
    if bad or not solvers:
        _fail(f"unknown solver(s) {bad}; choose from {', '.join(SOLVERS)}")
        return 1
    if args.repeat < 1:
        _fail("--repeat must be at least 1")
        return 1
    suite = Path(args.suite)
    if not suite.is_dir():
        _fail(f"{suite} is not a directory")
        return 1
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=BENCH_FIELDS, lineterminator="\n")
    w.writeheader()
    for map_path, scen in _suite(suite):
        try:
            net, specs, cfg = _load_instance(map_path, scen, args.config)
        except InputError as exc:
            _fail(str(exc))
            return 1
        for solver in solvers:
            row = {"scenario": scen.name, "solver": solver, "n_travellers": len(specs),
                   "repeat": args.repeat, "cost": "", "makespan": "", "rounds": "",
                   "wall_ms_median": ""}
            times, costs = [], set()
            try:
                for _ in range(args.repeat):
                    result, rounds, ms = _bench_once(solver, net, specs, cfg)
                    times.append(ms)
                    costs.add(None if not isinstance(result, SolutionSet) else result.cost)
            except OversizedInstance:
                row["status"] = "skipped(size)"
                w.writerow(row)
                continue
            if len(costs) != 1:
                _fail(f"{solver} gave different costs across repeats on {scen.name}")
                return 2
            if isinstance(result, SolutionSet):
                row.update(status="solved", cost=result.cost, makespan=result.makespan)
            else:
                row["status"] = "failed" if isinstance(result, FailureReport) else "infeasible"
            row.update(rounds=rounds, wall_ms_median=f"{statistics.median(times):.1f}")
            w.writerow(row)
    sys.stdout.write(buf.getvalue())
    return 0


def cmd_worker(args) -> int:
    from .tcp import serve_worker
    return serve_worker(args.connect)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="demapf", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve one map + scenario")
    run.add_argument("--map")
    run.add_argument("--scen")
    run.add_argument("--config", help="engine config JSON")
    run.add_argument("--transport", choices=["local", "tcp"], default=None)
    run.add_argument("--listen", help="host:port to wait for an external worker on (tcp)")
    run.add_argument("--connect", help="host:port of a coordinator; act as its worker (tcp)")
    run.add_argument("--out-dir", default=".")
    run.add_argument("--solver", choices=SOLVERS, default="demapf")
    run.add_argument("--max-rounds", type=int)
    run.add_argument("--trace", action="store_true", help="dump constraint trees and allocations")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="check a solution file")
    ver.add_argument("solution")
    ver.add_argument("--map", required=True)
    ver.add_argument("--scen", required=True)
    ver.add_argument("--config")
    ver.set_defaults(func=cmd_verify)

    bench = sub.add_parser("bench", help="compare solvers over a directory of scenarios")
    bench.add_argument("suite")
    bench.add_argument("--solvers", default="demapf,priority")
    bench.add_argument("--repeat", type=int, default=1)
    bench.add_argument("--config")
    bench.set_defaults(func=cmd_bench)

    worker = sub.add_parser("worker", help="host travellers for a tcp coordinator")
    worker.add_argument("--connect", required=True)
    worker.set_defaults(func=cmd_worker)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run" and not (args.transport == "tcp" and args.connect):
        if not args.map or not args.scen:
            _fail("run needs --map and --scen")
            return 1
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
