"""Command line front end: ``plan | graph | strategy | simulate | render | check``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .encoder import BackendError, SolverHandle, emit_smtlib
from .itmp import Plan, PlanRequest, SolverUnknown, itmp, validate_plan
from .missiongame import MissionGraph, Strategy, solve_game
from .render import render_svg
from .scenario import Scenario, ScenarioError, bundled, load_scenario
from .simkit import TraceRecord, nonholonomic_residual, run_episode

log = logging.getLogger("tamplan")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 2
EXIT_BACKEND = 3

RESIDUAL_LIMIT = 1e-3


class MissingArtifact(ScenarioError):
    def __init__(self, path: Path, command: str):
        super().__init__(f"{path} not found; run `tamplan {command}` first")


def _dump(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1, sort_keys=False) + "\n")


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


class Context:
    def __init__(self, args):
        self.args = args
        self.scn: Scenario = load_scenario(args.scenario or bundled())
        if args.kmax is not None:
            self.scn.K_max = args.kmax
        if args.seed is not None:
            self.scn.seed = args.seed
        if args.timeout is not None:
            s = self.scn.solver
            self.scn.solver = SolverHandle(s.cmd, s.args, float(args.timeout), s.use_file)
        self.root = Path(args.out) / self.scn.name

    def stage(self, name: str) -> Path:
        return self.root / name

    def plan_task(self):
        return self.scn.fragment.task(self.scn.initial_valuation(), {})

    def load_graph(self) -> MissionGraph:
        path = self.stage("graph") / "graph.json"
        if not path.exists():
            raise MissingArtifact(path, "graph")
        task = self.plan_task()
        return MissionGraph.from_json(json.loads(path.read_text()), lambda d: Plan.from_json(d, task))

    def load_strategy(self, graph: MissionGraph) -> Strategy | None:
        path = self.stage("strategy") / "strategy.json"
        if not path.exists():
            raise MissingArtifact(path, "strategy")
        data = json.loads(path.read_text())
        if not data.get("realizable", False):
            return None
        return Strategy.from_json(data["transducer"], graph)


# --------------------------------------------------------------------------
# commands


def cmd_plan(ctx: Context) -> int:
    scn = ctx.scn
    src = ctx.args.src or scn.robot.home
    req = scn.point_request(src, ctx.args.dst, solver=scn.solver)
    res = itmp(req)
    out = ctx.stage("plan")
    stem = f"plan_{src}_{ctx.args.dst}"
    if res.system is not None:
        _write(out / f"{stem}.smt2", emit_smtlib(res.system))
    doc = {"from": src, "to": ctx.args.dst, "status": res.status, "K": res.K,
           "attempts": [[k, s] for k, s, _ in res.attempts]}
    if res.plan is not None:
        doc["plan"] = res.plan.to_json()
        doc["validation"] = validate_plan(res.plan, req).to_json()
        _write(out / f"{stem}.txt", "\n".join(res.plan.lines()) + "\n")
        print("\n".join(res.plan.lines()))
    _dump(out / f"{stem}.json", doc)
    print(f"{res.status} at K={res.K}; wrote {out / stem}.json")
    return EXIT_OK if res.plan is not None else EXIT_FAIL


def cmd_graph(ctx: Context) -> int:
    g = ctx.scn.synth_graph(jobs=ctx.args.jobs)
    out = ctx.stage("graph")
    _dump(out / "graph.json", g.to_json())
    if ctx.args.dot:
        _write(out / "graph.dot", g.to_dot())
    invalid = [str(e.action) for e in g.sys_edges if not e.action.valid]
    print(f"{len(g.states)} states, {len(g.sys_edges)} system edges, {len(g.env_edges)} environment edges, "
          f"{len(g.unknown)} unknown; wrote {out / 'graph.json'}")
    if invalid:
        print(f"edges with invalid plans: {', '.join(invalid)}")
    return EXIT_OK if not invalid else EXIT_FAIL


def cmd_strategy(ctx: Context) -> int:
    g = ctx.load_graph()
    st = solve_game(g, ctx.scn.condition)
    out = ctx.stage("strategy") / "strategy.json"
    if st is None:
        _dump(out, {"realizable": False})
        print(f"mission is unrealizable on this graph; wrote {out}")
        return EXIT_FAIL
    _dump(out, {"realizable": True, "transducer": st.to_json(g)})
    print(f"realizable: {len(st.winning)} winning states, memory {st.memory_size}, "
          f"{len(st.table)} table rows; wrote {out}")
    return EXIT_OK


def cmd_simulate(ctx: Context) -> int:
    g = ctx.load_graph()
    st = ctx.load_strategy(g)
    if st is None:
        print("no winning strategy to execute")
        return EXIT_FAIL
    res = run_episode(ctx.scn, st, g, seed=ctx.scn.seed, max_t=ctx.scn.max_t)
    out = ctx.stage("simulate")
    _write(out / "trace.csv", res.trace.to_csv())
    doc = {
        "status": res.status,
        "events": [{"t": t, "event": e} for t, e in res.events],
        "override_ticks": res.override_ticks,
        "ticks": len(res.trace.rows),
        "nonholonomic_residual": nonholonomic_residual(res.trace),
        "mission_run": [m.label() for m in res.trace.mission_run],
    }
    _dump(out / "episode.json", doc)
    for t, e in res.events:
        print(f"{t:8.2f}s  {e}")
    print(f"mission {res.status}; {res.override_ticks} override ticks; wrote {out / 'trace.csv'}")
    return EXIT_OK if res.status == "satisfied" else EXIT_FAIL


def _executed_plans(ctx: Context, g: MissionGraph) -> list[Plan]:
    path = ctx.stage("simulate") / "episode.json"
    if not path.exists():
        return []
    labels = json.loads(path.read_text())["mission_run"]
    by_label = {m.label(): m for m in g.states}
    plans = []
    for a, b in zip(labels, labels[1:]):
        for e in g.sys_edges:
            if e.source == by_label.get(a) and e.target == by_label.get(b) and e.action.plan is not None:
                plans.append(e.action.plan)
                break
    return plans


def cmd_render(ctx: Context) -> int:
    trace_path = ctx.stage("simulate") / "trace.csv"
    trace = TraceRecord.from_csv(trace_path.read_text()) if trace_path.exists() else None
    plans = []
    if (ctx.stage("graph") / "graph.json").exists():
        plans = _executed_plans(ctx, ctx.load_graph())
    out = ctx.stage("render") / "scene.svg"
    _write(out, render_svg(ctx.scn, plans, trace))
    print(f"wrote {out}")
    return EXIT_OK


def check_trace(scn: Scenario, trace: TraceRecord) -> list[tuple[str, bool, str]]:
    """Replay a recorded trace through the execution-time validators."""
    rep = []
    if not trace.rows:
        return [("rows", False, "empty trace")]
    t = trace.column("t")
    steps = np.diff(t)
    ok = bool(np.all(np.abs(steps - scn.dt) < 1e-5)) if len(steps) else True
    rep.append(("time", ok, "" if ok else f"irregular time step near t={t[1:][np.abs(steps - scn.dt) >= 1e-5][0]:.3f}"))
    px, py, v = trace.column("px"), trace.column("py"), trace.column("v")
    a = trace.column("a")
    p = scn.safety
    bad = np.flatnonzero((v < 0) | (a < -p.B - 1e-9) | (a > p.A + 1e-9))
    rep.append(("controls", not len(bad), f"speed or acceleration out of range at row {bad[0]}" if len(bad) else ""))
    H = np.array([[float(f.h[0]), float(f.h[1])] for f in scn.workspace.boundary.facets])
    c = np.array([float(f.c) for f in scn.workspace.boundary.facets])
    out = np.flatnonzero(np.any(H @ np.vstack([px, py]) - c[:, None] > 1e-6, axis=0))
    rep.append(("workspace", not len(out), f"robot leaves the workspace at row {out[0]}" if len(out) else ""))
    hit = None
    for cb in scn.cobstacles:
        Hc = np.array([[float(f.h[0]), float(f.h[1])] for f in cb.inflated.facets])
        cc = np.array([float(f.c) for f in cb.inflated.facets])
        # deeper than the arrival tolerance inside the C-obstacle
        inside = np.all(Hc @ np.vstack([px, py]) - cc[:, None] < -scn.dwa.pos_tol, axis=0)
        if inside.any():
            hit = (cb.source, int(np.flatnonzero(inside)[0]))
            break
    rep.append(("static-obstacles", hit is None, "" if hit is None else f"row {hit[1]} inside C-obstacle {hit[0]}"))
    moving = []
    speed = []
    for j, model in enumerate(scn.dynamic_obstacles[:len(trace.obstacle_names)]):
        ox, oy = trace.column(f"obst{j + 1}x"), trace.column(f"obst{j + 1}y")
        gap = np.hypot(px - ox, py - oy) - model.radius
        idx = np.flatnonzero((gap <= p.D_s) & (v > 0))
        if len(idx):
            moving.append(f"row {idx[0]} touches {model.name} while moving")
        disp = np.hypot(np.diff(ox), np.diff(oy))
        # positions are stored with 6 decimals
        if len(disp) and disp.max() > model.speed * scn.dt + 1e-5:
            speed.append(f"{model.name} exceeds its speed bound")
    rep.append(("passive-safety", not moving, "; ".join(moving)))
    rep.append(("obstacle-speed", not speed, "; ".join(speed)))
    res = nonholonomic_residual(trace)
    rep.append(("nonholonomic", res <= RESIDUAL_LIMIT, f"residual {res:.2e} m/s"))
    return rep


def cmd_check(ctx: Context) -> int:
    scn = ctx.scn
    report = []
    if ctx.args.plan:
        doc = json.loads(Path(ctx.args.plan).read_text())
        req = scn.point_request(doc["from"], doc["to"])
        plan = Plan.from_json(doc["plan"], req.task)
        report += [(f"plan:{n}", ok, m) for n, ok, m in validate_plan(plan, req).checks]
    trace_path = Path(ctx.args.trace) if ctx.args.trace else ctx.stage("simulate") / "trace.csv"
    if ctx.args.trace or trace_path.exists():
        if not trace_path.exists():
            raise ScenarioError(f"{trace_path} not found")
        report += [(f"trace:{n}", ok, m) for n, ok, m in check_trace(scn, TraceRecord.from_csv(trace_path.read_text()))]
    if not ctx.args.plan and not ctx.args.trace and (ctx.stage("graph") / "graph.json").exists():
        g = ctx.load_graph()
        edge_task = scn.edge_task()
        bad = []
        for e in g.sys_edges:
            req = PlanRequest(scn.workspace, scn.cobstacles, edge_task.task(e.source, e.target), scn.K_max, scn.solver)
            if e.action.plan is None or not validate_plan(e.action.plan, req):
                bad.append(str(e.action))
        report.append(("graph:edge-plans", not bad, f"invalid: {', '.join(bad)}" if bad else f"{len(g.sys_edges)} plans"))
    if not report:
        raise ScenarioError("nothing to check; pass --plan/--trace or run `tamplan graph` / `tamplan simulate`")
    for name, ok, msg in report:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {msg}".rstrip())
    _dump(ctx.stage("check") / "report.json", [{"check": n, "ok": o, "message": m} for n, o, m in report])
    return EXIT_OK if all(ok for _, ok, _ in report) else EXIT_FAIL


COMMANDS = {
    "plan": cmd_plan,
    "graph": cmd_graph,
    "strategy": cmd_strategy,
    "simulate": cmd_simulate,
    "render": cmd_render,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario JSON (default: bundled warehouse)")
    common.add_argument("--out", default="out", help="output root (default: out)")
    common.add_argument("--kmax", type=int, help="horizon cap")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, default=1, help="parallel edge planning jobs")
    common.add_argument("--timeout", type=float, help="solver timeout in seconds")
    common.add_argument("--dot", action="store_true", help="also write GraphViz DOT")
    common.add_argument("-v", "--verbose", action="count", default=0)
    p = argparse.ArgumentParser(prog="tamplan", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    pp = sub.add_parser("plan", parents=[common], help="plan one motion between named locations")
    pp.add_argument("--from", dest="src", help="start location (default: robot home)")
    pp.add_argument("--to", dest="dst", required=True, help="goal location")
    sub.add_parser("graph", parents=[common], help="synthesize the mission graph")
    sub.add_parser("strategy", parents=[common], help="solve the mission game")
    sub.add_parser("simulate", parents=[common], help="execute the strategy in closed loop")
    sub.add_parser("render", parents=[common], help="draw the scenario, tunnels and trajectory")
    pc = sub.add_parser("check", parents=[common], help="replay artifacts through the validators")
    pc.add_argument("--plan", help="plan JSON written by `plan`")
    pc.add_argument("--trace", help="trace CSV written by `simulate`")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        ctx = Context(args)
        return COMMANDS[args.command](ctx)
    except (SolverUnknown, BackendError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ScenarioError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
