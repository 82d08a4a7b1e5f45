from __future__ import annotations

import json
import random
import re
from dataclasses import replace
from fractions import Fraction

import pytest

from oracles import toy_min_horizon, toy_task
from tamplan.encoder import SAT, UNSAT, SolverHandle
from tamplan.geometry import PX, PY, HPolytope, Workspace, c_obstacle, c_obstacles, tunnel_valid
from tamplan.itmp import (
    ItmpError,
    Plan,
    PlanRequest,
    SelectorInconsistency,
    SolverUnknown,
    active_half_plane,
    extract_plan,
    itmp,
    validate_plan,
)
from tamplan.ltlk import TRUE, BoundedTrace, VariableUniverse, linear, var
from tamplan.taskspec import ACTION, THETA, Action, Location, TaskLanguage, frame, warehouse_actions

OPEN = Workspace(HPolytope.box(0, 0, 4, 4))


def point_task(start, goal, locs=None):
    """Reach ``goal`` from ``start`` with a single ``move`` target plus free waypoints."""
    locs = locs or [Location("S", *map(Fraction, start)), Location("G", *map(Fraction, goal))]
    frag = warehouse_actions(locs, [])
    v0 = {PX: Fraction(start[0]), PY: Fraction(start[1]), THETA: Fraction(0), "holding": False}
    return frag.task(v0, {PX: Fraction(goal[0]), PY: Fraction(goal[1])})


def counter_task(v0, vf):
    u = VariableUniverse.of((PX, "real"), (PY, "real"), ("v", "integer", 0, 5))
    keep = frame(u, [PX, PY])
    inc = Action("inc", TRUE, linear([(1, var("v", 1)), (-1, "v")], "=", 1) & keep)
    dec = Action("dec", TRUE, linear([(1, var("v", 1)), (-1, "v")], "=", -1) & keep)
    noop = Action("noop", TRUE, linear([(1, var("v", 1)), (-1, "v")], "=", 0) & keep)
    return TaskLanguage(u, (noop, inc, dec), {PX: 1, PY: 1, "v": v0}, {"v": vf})


# ---------------------------------------------------------------- search


def test_noop_plan_at_horizon_one():
    res = itmp(PlanRequest(OPEN, (), counter_task(2, 2), K_max=3))
    assert res.status == SAT and res.K == 1 and res.plan.actions == ("noop",)


def test_inc_inc_at_horizon_two():
    res = itmp(PlanRequest(OPEN, (), counter_task(0, 2), K_max=4))
    assert res.status == SAT and res.K == 2
    assert res.plan.actions == ("inc", "inc")
    assert [s for _, s, _ in res.attempts] == [UNSAT, SAT]


def test_wall_separates_workspace():
    ws = Workspace(HPolytope.box(0, 0, 6, 2), (HPolytope.box(Fraction(5, 2), 0, Fraction(7, 2), 2),))
    cbs = c_obstacles(ws, Fraction(1, 2))
    res = itmp(PlanRequest(ws, cbs, point_task((1, 1), (5, 1)), K_max=4))
    assert res.status == UNSAT and res.plan is None and res.K == 4
    assert [s for _, s, _ in res.attempts] == [UNSAT] * 4


def test_unknown_aborts():
    handle = SolverHandle("sleep", ("5",), timeout_s=0.2)
    with pytest.raises(SolverUnknown) as exc:
        itmp(PlanRequest(OPEN, (), counter_task(0, 2), K_max=3, backend=handle))
    assert exc.value.K == 1


def test_request_validation():
    with pytest.raises(ValueError):
        PlanRequest(OPEN, (), counter_task(0, 1), K_max=0)
    u = VariableUniverse.of(("v", "integer", 0, 5))
    act = Action("inc", TRUE, linear([(1, var("v", 1)), (-1, "v")], "=", 1))
    with pytest.raises(ValueError):
        PlanRequest(OPEN, (), TaskLanguage(u, (act,), {"v": 0}))


def test_minimality_against_brute_force():
    rng = random.Random(5)
    seen = 0
    while seen < 5:
        task, deltas, guards = toy_task(rng)
        K_star, _ = toy_min_horizon(task, deltas, guards, 4)
        if K_star is None:
            continue
        seen += 1
        res = itmp(PlanRequest(OPEN, (), task, K_max=4))
        assert res.K == K_star
        assert all(s == UNSAT for k, s, _ in res.attempts if k < K_star)


# ---------------------------------------------------------------- extraction


def test_no_obstacles_gives_workspace_polytopes():
    res = itmp(PlanRequest(OPEN, (), point_task((1, 1), (3, 3)), K_max=3))
    assert res.status == SAT
    assert all(P == OPEN.boundary for P in res.plan.tunnel.polytopes)


def test_detour_around_obstacle():
    ws = Workspace(HPolytope.box(0, 0, 6, 4), (HPolytope.box(2, 1, 4, 3),))
    cbs = c_obstacles(ws, Fraction(1, 4))
    req = PlanRequest(ws, cbs, point_task((1, 2), (5, 2)), K_max=6)
    res = itmp(req)
    assert res.status == SAT and res.K >= 3
    assert tunnel_valid(res.plan.tunnel, ws, cbs)
    # going around the block needs a change of active side somewhere
    assert len(set(res.plan.tunnel.polytopes)) >= 2
    report = validate_plan(res.plan, req)
    assert report.ok, report.failures()


def test_selector_inconsistency_detected():
    ws = Workspace(HPolytope.box(0, 0, 4, 4), (HPolytope.box(1, 1, 3, 3),))
    cb = c_obstacle(ws.obstacles[0], 0)
    u = VariableUniverse.of((PX, "real"), (PY, "real"))
    tr = BoundedTrace.from_columns(u, {PX: [0, 4], PY: [0, 4]})  # diagonal jump across the block
    with pytest.raises(SelectorInconsistency):
        active_half_plane(cb, tr, 1)
    ok = BoundedTrace.from_columns(u, {PX: [0, 4], PY: [0, 0]})
    assert active_half_plane(cb, ok, 1).holds((2, 0))


# ---------------------------------------------------------------- validation


@pytest.fixture(scope="module")
def detour():
    ws = Workspace(HPolytope.box(0, 0, 6, 4), (HPolytope.box(2, 1, 4, 3),))
    cbs = c_obstacles(ws, Fraction(1, 4))
    req = PlanRequest(ws, cbs, point_task((1, 2), (5, 2)), K_max=6)
    return req, itmp(req).plan


def test_validate_passes_on_itmp_output(detour):
    req, plan = detour
    rep = validate_plan(plan, req)
    assert rep.ok
    assert {name for name, _, _ in rep.checks} == {
        "shape", "action-range", "trace-consistency", "formula", "target-in-polytope", "tunnel", "task", "polyline"}


def test_corrupted_waypoint_fails_containment(detour):
    req, plan = detour
    bad = list(plan.targets)
    bad[0] = (Fraction(3), Fraction(2), bad[0][2])  # centre of the obstacle
    rep = validate_plan(replace(plan, targets=tuple(bad)), req)
    failed = {n for n, ok, _ in rep.checks if not ok}
    assert "polyline" in failed


def test_corrupted_action_fails_range(detour):
    req, plan = detour
    rep = validate_plan(replace(plan, action_indices=(0,) + plan.action_indices[1:]), req)
    assert not rep.ok
    assert [n for n, ok, _ in rep.checks if not ok] == ["action-range"]


def test_plan_json_round_trip(detour):
    req, plan = detour
    data = json.loads(json.dumps(plan.to_json()))
    assert data["K"] == plan.K and len(data["steps"]) == plan.K
    back = Plan.from_json(data, req.task)
    assert back == plan
    assert validate_plan(back, req).ok


def test_plan_lines_format(detour):
    _, plan = detour
    lines = plan.lines()
    assert len(lines) == plan.K
    for k, line in enumerate(lines, start=1):
        assert re.fullmatch(rf"{k}: (goto|move\(\w+\)) @ \(-?\d+\.\d{{3}}, -?\d+\.\d{{3}}, -?\d+\.\d{{3}}\)", line)
    assert "(5.000, 2.000, " in lines[-1]


def test_extract_rejects_bad_action_index(detour):
    req, plan = detour
    steps = [dict(s) for s in plan.trace.steps]
    steps[0][ACTION] = 1
    tr = BoundedTrace(plan.trace.universe, tuple(steps))
    # index 1 is valid; push it past the end of the action list instead
    big = len(req.task.actions) + 1
    u = plan.trace.universe
    loose = VariableUniverse(tuple(d if d.name != ACTION else replace(d, high=big) for d in u.decls))
    steps[0][ACTION] = big
    with pytest.raises(ItmpError):
        extract_plan(BoundedTrace(loose, tuple(steps)), req)
    assert extract_plan(tr, req).actions[0] == req.task.actions[0].name
