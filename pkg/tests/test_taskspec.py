from __future__ import annotations

import random
from fractions import Fraction

import pytest

from oracles import toy_min_horizon, toy_task, warehouse_shortest, warehouse_successor
from tamplan.encoder import SAT, UNSAT, check
from tamplan.geometry import PX, PY, Check
from tamplan.ltlk import TRUE, BoundedTrace, VariableUniverse, linear, var
from tamplan.taskspec import (
    ACTION,
    CARRIED,
    HOLDING,
    THETA,
    Action,
    Location,
    TaskError,
    TaskLanguage,
    build_phi_task,
    check_plan_against_task,
    check_trace_against_task,
    warehouse_actions,
)

V = VariableUniverse.of(("v", "integer", 0, 5))
NOOP = Action("noop", TRUE, linear([(1, var("v", 1)), (-1, "v")], "=", 0))


def sat_at(task: TaskLanguage, K: int):
    phi = build_phi_task(task)
    return check(phi, K, task.action_universe())


def small_warehouse():
    locs = [
        Location("H", Fraction(1), Fraction(1), holds_objects=False),
        Location("W0", Fraction(6), Fraction(7), robot_access=False),
        Location("W1", Fraction(2), Fraction(6)),
        Location("W4", Fraction(10), Fraction(2)),
    ]
    return warehouse_actions(locs, ["o1", "o2"])


def start(frag, robot="H", **objs):
    loc = frag.location(robot)
    v = {PX: loc.x, PY: loc.y, THETA: Fraction(0), HOLDING: False}
    for o, l in objs.items():
        v[frag.object_var(o)] = frag.slot[l]
    return v


# ---------------------------------------------------------------- task languages


def test_task_language_validation():
    with pytest.raises(TaskError):
        TaskLanguage(V, (), {"v": 0})
    with pytest.raises(TaskError):
        TaskLanguage(V, (NOOP, NOOP), {"v": 0})
    with pytest.raises(TaskError):
        TaskLanguage(V, (NOOP,), {})
    with pytest.raises(TaskError):
        TaskLanguage(V, (NOOP,), {"v": 0}, {"w": 1})
    t = TaskLanguage(V, (NOOP,), {"v": 0})
    assert t.index("noop") == 1
    assert ACTION in t.action_universe()


@pytest.mark.parametrize("vf,expected", [(2, SAT), (3, UNSAT)])
def test_noop_keeps_initial_value(vf, expected):
    for K in (1, 2, 3):
        res, tr, _ = sat_at(TaskLanguage(V, (NOOP,), {"v": 2}, {"v": vf}), K)
        assert res.status == expected
        if tr is not None:
            assert set(tr.column("v")) == {2}


def test_inc_dec_minimal_horizon():
    inc = Action("inc", TRUE, linear([(1, var("v", 1)), (-1, "v")], "=", 1))
    dec = Action("dec", TRUE, linear([(1, var("v", 1)), (-1, "v")], "=", -1))
    task = TaskLanguage(V, (inc, dec), {"v": 0}, {"v": 2})
    assert sat_at(task, 1)[0].status == UNSAT
    res, tr, _ = sat_at(task, 2)
    assert res.status == SAT
    assert [tr.value(ACTION, k) for k in range(2)] == [1, 1]


def test_toy_horizons_match_brute_force():
    rng = random.Random(11)
    done = 0
    while done < 6:
        task, deltas, guards = toy_task(rng, n_vars=1)
        K_star, _ = toy_min_horizon(task, deltas, guards, 4)
        if K_star is None:
            continue
        done += 1
        for K in range(1, K_star):
            assert sat_at(task, K)[0].status == UNSAT
        res, tr, _ = sat_at(task, K_star)
        assert res.status == SAT
        names = [d.name for d in task.universe.decls]
        plain = BoundedTrace(task.universe, tuple({n: s[n] for n in names} for s in tr.steps))
        assert check_trace_against_task(plain, [tr.value(ACTION, k) for k in range(K_star)], task)


# ---------------------------------------------------------------- warehouse library


def test_action_names_and_kinds():
    frag = small_warehouse()
    names = [a.name for a in frag.actions]
    assert names[0] == "goto"
    assert "move(W0)" not in names  # no robot access
    assert {"move(H)", "move(W1)", "move(W4)", "pick(o1)", "drop(o1,W1)", "drop(o2,W4)"} <= set(names)
    assert frag.slot == {"W0": 1, "W1": 2, "W4": 3}
    with pytest.raises(TaskError):
        warehouse_actions([Location("A", 0, 0), Location("A", 1, 1)], ["o"])
    with pytest.raises(TaskError):
        warehouse_actions([Location("A", 0, 0), Location("B", 0, 0)], ["o"])


def test_pick_at_wrong_position_is_excluded():
    frag = small_warehouse()
    v0 = start(frag, o1="W1", o2="W0")
    task = frag.task(v0, {})
    pick = next(a for a in task.actions if a.name == "pick(o1)")
    assert warehouse_successor(frag, pick, v0) is None
    # forcing pick as the only first step is unsatisfiable
    phi = build_phi_task(task) & linear([(1, ACTION)], "=", task.index("pick(o1)"))
    assert check(phi, 1, task.action_universe())[0].status == UNSAT


def test_pick_with_full_gripper_is_excluded():
    frag = small_warehouse()
    v0 = start(frag, robot="W1", o1="W1", o2="W0")
    v0[HOLDING] = True
    v0[frag.object_var("o1")] = CARRIED
    v0[frag.object_var("o2")] = frag.slot["W1"]  # o2 sits where the robot stands
    task = frag.task(v0, {})
    phi = build_phi_task(task) & linear([(1, ACTION)], "=", task.index("pick(o2)"))
    assert check(phi, 1, task.action_universe())[0].status == UNSAT


def test_drop_into_occupied_slot_is_excluded():
    frag = small_warehouse()
    v0 = start(frag, robot="W4", o1="W1", o2="W4")
    v0[HOLDING] = True
    v0[frag.object_var("o1")] = CARRIED
    task = frag.task(v0, {})
    phi = build_phi_task(task) & linear([(1, ACTION)], "=", task.index("drop(o1,W4)"))
    assert check(phi, 1, task.action_universe())[0].status == UNSAT


def test_fetch_admits_move_pick_move_drop():
    frag = small_warehouse()
    v0 = start(frag, o1="W1", o2="W0")
    task = frag.task(v0, {frag.object_var("o1"): frag.slot["W4"], HOLDING: False})
    K, seq = warehouse_shortest(frag, task, 6)
    assert K == 4
    assert [task.actions[i - 1].name for i in seq] == ["move(W1)", "pick(o1)", "move(W4)", "drop(o1,W4)"]
    # the symbolic encoding (which also has free waypoint moves) agrees on the horizon
    assert sat_at(task, 3)[0].status == UNSAT
    res, tr, _ = sat_at(task, 4)
    assert res.status == SAT
    kinds = [task.actions[tr.value(ACTION, k) - 1].kind for k in range(4)]
    assert kinds == ["motion", "pick", "motion", "drop"]


def test_object_conservation_in_plans():
    frag = small_warehouse()
    v0 = start(frag, o1="W1", o2="W0")
    task = frag.task(v0, {frag.object_var("o1"): frag.slot["W4"]})
    res, tr, _ = sat_at(task, 5)
    assert res.status == SAT
    for k in range(tr.K + 1):
        held = [o for o in frag.objects if tr.value(frag.object_var(o), k) == CARRIED]
        assert len(held) <= 1
        assert bool(held) == tr.value(HOLDING, k)


# ---------------------------------------------------------------- plan checking


class _FakePlan:
    def __init__(self, trace, indices):
        self.trace = trace
        self.action_indices = indices


def test_empty_plan_with_equal_valuations():
    task = TaskLanguage(V, (NOOP,), {"v": 1}, {"v": 1})
    tr = BoundedTrace.from_columns(V, {"v": [1]})
    assert check_plan_against_task(_FakePlan(tr, []), task)


def test_violated_effect_reports_step():
    inc = Action("inc", TRUE, linear([(1, var("v", 1)), (-1, "v")], "=", 1))
    task = TaskLanguage(V, (inc,), {"v": 0}, {"v": 3})
    good = BoundedTrace.from_columns(V, {"v": [0, 1, 2, 3]})
    assert check_plan_against_task(_FakePlan(good, [1, 1, 1]), task)
    bad = BoundedTrace.from_columns(V, {"v": [0, 1, 2, 4]})
    chk = check_plan_against_task(_FakePlan(bad, [1, 1, 1]), task)
    assert isinstance(chk, Check) and not chk
    # the final valuation is checked before the per-step effects
    bad2 = BoundedTrace.from_columns(V, {"v": [0, 1, 1, 3]})
    chk2 = check_plan_against_task(_FakePlan(bad2, [1, 1, 1]), TaskLanguage(V, (inc,), {"v": 0}, {}))
    assert not chk2 and chk2.index == 1
    bad3 = BoundedTrace.from_columns(V, {"v": [0, 1, 2, 2]})
    chk3 = check_plan_against_task(_FakePlan(bad3, [1, 1, 1]), TaskLanguage(V, (inc,), {"v": 0}, {}))
    assert not chk3 and chk3.index == 2 and "effect" in chk3.message
