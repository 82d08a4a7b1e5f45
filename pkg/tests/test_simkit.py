from __future__ import annotations

import dataclasses
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tamplan.geometry import HPolytope
from tamplan.safety import SafetyParams
from tamplan.simkit import (
    DT,
    POS_TOL,
    Control,
    DwaConfig,
    Obstacle,
    ObstacleModel,
    RobotState,
    TraceRecord,
    arrived,
    drive_to,
    dwa_plan,
    integrate,
    nonholonomic_residual,
    passive_safety_batch,
    run_episode,
    sense,
    step_dynamics,
    wrap_angle,
    wrap_angle_scalar,
)

P = SafetyParams()


# ---------------------------------------------------------------- dynamics


def test_straight_line_step():
    s = step_dynamics(RobotState(0.0, 0.0, 0.0, 1.0, 0.0), Control(), 0.1)
    assert s.px == pytest.approx(0.1, abs=1e-15)
    assert (s.py, s.theta, s.v, s.omega) == (0.0, 0.0, 1.0, 0.0)


def test_pure_rotation():
    s = step_dynamics(RobotState(1.0, 2.0, 0.0, 0.0, 0.7), Control(), 0.5)
    assert (s.px, s.py) == (1.0, 2.0)
    assert s.theta == pytest.approx(0.35)


def test_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        step_dynamics(RobotState(0, 0), Control(), 0.0)


def test_braking_stops_without_reverse():
    s = step_dynamics(RobotState(0.0, 0.0, 0.0, 0.05, 0.0), Control(-1.0, 0.0), 0.1)
    assert s.v == 0.0
    assert s.px == pytest.approx(0.05**2 / 2)


def _run(dt, T=1.0):
    s = RobotState(0.0, 0.0, 0.3, 0.4, 0.2)
    for _ in range(int(round(T / dt))):
        s = step_dynamics(s, Control(0.3, 0.5), dt)
    return np.array([s.px, s.py, s.theta, s.v, s.omega])


def test_rk4_order():
    dt = 0.1
    ref = _run(dt / 8)
    e1 = np.linalg.norm(_run(dt) - ref)
    e2 = np.linalg.norm(_run(dt / 2) - ref)
    # against a dt/8 reference the ideal ratio is (1 - 8**-4) / (2**-4 - 8**-4) = 16.06
    assert e1 / e2 >= 12


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50))
def test_wrap_angle(theta):
    w = wrap_angle_scalar(theta)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(theta), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(theta), abs_tol=1e-9)
    assert wrap_angle(theta) == pytest.approx(w, abs=1e-12) or abs(abs(w) - math.pi) < 1e-9


def test_wrap_angle_boundary():
    assert wrap_angle_scalar(math.pi) == math.pi
    assert wrap_angle_scalar(-math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi


def test_batched_integration_matches_scalar():
    rng = np.random.default_rng(0)
    n = 200
    x = [rng.uniform(-1, 1, n), rng.uniform(-1, 1, n), rng.uniform(-3, 3, n), rng.uniform(0, 1, n),
         rng.uniform(-1, 1, n)]
    a = rng.uniform(-1, 0.5, n)
    al = rng.uniform(-2, 2, n)
    out = integrate(*x, a, al, 0.2)
    for i in range(n):
        s = step_dynamics(RobotState(*(float(c[i]) for c in x)), Control(a[i], al[i]), 0.2)
        assert [s.px, s.py, s.theta, s.v, s.omega] == pytest.approx([float(c[i]) for c in out], abs=1e-12)


# ---------------------------------------------------------------- DWA


CORRIDOR = HPolytope.box(0, 0, 6, 4)


def test_dwa_target_ahead_accelerates():
    s = RobotState(1.0, 2.0, 0.0, 0.0, 0.0)
    c = dwa_plan(s, (5.0, 2.0), CORRIDOR, None, P)
    assert c.a > 0 and abs(c.alpha) < 1e-9


def test_dwa_target_behind_stops_then_turns():
    s = RobotState(3.0, 2.0, 0.0, 0.6, 0.0)
    cfg = DwaConfig()
    states = [s]
    for n in range(400):
        if n % 10 == 0:
            c = dwa_plan(s, (0.5, 2.0), CORRIDOR, None, P, cfg)
        s = step_dynamics(s, c, DT)
        states.append(s)
    first_stop = next(i for i, q in enumerate(states) if q.v == 0)
    # no net turning while still rolling forward at speed
    assert all(abs(q.theta) < math.pi / 3 for q in states[:first_stop])
    assert abs(wrap_angle_scalar(states[-1].theta - math.pi)) < abs(states[first_stop].theta - math.pi)


def test_dwa_convergence_from_random_starts():
    rng = random.Random(1)
    box = HPolytope.box(0, 0, 5, 5)
    cfg = DwaConfig()
    worst = 0.0
    for _ in range(100):
        s = RobotState(rng.uniform(0.5, 4.5), rng.uniform(0.5, 4.5), rng.uniform(-math.pi, math.pi))
        target = (rng.uniform(0.5, 4.5), rng.uniform(0.5, 4.5), rng.uniform(-math.pi, math.pi))
        end, t, states = drive_to(s, target, box, P, cfg, max_t=40.0)
        assert arrived(end, target, cfg), (s, target)
        assert all(box.contains((q.px, q.py)) or min(q.px, q.py, 5 - q.px, 5 - q.py) > -1e-6 for q in states)
        worst = max(worst, t)
    assert worst < 40.0


def test_dwa_never_leaves_corridor():
    narrow = HPolytope.box(0, 0, 6, 1)
    end, _, states = drive_to(RobotState(0.5, 0.5, 0.3), (5.5, 0.5, None), narrow, P)
    assert arrived(end, (5.5, 0.5, None))
    assert all(-1e-6 <= q.py <= 1 + 1e-6 for q in states)


# ---------------------------------------------------------------- traces


def _trace(states, dt):
    tr = TraceRecord(dt)
    for k, s in enumerate(states):
        tr.add(k * dt, s, Control(), "drive", 1, "goto", [])
    return tr


def test_residual_straight_line():
    s = RobotState(0.0, 0.0, 0.7, 1.0, 0.0)
    states = [s]
    for _ in range(50):
        s = step_dynamics(s, Control(), DT)
        states.append(s)
    assert nonholonomic_residual(_trace(states, DT)) < 1e-12


def test_residual_arc_is_second_order():
    def arc(dt):
        v, w = 1.0, 0.8
        ts = np.arange(0, 2, dt)
        states = [RobotState(v / w * math.sin(w * t), v / w * (1 - math.cos(w * t)), wrap_angle_scalar(w * t), v, w)
                  for t in ts]
        return nonholonomic_residual(_trace(states, dt))

    # on a constant-curvature arc the central chord is tangent at the midpoint
    assert arc(0.02) < 1e-12 and arc(0.01) < 1e-12

    def spiral(dt):
        s = RobotState(0.0, 0.0, 0.0, 0.5, 0.0)
        states = [s]
        for _ in range(int(round(2 / dt))):
            s = step_dynamics(s, Control(0.3, 1.0), dt)
            states.append(s)
        return nonholonomic_residual(_trace(states, dt))

    r1, r2 = spiral(0.02), spiral(0.01)
    assert r2 < 1e-4
    assert 3.5 < r1 / r2 < 4.5


def test_trace_csv_round_trip():
    tr = TraceRecord(DT, ("R3",))
    ob = Obstacle(ObstacleModel("R3", "static", 0.3, 0.0, (1.0, 1.0)))
    for k in range(5):
        tr.add(round(k * DT, 9), RobotState(k / 3, 0.5, 0.1, 0.2, 0.0), Control(0.1, -0.2), "drive", 2, "move(W1)", [ob])
    text = tr.to_csv()
    assert text.splitlines()[0] == "t,px,py,theta,v,omega,a,alpha,mode,step,action,obst1x,obst1y"
    back = TraceRecord.from_csv(text)
    assert back.dt == DT and back.to_csv() == text
    assert back.rows[1][1] == pytest.approx(1 / 3, abs=1e-6)


# ---------------------------------------------------------------- obstacles


@pytest.mark.parametrize("policy", ["static", "waypoint-loop", "head-on-adversarial", "scripted"])
def test_obstacle_speed_bound(policy):
    m = ObstacleModel("b", policy, 0.3, 0.8, (0.0, 0.0), waypoints=((3.0, 0.0), (3.0, 3.0)),
                      script=((0.0, 0.0, 0.0), (1.0, 5.0, 5.0), (2.0, 0.0, 0.0)))
    ob = Obstacle(m)
    robot = RobotState(2.0, 2.0)
    prev = ob.pos
    for k in range(400):
        ob.advance(k * DT, DT, robot)
        assert math.dist(prev, ob.pos) <= m.speed * DT + 1e-12
        prev = ob.pos
    if policy == "static":
        assert ob.pos == (0.0, 0.0)


def test_obstacle_model_validation():
    with pytest.raises(ValueError):
        ObstacleModel("b", "teleport", 0.3, 0.1, (0, 0))
    with pytest.raises(ValueError):
        ObstacleModel("b", "static", 0.0, 0.1, (0, 0))


def test_sense_picks_closest_in_range():
    robot = RobotState(0.0, 0.0)
    near = Obstacle(ObstacleModel("a", "static", 0.5, 0.0, (2.0, 0.0)))
    far = Obstacle(ObstacleModel("b", "static", 0.5, 0.0, (0.0, 3.0)))
    assert sense(robot, [far, near]) == pytest.approx((1.5, 0.0))
    assert sense(robot, [Obstacle(ObstacleModel("c", "static", 0.5, 0.0, (9.0, 0.0)))]) is None


# ---------------------------------------------------------------- safety harness and episodes


def test_passive_safety_small_batch():
    stats = passive_safety_batch(300, P, seed=7)
    assert stats.episodes == 300 and stats.ticks == 300 * 200
    assert stats.moving_collisions == 0
    assert stats.pf_inf_failures == 0
    assert stats.override_ticks > 0


def test_episode_without_obstacles(warehouse, warehouse_graph, warehouse_strategy):
    calm = dataclasses.replace(warehouse, dynamic_obstacles=())
    res = run_episode(calm, warehouse_strategy, warehouse_graph, seed=0)
    assert res.status == "satisfied"
    assert res.override_ticks == 0
    assert nonholonomic_residual(res.trace) < 1e-3
    t = res.trace.column("t")
    assert np.all(np.diff(t) > 0) and np.allclose(np.diff(t), DT)
    again = run_episode(calm, warehouse_strategy, warehouse_graph, seed=0)
    assert again.trace.to_csv() == res.trace.to_csv()


def _outside(poly: HPolytope, p) -> float:
    return max((float(f.h[0]) * p[0] + float(f.h[1]) * p[1] - float(f.c)) / math.hypot(float(f.h[0]), float(f.h[1]))
               for f in poly.facets)


def test_drive_stays_in_tunnel(warehouse, warehouse_graph, warehouse_strategy):
    res = run_episode(warehouse, warehouse_strategy, warehouse_graph, seed=0)
    by_label = {m.label(): m for m in warehouse_graph.states}
    run = [by_label[m.label()] for m in res.trace.mission_run]
    plans = []
    for a, b in zip(run, run[1:]):
        e = next((e for e in warehouse_graph.sys_edges if e.source == a and e.target == b), None)
        if e is not None:
            plans.append(e.action.plan)
    rows = res.trace.rows
    seg, worst = -1, 0.0
    for i, r in enumerate(rows):
        step, mode = r[9], r[8]
        if i == 0 or step < rows[i - 1][9]:
            seg += 1
        if mode != "drive":
            continue
        tunnel = plans[seg].tunnel
        k = step - 1
        dist = min(_outside(tunnel[j], (r[1], r[2])) for j in (k, k + 1) if j < len(tunnel))
        worst = max(worst, dist)
    assert seg == len(plans) - 1
    assert worst <= POS_TOL
