"""Closed-loop simulation: unicycle dynamics, a dynamic-window local planner,
moving obstacles, the safety supervisor and trace recording."""

from __future__ import annotations

import csv
import io
import logging
import math
import random
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .geometry import HPolytope
from .safety import (
    DRIVE,
    OVERRIDE,
    SafetyParams,
    closest_point_inf,
    stop_threshold,
    supervise,
    supervise_batch,
)

if TYPE_CHECKING:
    from .missiongame import MissionGraph, Strategy
    from .scenario import Scenario

log = logging.getLogger(__name__)

DT = 0.01
POS_TOL = 0.05
HEAD_TOL = 0.1
SENSOR_RANGE = 5.0


def wrap_angle(theta):
    """Map into (-pi, pi]."""
    out = np.mod(np.asarray(theta, dtype=float) + math.pi, 2 * math.pi) - math.pi
    out = np.where(out <= -math.pi, out + 2 * math.pi, out)
    return float(out) if np.ndim(out) == 0 else out


def wrap_angle_scalar(theta: float) -> float:
    out = math.fmod(theta + math.pi, 2 * math.pi)
    if out < 0:
        out += 2 * math.pi
    out -= math.pi
    return out + 2 * math.pi if out <= -math.pi else out


@dataclass(frozen=True)
class RobotState:
    px: float
    py: float
    theta: float = 0.0
    v: float = 0.0
    omega: float = 0.0

    @property
    def y(self) -> tuple[float, float, float]:
        return (self.px, self.py, self.theta)


@dataclass(frozen=True)
class Control:
    a: float = 0.0
    alpha: float = 0.0


# --------------------------------------------------------------------------
# dynamics


def _f(x, a, alpha):
    px, py, th, v, w = x
    return (v * np.cos(th), v * np.sin(th), w, a, alpha)


def _rk4(x, a, alpha, h):
    k1 = _f(x, a, alpha)
    k2 = _f(tuple(xi + h / 2 * ki for xi, ki in zip(x, k1)), a, alpha)
    k3 = _f(tuple(xi + h / 2 * ki for xi, ki in zip(x, k2)), a, alpha)
    k4 = _f(tuple(xi + h * ki for xi, ki in zip(x, k3)), a, alpha)
    return tuple(xi + h / 6 * (p + 2 * q + 2 * r + s) for xi, p, q, r, s in zip(x, k1, k2, k3, k4))


def integrate(px, py, th, v, w, a, alpha, dt):
    """One RK4 step; when braking would reverse, integrate to the stop and coast the remainder."""
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    stops = (a < 0) & (v + a * dt < 0)
    t_stop = np.where(stops, v / np.where(a < 0, -a, 1.0), dt)
    x = _rk4((px, py, th, v, w), a, alpha, t_stop)
    x = (x[0], x[1], x[2], np.where(stops, 0.0, x[3]), x[4])
    rest = dt - t_stop
    x2 = _rk4(x, 0.0, alpha, rest)
    px, py, th, v, w = (np.where(stops, b, c) for b, c in zip(x2, x))
    return px, py, wrap_angle(th), np.maximum(v, 0.0), w


def _f_scalar(x, a, alpha):
    px, py, th, v, w = x
    return (v * math.cos(th), v * math.sin(th), w, a, alpha)


def _rk4_scalar(x, a, alpha, h):
    k1 = _f_scalar(x, a, alpha)
    k2 = _f_scalar([xi + h / 2 * ki for xi, ki in zip(x, k1)], a, alpha)
    k3 = _f_scalar([xi + h / 2 * ki for xi, ki in zip(x, k2)], a, alpha)
    k4 = _f_scalar([xi + h * ki for xi, ki in zip(x, k3)], a, alpha)
    return [xi + h / 6 * (p + 2 * q + 2 * r + s) for xi, p, q, r, s in zip(x, k1, k2, k3, k4)]


def step_dynamics(state: RobotState, control: Control, dt: float = DT) -> RobotState:
    """Scalar twin of ``integrate``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    a, alpha = float(control.a), float(control.alpha)
    x = [state.px, state.py, state.theta, state.v, state.omega]
    if a < 0 and state.v + a * dt < 0:
        t_stop = state.v / -a
        x = _rk4_scalar(x, a, alpha, t_stop)
        x[3] = 0.0
        x = _rk4_scalar(x, 0.0, alpha, dt - t_stop)
    else:
        x = _rk4_scalar(x, a, alpha, dt)
    return RobotState(x[0], x[1], wrap_angle_scalar(x[2]), max(x[3], 0.0), x[4])


# --------------------------------------------------------------------------
# obstacles and sensing


@dataclass(frozen=True)
class ObstacleModel:
    name: str
    policy: str  # static | waypoint-loop | head-on-adversarial | scripted
    radius: float
    speed: float
    start: tuple[float, float]
    waypoints: tuple[tuple[float, float], ...] = ()
    script: tuple[tuple[float, float, float], ...] = ()  # (t, x, y) keyframes

    def __post_init__(self):
        if self.policy not in ("static", "waypoint-loop", "head-on-adversarial", "scripted"):
            raise ValueError(f"unknown obstacle policy {self.policy!r}")
        if self.radius <= 0 or self.speed < 0:
            raise ValueError("obstacle radius must be positive and speed non-negative")


class Obstacle:
    """Runtime state of one moving obstacle."""

    def __init__(self, model: ObstacleModel):
        self.model = model
        self.x, self.y = map(float, model.start)
        self.wp = 0

    @property
    def pos(self) -> tuple[float, float]:
        return (self.x, self.y)

    def _aim(self, t: float, robot: RobotState):
        m = self.model
        if m.policy == "waypoint-loop" and m.waypoints:
            tx, ty = m.waypoints[self.wp]
            if math.hypot(tx - self.x, ty - self.y) <= m.speed * DT * 0.5:
                self.wp = (self.wp + 1) % len(m.waypoints)
                tx, ty = m.waypoints[self.wp]
            return tx, ty
        if m.policy == "head-on-adversarial":
            return robot.px, robot.py
        if m.policy == "scripted" and m.script:
            times = [k[0] for k in m.script]
            if t <= times[0]:
                return m.script[0][1:]
            for (t0, x0, y0), (t1, x1, y1) in zip(m.script, m.script[1:]):
                if t0 <= t <= t1:
                    s = (t - t0) / (t1 - t0) if t1 > t0 else 1.0
                    return x0 + s * (x1 - x0), y0 + s * (y1 - y0)
            return m.script[-1][1:]
        return self.x, self.y

    def advance(self, t: float, dt: float, robot: RobotState) -> None:
        tx, ty = self._aim(t + dt, robot)
        dx, dy = tx - self.x, ty - self.y
        d = math.hypot(dx, dy)
        step = self.model.speed * dt
        if d <= step:
            self.x, self.y = float(tx), float(ty)
        else:
            self.x += dx / d * step
            self.y += dy / d * step


def sense(robot: RobotState, obstacles: Sequence[Obstacle], rng: float = SENSOR_RANGE):
    """Max-norm closest point over all obstacle discs in range, or ``None``."""
    best = None
    for ob in obstacles:
        qx, qy, t = closest_point_inf(robot.px, robot.py, ob.x, ob.y, ob.model.radius)
        if t <= rng and (best is None or t < best[2]):
            best = (float(qx), float(qy), float(t))
    return None if best is None else best[:2]


# --------------------------------------------------------------------------
# dynamic window local planner


@dataclass(frozen=True)
class DwaConfig:
    alpha_max: float = 2.0
    v_max: float = 1.0
    omega_max: float = 1.5
    period: float = 0.1
    horizon: float = 1.0
    nv: int = 9
    nw: int = 21
    pos_tol: float = POS_TOL
    head_tol: float = HEAD_TOL
    w_heading: float = 0.3
    w_clear: float = 1.5
    clear_margin: float = 0.6
    approach: float = 0.4  # fraction of B used to slow down near the target


def _brake(state: RobotState, p: SafetyParams, cfg: DwaConfig) -> Control:
    a = max(-p.B, min(p.A, -state.v / cfg.period))
    alpha = max(-cfg.alpha_max, min(cfg.alpha_max, -state.omega / cfg.period))
    return Control(a, alpha)


def _facets(poly: HPolytope | None):
    if poly is None:
        return None, None
    H = np.array([[float(f.h[0]), float(f.h[1])] for f in poly.facets])
    c = np.array([float(f.c) for f in poly.facets])
    return H, c


def dwa_plan(state: RobotState, target, corridor: HPolytope | None, sensed, params: SafetyParams,
             cfg: DwaConfig = DwaConfig()) -> Control:
    """Pick the best reachable (v, omega) sample and return the accelerations that realize it."""
    tx, ty = float(target[0]), float(target[1])
    heading = None if len(target) < 3 or target[2] is None else float(target[2])
    T = cfg.period
    dx, dy = tx - state.px, ty - state.py
    dist = math.hypot(dx, dy)
    if dist <= cfg.pos_tol:
        if heading is None or state.v > 0:
            return _brake(state, params, cfg)
        err = wrap_angle(heading - state.theta)
        w_des = 0.0 if abs(err) < cfg.head_tol / 2 else math.copysign(
            min(cfg.omega_max, math.sqrt(cfg.alpha_max * abs(err))), err)
        alpha = max(-cfg.alpha_max, min(cfg.alpha_max, (w_des - state.omega) / T))
        return Control(0.0, alpha)

    v_lo = max(0.0, state.v - params.B * T)
    v_hi = min(cfg.v_max, state.v + params.A * T)
    w_lo = max(-cfg.omega_max, state.omega - cfg.alpha_max * T)
    w_hi = min(cfg.omega_max, state.omega + cfg.alpha_max * T)
    vs = np.unique(np.concatenate([np.linspace(v_lo, max(v_lo, v_hi), cfg.nv), [min(max(state.v, v_lo), v_hi)]]))
    extra = [state.omega] + ([0.0] if w_lo <= 0.0 <= w_hi else [])
    ws = np.unique(np.concatenate([np.linspace(w_lo, max(w_lo, w_hi), cfg.nw), extra]))
    V, W = (g.ravel() for g in np.meshgrid(vs, ws, indexing="ij"))

    bearing = math.atan2(dy, dx)
    b_err = wrap_angle(bearing - state.theta)
    v_cap = min(cfg.v_max, math.sqrt(2 * cfg.approach * params.B * dist), cfg.v_max * max(0.0, math.cos(b_err)))
    if abs(b_err) > math.pi / 3:
        v_cap = 0.0
    ok = V <= max(v_lo, v_cap) + 1e-12

    # closed-form arcs sampled over the horizon, then a straight braking tail
    ts = np.arange(1, int(round(cfg.horizon / 0.05)) + 1) * 0.05
    th = state.theta + np.outer(W, ts)
    small = np.abs(W) < 1e-9
    Wsafe = np.where(small, 1.0, W)
    arc_x = np.where(small[:, None], np.outer(V, ts) * math.cos(state.theta),
                     (V / Wsafe)[:, None] * (np.sin(th) - math.sin(state.theta)))
    arc_y = np.where(small[:, None], np.outer(V, ts) * math.sin(state.theta),
                     -(V / Wsafe)[:, None] * (np.cos(th) - math.cos(state.theta)))
    X = state.px + arc_x
    Y = state.py + arc_y
    tail = V * V / (2 * params.B)
    X = np.concatenate([X, (X[:, -1] + tail * np.cos(th[:, -1]))[:, None]], axis=1)
    Y = np.concatenate([Y, (Y[:, -1] + tail * np.sin(th[:, -1]))[:, None]], axis=1)

    H, c = _facets(corridor)
    if H is not None:
        now = np.maximum(H @ np.array([state.px, state.py]) - c, 0.0)
        viol = H[:, 0][None, None, :] * X[:, :, None] + H[:, 1][None, None, :] * Y[:, :, None] - c
        ok &= np.all(viol <= now[None, None, :] + 1e-9, axis=(1, 2))
    clear_cost = 0.0
    if sensed is not None:
        qx, qy = sensed
        dmin = np.min(np.hypot(X - qx, Y - qy), axis=1)
        ok &= (dmin > params.D_s) | (V <= v_lo + 1e-12)
        clear_cost = cfg.w_clear * np.maximum(0.0, cfg.clear_margin - (dmin - params.D_s))
    if not ok.any():
        return _brake(state, params, cfg)

    ex, ey = X[:, -2], Y[:, -2]
    d_end = np.hypot(tx - ex, ty - ey)
    err_end = np.abs(wrap_angle(np.arctan2(ty - ey, tx - ex) - th[:, -1]))
    cost = d_end + cfg.w_heading * err_end * np.minimum(1.0, d_end) + clear_cost + 0.01 * np.abs(W)
    cost = np.where(ok, cost, np.inf)
    i = int(np.argmin(cost))
    a = max(-params.B, min(params.A, (V[i] - state.v) / T))
    alpha = max(-cfg.alpha_max, min(cfg.alpha_max, (W[i] - state.omega) / T))
    return Control(a, alpha)


def arrived(state: RobotState, target, cfg: DwaConfig = DwaConfig()) -> bool:
    if math.hypot(float(target[0]) - state.px, float(target[1]) - state.py) > cfg.pos_tol:
        return False
    if len(target) >= 3 and target[2] is not None:
        return abs(wrap_angle(float(target[2]) - state.theta)) <= cfg.head_tol
    return True


def drive_to(state: RobotState, target, corridor: HPolytope | None, params: SafetyParams,
             cfg: DwaConfig = DwaConfig(), dt: float = DT, max_t: float = 60.0):
    """Obstacle-free helper: run DWA until arrival; returns (final state, elapsed, states)."""
    per = max(1, int(round(cfg.period / dt)))
    states = [state]
    ctl = Control()
    t = 0.0
    n = 0
    while not arrived(state, target, cfg):
        if t > max_t:
            break
        if n % per == 0:
            ctl = dwa_plan(state, target, corridor, None, params, cfg)
        state = step_dynamics(state, ctl, dt)
        states.append(state)
        t += dt
        n += 1
    return state, t, states


# --------------------------------------------------------------------------
# traces


@dataclass
class TraceRecord:
    dt: float
    obstacle_names: tuple[str, ...] = ()
    rows: list[tuple] = field(default_factory=list)
    events: list[tuple[float, str]] = field(default_factory=list)
    status: str = "running"
    mission_run: list = field(default_factory=list)

    def header(self) -> list[str]:
        cols = ["t", "px", "py", "theta", "v", "omega", "a", "alpha", "mode", "step", "action"]
        for i in range(1, len(self.obstacle_names) + 1):
            cols += [f"obst{i}x", f"obst{i}y"]
        return cols

    def add(self, t, s: RobotState, c: Control, mode: str, step: int, action: str, obstacles) -> None:
        row = (t, s.px, s.py, s.theta, s.v, s.omega, c.a, c.alpha, mode, step, action)
        for ob in obstacles:
            row += ob.pos
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        i = self.header().index(name)
        return np.array([r[i] for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        for r in self.rows:
            w.writerow([f"{x:.6f}" if isinstance(x, float) else x for x in r])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, dt: float = DT) -> "TraceRecord":
        rd = csv.reader(io.StringIO(text))
        head = next(rd)
        n_obs = (len(head) - 11) // 2
        rec = cls(dt, tuple(f"obst{i}" for i in range(1, n_obs + 1)))
        for r in rd:
            vals = [float(x) for x in r[:8]] + [r[8], int(r[9]), r[10]] + [float(x) for x in r[11:]]
            rec.rows.append(tuple(vals))
        if rec.rows and len(rec.rows) > 1:
            rec.dt = round(rec.rows[1][0] - rec.rows[0][0], 9)
        return rec


def nonholonomic_residual(trace: TraceRecord) -> float:
    """Max lateral velocity ``|-px' sin(theta) + py' cos(theta)|`` by central differences."""
    px, py, th = (trace.column(c) for c in ("px", "py", "theta"))
    if len(px) < 3:
        return 0.0
    h = trace.dt
    vx = (px[2:] - px[:-2]) / (2 * h)
    vy = (py[2:] - py[:-2]) / (2 * h)
    return float(np.max(np.abs(-vx * np.sin(th[1:-1]) + vy * np.cos(th[1:-1]))))


# --------------------------------------------------------------------------
# episodes


@dataclass
class EpisodeResult:
    trace: TraceRecord
    status: str  # satisfied | timeout | blocked | violated
    final_state: object = None
    override_ticks: int = 0

    @property
    def events(self):
        return self.trace.events


class _Runner:
    def __init__(self, scn: "Scenario", seed: int, max_t: float):
        self.scn = scn
        self.params = scn.safety
        self.cfg = scn.dwa
        self.dt = scn.dt
        self.per = max(1, int(round(self.cfg.period / self.dt)))
        r = scn.robot
        self.state = RobotState(r.x, r.y, r.theta, 0.0, 0.0)
        self.obstacles = [Obstacle(m) for m in scn.dynamic_obstacles]
        self.trace = TraceRecord(self.dt, tuple(m.name for m in scn.dynamic_obstacles))
        self.mode = DRIVE
        self.t = 0.0
        self.tick = 0
        self.max_t = max_t
        self.override_ticks = 0

    def drive(self, target, corridor, step: int, action: str) -> str:
        ctl = Control()
        replan = True
        stopped_blocked = 0.0
        n = 0
        while not arrived(self.state, target, self.cfg):
            if self.t >= self.max_t:
                return "timeout"
            sensed = sense(self.state, self.obstacles)
            if replan or n % self.per == 0:
                ctl = dwa_plan(self.state, target, corridor, sensed, self.params, self.cfg)
                replan = False
            (a, alpha), mode = supervise(self.state, sensed, (ctl.a, ctl.alpha), self.params, self.mode)
            if mode != self.mode:
                replan = True
            self.mode = mode
            applied = Control(a, alpha)
            self.trace.add(round(self.tick * self.dt, 9), self.state, applied, mode, step, action, self.obstacles)
            if mode == OVERRIDE:
                self.override_ticks += 1
                stopped_blocked = stopped_blocked + self.dt if self.state.v == 0 else 0.0
                if stopped_blocked > self.scn.block_timeout:
                    return "blocked"
            for ob in self.obstacles:
                ob.advance(self.t, self.dt, self.state)
            self.state = step_dynamics(self.state, applied, self.dt)
            self.tick += 1
            self.t = self.tick * self.dt
            n += 1
        return "arrived"


def run_episode(scn: "Scenario", strategy: "Strategy", graph: "MissionGraph", seed: int = 0,
                max_t: float = 600.0) -> EpisodeResult:
    from .missiongame import ENV, SYS, Reachability, SafeBuchi, Safety, SymbolicAction, _pred

    run = _Runner(scn, seed, max_t)
    rng = random.Random(seed)
    cond = scn.condition
    obj = cond.objective
    inits = cond.init_states(graph)
    if not inits:
        raise ValueError("no mission state satisfies the initial condition")
    m = inits[0]
    mem = strategy.initial_memory
    script = list(scn.env_script)
    rounds = 0
    status = "satisfied"
    run.trace.mission_run.append(m)
    safe = _pred(obj.safe) if isinstance(obj, (Safety, SafeBuchi)) else None
    while True:
        if safe is not None and not safe(m):
            status = "violated"
            break
        if isinstance(obj, Reachability) and _pred(obj.goal)(m):
            break
        if rounds >= scn.max_rounds:
            status = "satisfied" if not isinstance(obj, Reachability) else "timeout"
            break
        moves = graph.moves(m)
        if graph.turn(m) == ENV:
            if not moves:
                break
            idx = None
            while script and idx is None:
                want = script.pop(0)
                idx = next((i for i, (a, _) in enumerate(moves) if want in str(a)), None)
            if idx is None:
                idx = rng.randrange(len(moves))
            if (mem, m) in strategy.table:
                mem = strategy.choose(mem, m)[1]
            act, m = moves[idx]
            run.trace.events.append((round(run.t, 9), f"env {act}"))
        else:
            act, nxt = strategy.choose(mem, m)
            if not isinstance(act, SymbolicAction) or act.plan is None:
                raise ValueError(f"system action {act} has no plan to execute")
            plan = act.plan
            for k in range(plan.K):
                x, y, th = (float(q) for q in plan.targets[k])
                target = (x, y, th if scn.robot.enforce_heading else None)
                name = plan.actions[k]
                res = run.drive(target, plan.tunnel[k], k + 1, name)
                if res != "arrived":
                    status = res
                    break
                if name.startswith(("pick", "drop")):
                    run.trace.events.append((round(run.t, 9), name))
            else:
                m, mem = next(t for a, t in moves if a == act), nxt
                rounds += 1
                run.trace.mission_run.append(m)
                continue
            break
        run.trace.mission_run.append(m)
    run.trace.status = status
    return EpisodeResult(run.trace, status, m, run.override_ticks)


# --------------------------------------------------------------------------
# batched passive-safety harness


@dataclass
class SafetyStats:
    episodes: int
    ticks: int
    moving_collisions: int
    pf_inf_failures: int
    pf_euclid_failures: int
    override_ticks: int
    by_policy: dict = field(default_factory=dict)


POLICIES = ("head-on", "cut-in", "stop-and-go")


def passive_safety_batch(n: int, params: SafetyParams, duration: float = 2.0, dt: float = DT,
                         alpha_max: float = 2.0, v_max: float = 1.5, seed: int = 0) -> SafetyStats:
    """Random drive commands against adversarial obstacles; counts invariant violations.

    Episodes start where the max-norm passive-safety formula holds.
    """
    g = np.random.default_rng(seed)
    policy = g.integers(0, len(POLICIES), n)
    px = np.zeros(n)
    py = np.zeros(n)
    th = g.uniform(-math.pi, math.pi, n)
    v = g.uniform(0, v_max, n)
    w = g.uniform(-1, 1, n)
    r = g.uniform(0.1, 0.5, n)
    # obstacle ahead of the robot, just outside the stopping envelope
    need = stop_threshold(v, params)
    gap = need + g.uniform(0.0, 1.5, n) ** 2
    off = g.uniform(-0.6, 0.6, n)
    ox = np.zeros(n)
    oy = np.zeros(n)
    todo = np.ones(n, bool)
    while todo.any():
        k = todo.sum()
        ang = th[todo] + off[todo]
        dist = gap[todo] + r[todo] + g.uniform(0, 0.3, k)
        ox[todo] = px[todo] + dist * np.cos(ang)
        oy[todo] = py[todo] + dist * np.sin(ang)
        _, _, t = closest_point_inf(px[todo], py[todo], ox[todo], oy[todo], r[todo])
        good = (v[todo] == 0) | (t > need[todo])
        idx = np.flatnonzero(todo)
        todo[idx[good]] = False
        gap[idx[~good]] += 0.1
    go_period = g.uniform(0.2, 1.0, n)
    go_phase = g.uniform(0, 1.0, n)
    override = np.zeros(n, bool)
    a_cmd = np.zeros(n)
    al_cmd = np.zeros(n)
    steps = int(round(duration / dt))
    per = max(1, int(round(0.1 / dt)))
    stats = SafetyStats(n, 0, 0, 0, 0, 0, {p: 0 for p in POLICIES})
    for step in range(steps):
        t = step * dt
        qx, qy, dinf = closest_point_inf(px, py, ox, oy, r)
        deuc = np.maximum(np.hypot(px - ox, py - oy) - r, 0.0)
        moving = v > 0
        bad = moving & (deuc <= params.D_s)
        pf_inf = ~moving | (dinf > stop_threshold(v, params))
        pf_euc = ~moving | (deuc > stop_threshold(v, params))
        stats.ticks += n
        stats.moving_collisions += int(bad.sum())
        stats.pf_inf_failures += int((~pf_inf).sum())
        stats.pf_euclid_failures += int((~pf_euc).sum())
        for i, name in enumerate(POLICIES):
            stats.by_policy[name] += int((~pf_inf & (policy == i)).sum())
        if step % per == 0:
            full = g.random(n) < 0.5
            a_cmd = np.where(full, params.A, g.uniform(-params.B, params.A, n))
            al_cmd = g.uniform(-alpha_max, alpha_max, n)
        a, al, override = supervise_batch(px, py, v, qx, qy, a_cmd, al_cmd, override, params)
        stats.override_ticks += int(override.sum())
        # obstacle motion, speed at most V_obs
        hx = np.cos(th)
        hy = np.sin(th)
        look = np.maximum(v, 0.3) * 0.8
        aim_x = np.where(policy == 1, px + hx * look, px)
        aim_y = np.where(policy == 1, py + hy * look, py)
        dx, dy = aim_x - ox, aim_y - oy
        d = np.hypot(dx, dy)
        speed = np.full(n, params.V_obs)
        stopgo = policy == 2
        moving_phase = np.mod(t / go_period + go_phase, 1.0) < 0.5
        speed = np.where(stopgo & ~moving_phase, 0.0, speed)
        stepl = np.minimum(speed * dt, d)
        d = np.where(d > 0, d, 1.0)
        ox = ox + dx / d * stepl
        oy = oy + dy / d * stepl
        px, py, th, v, w = integrate(px, py, th, v, w, a, al, dt)
    return stats
