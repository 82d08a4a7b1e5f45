"""Iterative-deepening task and motion planning over bounded horizons."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .encoder import SAT, UNKNOWN, UNSAT, Z3, ConstraintSystem, SolverHandle, decode_model, encode, solve
from .geometry import (
    PX,
    PY,
    CObstacle,
    Facet,
    HPolytope,
    Tunnel,
    Workspace,
    build_phi_safe,
    segment_hits_interior,
    tunnel_valid,
)
from .ltlk import BoundedTrace, Formula, conj, eval_formula
from .taskspec import ACTION, THETA, TaskLanguage, build_phi_task, check_trace_against_task

log = logging.getLogger(__name__)

DEFAULT_KMAX = 20


class ItmpError(RuntimeError):
    pass


class SelectorInconsistency(ItmpError):
    """No outer half-plane of some C-obstacle holds at two consecutive steps."""


class SolverUnknown(ItmpError):
    def __init__(self, K: int, raw: str = ""):
        super().__init__(f"solver answered unknown at horizon {K}; giving up instead of guessing")
        self.K = K
        self.raw = raw


@dataclass(frozen=True)
class PlanRequest:
    workspace: Workspace
    cobstacles: tuple[CObstacle, ...]
    task: TaskLanguage
    K_max: int = DEFAULT_KMAX
    backend: SolverHandle = Z3

    def __post_init__(self):
        object.__setattr__(self, "cobstacles", tuple(self.cobstacles))
        if self.K_max < 1:
            raise ValueError("K_max must be at least 1")
        for name in (PX, PY):
            if name not in self.task.universe:
                raise ValueError(f"task universe lacks position variable {name!r}")

    @property
    def universe(self):
        return self.task.action_universe()

    def formula(self) -> Formula:
        return conj(build_phi_safe(self.workspace, self.cobstacles), build_phi_task(self.task))


@dataclass(frozen=True)
class Plan:
    K: int
    actions: tuple[str, ...]
    action_indices: tuple[int, ...]
    targets: tuple[tuple[Fraction, Fraction, Fraction], ...]
    tunnel: Tunnel
    trace: BoundedTrace

    @property
    def start(self) -> tuple[Fraction, Fraction, Fraction]:
        return _config(self.trace, 0)

    def to_json(self) -> dict:
        steps = []
        for k in range(1, self.K + 1):
            steps.append({
                "k": k,
                "action": self.actions[k - 1],
                "target": [_jnum(x) for x in self.targets[k - 1]],
                "polytope": {"facets": self.tunnel[k - 1].to_json()},
            })
        trace = {name: [_jnum(v) for v in self.trace.column(name)] for name in self.trace.universe.names}
        return {"K": self.K, "start": [_jnum(x) for x in self.start], "steps": steps, "trace": trace}

    @classmethod
    def from_json(cls, data: dict, task: TaskLanguage) -> "Plan":
        universe = task.action_universe()
        cols = {}
        for name in universe.names:
            col = data["trace"][name]
            cols[name] = [v if isinstance(v, bool) else Fraction(v) for v in col]
        trace = BoundedTrace.from_columns(universe, cols)
        K = int(data["K"])
        indices = tuple(int(trace.value(ACTION, k)) for k in range(K))
        actions = tuple(s["action"] for s in data["steps"])
        targets = tuple(tuple(Fraction(x) for x in s["target"]) for s in data["steps"])
        tunnel = Tunnel(tuple(HPolytope.from_json(s["polytope"]) for s in data["steps"]))
        return cls(K, actions, indices, targets, tunnel, trace)

    def lines(self) -> list[str]:
        out = []
        for k, (act, (x, y, th)) in enumerate(zip(self.actions, self.targets), start=1):
            out.append(f"{k}: {act} @ ({float(x):.3f}, {float(y):.3f}, {float(th):.3f})")
        return out


def _jnum(v):
    if isinstance(v, bool):
        return v
    if isinstance(v, int):
        return v
    q = Fraction(v)
    return q.numerator if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _config(trace: BoundedTrace, k: int):
    th = trace.value(THETA, k) if THETA in trace.universe else Fraction(0)
    return (trace.value(PX, k), trace.value(PY, k), th)


@dataclass
class ItmpResult:
    status: str
    plan: Plan | None = None
    K: int = 0
    attempts: list[tuple[int, str, float]] = field(default_factory=list)  # (K, status, seconds)
    system: ConstraintSystem | None = None

    @property
    def solver_time(self) -> float:
        return sum(t for _, _, t in self.attempts)


def itmp(request: PlanRequest, K_min: int = 1) -> ItmpResult:
    """Deepen K from ``K_min`` until the first satisfiable horizon or ``K_max``."""
    phi = request.formula()
    universe = request.universe
    result = ItmpResult(UNSAT)
    for K in range(K_min, request.K_max + 1):
        cs = encode(phi, K, universe)
        res = solve(cs, request.backend)
        result.attempts.append((K, res.status, res.solver_time))
        result.system = cs
        log.debug("horizon %d: %s (%.3fs)", K, res.status, res.solver_time)
        if res.status == UNKNOWN:
            raise SolverUnknown(K, res.raw)
        if res.status == SAT:
            trace = decode_model(res, universe, K)
            result.status, result.K = SAT, K
            result.plan = extract_plan(trace, request)
            return result
    result.K = request.K_max
    return result


def active_half_plane(cb: CObstacle, trace: BoundedTrace, k: int) -> Facet:
    """First outer half-plane of ``cb`` holding at both ``k-1`` and ``k``."""
    p0 = (trace.value(PX, k - 1), trace.value(PY, k - 1))
    p1 = (trace.value(PX, k), trace.value(PY, k))
    for f in cb.inflated.facets:
        side = f.complement()
        if side.holds(p0) and side.holds(p1):
            return side
    raise SelectorInconsistency(f"no half-plane of C-obstacle {cb.source} is active at steps {k - 1} and {k}")


def extract_plan(trace: BoundedTrace, request: PlanRequest) -> Plan:
    K = trace.K
    indices = tuple(int(trace.value(ACTION, k)) for k in range(K))
    names = []
    for i in indices:
        if not 1 <= i <= len(request.task.actions):
            raise ItmpError(f"action index {i} out of range")
        names.append(request.task.actions[i - 1].name)
    targets = tuple(_config(trace, k) for k in range(1, K + 1))
    polys = []
    for k in range(1, K + 1):
        facets = list(request.workspace.boundary.facets)
        facets += [active_half_plane(cb, trace, k) for cb in request.cobstacles]
        polys.append(HPolytope(tuple(facets)))
    return Plan(K, tuple(names), indices, targets, Tunnel(tuple(polys)), trace)


@dataclass
class PlanReport:
    checks: list[tuple[str, bool, str]] = field(default_factory=list)

    def add(self, name: str, ok, message: str = "") -> None:
        self.checks.append((name, bool(ok), message or getattr(ok, "message", "")))

    @property
    def ok(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def failures(self) -> list[str]:
        return [f"{name}: {msg}" for name, ok, msg in self.checks if not ok]

    def __bool__(self) -> bool:
        return self.ok

    def to_json(self) -> dict:
        return {"ok": self.ok, "checks": [{"name": n, "ok": o, "message": m} for n, o, m in self.checks]}


def _polyline_ok(points: Sequence, workspace: Workspace, cobstacles: Sequence[CObstacle]) -> tuple[bool, str]:
    for k, p in enumerate(points):
        if not workspace.boundary.contains(p[:2]):
            return False, f"waypoint {k} lies outside the workspace"
    for k in range(1, len(points)):
        a, b = points[k - 1][:2], points[k][:2]
        for cb in cobstacles:
            if segment_hits_interior(a, b, cb.inflated):
                return False, f"segment {k} crosses C-obstacle {cb.source}"
    return True, ""


def validate_plan(plan: Plan, request: PlanRequest) -> PlanReport:
    rep = PlanReport()
    task = request.task
    shape = len(plan.actions) == len(plan.targets) == len(plan.tunnel) == plan.K == plan.trace.K
    rep.add("shape", shape, "" if shape else "T, Y, P and the horizon disagree")
    bad = [k for k, i in enumerate(plan.action_indices) if not 1 <= i <= len(task.actions)]
    rep.add("action-range", not bad, f"action index out of range at step {bad[0]}" if bad else "")
    if not shape or bad:
        return rep
    trace_ok = all(plan.trace.value(ACTION, k) == i for k, i in enumerate(plan.action_indices))
    trace_ok = trace_ok and all(_config(plan.trace, k) == y for k, y in enumerate(plan.targets, start=1))
    rep.add("trace-consistency", trace_ok, "" if trace_ok else "T or Y disagree with the trace")
    sat = eval_formula(request.formula(), plan.trace, 0)
    rep.add("formula", sat, "" if sat else "trace violates the safety and task formula")
    inside = [k for k, (y, P) in enumerate(zip(plan.targets, plan.tunnel.polytopes), start=1)
              if not P.contains(y[:2])]
    rep.add("target-in-polytope", not inside, f"target {inside[0]} outside its polytope" if inside else "")
    rep.add("tunnel", tunnel_valid(plan.tunnel, request.workspace, request.cobstacles))
    task_trace = BoundedTrace(task.universe, tuple({n: s[n] for n in task.universe.names} for s in plan.trace.steps))
    rep.add("task", check_trace_against_task(task_trace, plan.action_indices, task))
    ok, msg = _polyline_ok([plan.start, *plan.targets], request.workspace, request.cobstacles)
    rep.add("polyline", ok, msg)
    return rep
