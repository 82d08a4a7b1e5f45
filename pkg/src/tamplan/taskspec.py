"""Task languages: actions with preconditions and effects, and their formula encoding."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING, Mapping, Sequence

from .geometry import PX, PY, Check
from .ltlk import (
    BOOLEAN,
    INTEGER,
    BoolAtom,
    Next,
    LAST,
    REAL,
    Always,
    BoundedTrace,
    Formula,
    Implies,
    LtlkError,
    Not,
    TemporalTerm,
    VarDecl,
    VariableUniverse,
    conj,
    disj,
    eq,
    eval_formula,
    linear,
    variables,
)

if TYPE_CHECKING:
    from .itmp import Plan

THETA = "theta"
ACTION = "a"
HOLDING = "holding"
CARRIED = 0
THETA_BOUND = Fraction("3.14159")


class TaskError(ValueError):
    pass


@dataclass(frozen=True)
class Action:
    name: str
    pre: Formula
    eff: Formula
    kind: str = "other"
    params: tuple = ()


@dataclass(frozen=True)
class TaskLanguage:
    universe: VariableUniverse
    actions: tuple[Action, ...]
    v0: Mapping[str, object]
    vf: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        if not self.actions:
            raise TaskError("a task language needs at least one action")
        names = [a.name for a in self.actions]
        if len(set(names)) != len(names):
            raise TaskError("duplicate action names")
        if ACTION in self.universe:
            raise TaskError(f"{ACTION!r} is reserved for the action variable")
        missing = [n for n in self.universe.names if n not in self.v0]
        if missing:
            raise TaskError(f"initial valuation misses {missing}")
        for part in (self.v0, self.vf):
            for name in part:
                if name not in self.universe:
                    raise TaskError(f"valuation mentions undeclared {name!r}")
        for a in self.actions:
            for name in variables(a.pre) | variables(a.eff):
                if name not in self.universe:
                    raise TaskError(f"action {a.name!r} mentions undeclared {name!r}")

    def index(self, name: str) -> int:
        for i, a in enumerate(self.actions, start=1):
            if a.name == name:
                return i
        raise KeyError(name)

    def action_universe(self) -> VariableUniverse:
        return self.universe.extended(VarDecl(ACTION, INTEGER, 1, len(self.actions)))


def _valuation(values: Mapping[str, object]) -> Formula:
    return conj(*(eq(name, v) for name, v in values.items()))


def build_phi_task(task: TaskLanguage) -> Formula:
    """Initial valuation, final valuation at the last instant, and per-step action semantics."""
    n = len(task.actions)
    a = TemporalTerm(ACTION)
    per_action = []
    for i, act in enumerate(task.actions, start=1):
        chosen = conj(linear([(1, a)], "=", i), Not(LAST))
        per_action.append(Implies(chosen, conj(act.pre, act.eff)))
    return conj(
        _valuation(task.v0),
        Always(Implies(LAST, _valuation(task.vf))),
        Always(conj(linear([(1, a)], ">=", 1), linear([(1, a)], "<=", n), *per_action)),
    )


def unchanged(names: Sequence[str]) -> Formula:
    return conj(*(_same(n) for n in names))


def _same(name: str) -> Formula:
    return linear([(1, TemporalTerm(name, 1)), (-1, TemporalTerm(name))], "=", 0)


def _same_bool(name: str) -> Formula:
    b = BoolAtom(name)
    return conj(Implies(b, Next(b)), Implies(Next(b), b))


def frame(universe: VariableUniverse, keep: Sequence[str]) -> Formula:
    parts = []
    for name in keep:
        if universe.sort_of(name) == BOOLEAN:
            parts.append(_same_bool(name))
        else:
            parts.append(_same(name))
    return conj(*parts)


# --------------------------------------------------------------------------
# warehouse action library


@dataclass(frozen=True)
class Location:
    name: str
    x: Fraction
    y: Fraction
    holds_objects: bool = True
    robot_access: bool = True


@dataclass(frozen=True)
class WarehouseFragment:
    universe: VariableUniverse
    actions: tuple[Action, ...]
    locations: tuple[Location, ...]
    objects: tuple[str, ...]
    slot: Mapping[str, int]  # object location name -> integer code (CARRIED is 0)

    def task(self, v0: Mapping[str, object], vf: Mapping[str, object]) -> TaskLanguage:
        return TaskLanguage(self.universe, self.actions, v0, vf)

    def location(self, name: str) -> Location:
        for loc in self.locations:
            if loc.name == name:
                return loc
        raise KeyError(name)

    def object_var(self, obj: str) -> str:
        return f"loc_{obj}"


def _at(loc: Location) -> Formula:
    return conj(eq(PX, loc.x), eq(PY, loc.y))


def _next_at(loc: Location) -> Formula:
    return conj(eq(PX, loc.x, nexts=1), eq(PY, loc.y, nexts=1))


def warehouse_actions(locations: Sequence[Location], objects: Sequence[str],
                      free_motion: bool = True) -> WarehouseFragment:
    """``move(l)``, ``pick(o)``, ``drop(o,l)`` (and a free ``goto`` waypoint move).

    Object locations are integers: slot codes ``1..n`` for object-holding
    locations and ``CARRIED`` while in the gripper.
    """
    locations = tuple(locations)
    objects = tuple(objects)
    lnames = [l.name for l in locations]
    if len(set(lnames)) != len(lnames):
        raise TaskError("duplicate location names")
    if len(set(objects)) != len(objects):
        raise TaskError("duplicate object ids")
    points = [(l.x, l.y) for l in locations]
    if len(set(points)) != len(points):
        raise TaskError("locations must be distinct points")
    slots = [l for l in locations if l.holds_objects]
    slot = {l.name: i for i, l in enumerate(slots, start=1)}
    objvars = [f"loc_{o}" for o in objects]
    decls = [
        VarDecl(PX, REAL),
        VarDecl(PY, REAL),
        VarDecl(THETA, REAL, -THETA_BOUND, THETA_BOUND),
        VarDecl(HOLDING, BOOLEAN),
        *(VarDecl(v, INTEGER, CARRIED, len(slots)) for v in objvars),
    ]
    universe = VariableUniverse(tuple(decls))
    non_motion = [HOLDING, *objvars]
    hold = BoolAtom(HOLDING)

    actions: list[Action] = []
    if free_motion:
        actions.append(Action("goto", conj(), frame(universe, non_motion), "motion"))
    for loc in locations:
        if not loc.robot_access:
            continue
        actions.append(Action(f"move({loc.name})", conj(), conj(_next_at(loc), frame(universe, non_motion)),
                              "motion", (loc.name,)))
    for o, ov in zip(objects, objvars):
        others = [v for v in objvars if v != ov]
        here = [conj(eq(ov, slot[l.name]), _at(l)) for l in slots if l.robot_access]
        pre = conj(Not(hold), disj(*here))
        eff = conj(eq(HOLDING, True, nexts=1), eq(ov, CARRIED, nexts=1), frame(universe, [PX, PY, *others]))
        actions.append(Action(f"pick({o})", pre, eff, "pick", (o,)))
    for o, ov in zip(objects, objvars):
        others = [v for v in objvars if v != ov]
        for l in slots:
            if not l.robot_access:
                continue
            free = conj(*(Not(eq(v, slot[l.name])) for v in others))
            pre = conj(hold, eq(ov, CARRIED), _at(l), free)
            eff = conj(eq(HOLDING, False, nexts=1), eq(ov, slot[l.name], nexts=1),
                       frame(universe, [PX, PY, *others]))
            actions.append(Action(f"drop({o},{l.name})", pre, eff, "drop", (o, l.name)))
    return WarehouseFragment(universe, tuple(actions), locations, objects, slot)


# --------------------------------------------------------------------------
# plan checking


def check_trace_against_task(trace: BoundedTrace, action_indices: Sequence[int], task: TaskLanguage) -> Check:
    K = trace.K
    if len(action_indices) != K:
        return Check(False, f"plan has {len(action_indices)} actions for horizon {K}", 0)
    for name, v in task.v0.items():
        if trace.value(name, 0) != v:
            return Check(False, f"step 0: {name}={trace.value(name, 0)} differs from the initial valuation", 0)
    for name, v in task.vf.items():
        if trace.value(name, K) != v:
            return Check(False, f"step {K}: {name}={trace.value(name, K)} differs from the final valuation", K)
    for k, idx in enumerate(action_indices):
        if not 1 <= idx <= len(task.actions):
            return Check(False, f"step {k}: action index {idx} out of range", k)
        act = task.actions[idx - 1]
        if not eval_formula(act.pre, trace, k):
            return Check(False, f"step {k}: precondition of {act.name} violated", k)
        if not eval_formula(act.eff, trace, k):
            return Check(False, f"step {k}: effect of {act.name} violated", k)
    return Check(True, "ok")


def check_plan_against_task(plan: "Plan", task: TaskLanguage) -> Check:
    try:
        trace = plan.trace
        if ACTION in trace.universe:
            trace = BoundedTrace(task.universe, tuple({n: s[n] for n in task.universe.names} for s in trace.steps))
    except (KeyError, LtlkError) as exc:
        return Check(False, f"trace does not fit the task universe: {exc}", 0)
    return check_trace_against_task(trace, plan.action_indices, task)
