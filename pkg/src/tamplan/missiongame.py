"""Mission graphs, fixpoint game solving and strategy transducers.

The arena is explicit and turn based. ``turn`` 1 belongs to the environment
and 2 to the system. A player without moves loses the play.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Hashable, Iterable, Mapping, Sequence

from .encoder import SolverHandle, Z3
from .geometry import CObstacle, Workspace
from .itmp import ItmpError, Plan, PlanRequest, SolverUnknown, itmp, validate_plan
from .ltlk import to_text
from .taskspec import CARRIED, HOLDING, THETA, WarehouseFragment

log = logging.getLogger(__name__)

ENV = 1
SYS = 2

DEFAULT_STATE_CAP = 10**6


class GameError(ValueError):
    pass


class UnsupportedObjective(GameError):
    pass


# --------------------------------------------------------------------------
# states


@dataclass(frozen=True, order=True)
class MissionState:
    robot: str
    objects: tuple[tuple[str, str], ...]  # sorted (object, location) pairs
    turn: int

    def __post_init__(self):
        if self.turn not in (ENV, SYS):
            raise GameError(f"turn must be 1 or 2, got {self.turn}")
        object.__setattr__(self, "objects", tuple(sorted(self.objects)))

    @property
    def placement(self) -> dict[str, str]:
        return dict(self.objects)

    def where(self, obj: str) -> str:
        return self.placement[obj]

    def with_turn(self, turn: int) -> "MissionState":
        return MissionState(self.robot, self.objects, turn)

    def moved(self, obj: str, loc: str, turn: int) -> "MissionState":
        p = self.placement
        p[obj] = loc
        return MissionState(self.robot, tuple(p.items()), turn)

    def label(self) -> str:
        objs = ",".join(f"{o}@{l}" for o, l in self.objects)
        return f"{self.robot}|{objs}|{self.turn}"

    def to_json(self) -> dict:
        return {"robot": self.robot, "objects": dict(self.objects), "turn": self.turn}

    @classmethod
    def from_json(cls, data: Mapping) -> "MissionState":
        return cls(data["robot"], tuple(data["objects"].items()), int(data["turn"]))


@dataclass(frozen=True)
class MissionConfig:
    objects: tuple[str, ...]
    locations: tuple[str, ...]  # object-holding locations
    robot_locations: tuple[str, ...]
    state_cap: int = DEFAULT_STATE_CAP


def state_count(cfg: MissionConfig) -> int:
    n, m = len(cfg.locations), len(cfg.objects)
    return math.perm(n, m) * len(cfg.robot_locations) * 2


def enumerate_states(cfg: MissionConfig) -> list[MissionState]:
    """Every placement with at most one object per location, for every robot location and turn."""
    total = state_count(cfg)
    if total > cfg.state_cap:
        raise GameError(f"{total} mission states exceed the cap of {cfg.state_cap}")
    out = []
    for robot in cfg.robot_locations:
        for locs in itertools.permutations(cfg.locations, len(cfg.objects)):
            objs = tuple(zip(cfg.objects, locs))
            for turn in (ENV, SYS):
                out.append(MissionState(robot, objs, turn))
    return out


# --------------------------------------------------------------------------
# arena


@dataclass(frozen=True)
class SymbolicAction:
    id: str
    fingerprint: str
    plan: Plan | None = field(default=None, compare=False, repr=False)
    valid: bool = field(default=True, compare=False)

    def __str__(self) -> str:
        return self.id


@dataclass(frozen=True)
class Edge:
    source: Hashable
    action: Hashable
    target: Hashable


class MissionGraph:
    """Explicit arena; edge order is preserved and used for tie breaking."""

    def __init__(self, states: Iterable, sys_edges: Iterable, env_edges: Iterable,
                 turn: Mapping | Callable | None = None):
        self.states = tuple(states)
        if turn is None:
            self._turn = {m: m.turn for m in self.states}
        elif callable(turn):
            self._turn = {m: turn(m) for m in self.states}
        else:
            self._turn = dict(turn)
        self.sys_edges = tuple(e if isinstance(e, Edge) else Edge(*e) for e in sys_edges)
        self.env_edges = tuple(e if isinstance(e, Edge) else Edge(*e) for e in env_edges)
        self.unknown: list[tuple] = []
        index = set(self.states)
        if len(index) != len(self.states):
            raise GameError("duplicate states")
        self._moves: dict = {m: [] for m in self.states}
        seen = set()
        for e, owner in [(e, SYS) for e in self.sys_edges] + [(e, ENV) for e in self.env_edges]:
            if e.source not in index or e.target not in index:
                raise GameError(f"edge {e} leaves the state set")
            if self._turn[e.source] != owner or self._turn[e.target] == owner:
                raise GameError(f"edge {e} breaks turn alternation")
            if owner == SYS:
                if (e.source, e.action) in seen:
                    raise GameError(f"system action {e.action} is not deterministic at {e.source}")
                seen.add((e.source, e.action))
            self._moves[e.source].append((e.action, e.target))

    def turn(self, m) -> int:
        return self._turn[m]

    def moves(self, m) -> list[tuple[Hashable, Hashable]]:
        return self._moves[m]

    def successors(self, m) -> list:
        return [t for _, t in self._moves[m]]

    def without_env_edge(self, edge: Edge) -> "MissionGraph":
        env = [e for e in self.env_edges if e != edge]
        return MissionGraph(self.states, self.sys_edges, env, self._turn)

    def state_id(self, m) -> int:
        if not hasattr(self, "_ids"):
            self._ids = {s: i for i, s in enumerate(self.states)}
        return self._ids[m]

    def to_json(self) -> dict:
        ids = {m: i for i, m in enumerate(self.states)}

        def st(m):
            return m.to_json() if isinstance(m, MissionState) else {"name": str(m), "turn": self._turn[m]}

        actions = {}
        for e in self.sys_edges:
            a = e.action
            if isinstance(a, SymbolicAction):
                actions[a.id] = {"fingerprint": a.fingerprint, "valid": a.valid,
                                 "plan": a.plan.to_json() if a.plan else None}
        return {
            "states": [dict(st(m), id=i) for m, i in ids.items()],
            "system_edges": [{"source": ids[e.source], "action": str(e.action), "target": ids[e.target]}
                             for e in self.sys_edges],
            "environment_edges": [{"source": ids[e.source], "action": str(e.action), "target": ids[e.target]}
                                  for e in self.env_edges],
            "actions": actions,
            "unknown": [[ids[s], ids[t]] for s, t in self.unknown],
        }

    @classmethod
    def from_json(cls, data: Mapping, plan_loader: Callable[[dict], Plan] | None = None) -> "MissionGraph":
        states = [MissionState.from_json(s) for s in data["states"]]
        acts = {}
        for aid, a in data.get("actions", {}).items():
            plan = plan_loader(a["plan"]) if plan_loader and a.get("plan") else None
            acts[aid] = SymbolicAction(aid, a["fingerprint"], plan, a.get("valid", True))
        sys_edges = [Edge(states[e["source"]], acts.get(e["action"], e["action"]), states[e["target"]])
                     for e in data["system_edges"]]
        env_edges = [Edge(states[e["source"]], e["action"], states[e["target"]]) for e in data["environment_edges"]]
        g = cls(states, sys_edges, env_edges)
        g.unknown = [(states[s], states[t]) for s, t in data.get("unknown", [])]
        return g

    def to_dot(self) -> str:
        ids = {m: i for i, m in enumerate(self.states)}
        name = lambda m: m.label() if isinstance(m, MissionState) else str(m)
        lines = ["digraph mission {", "  rankdir=LR;"]
        for m, i in ids.items():
            shape = "box" if self._turn[m] == SYS else "ellipse"
            lines.append(f'  s{i} [label="{name(m)}", shape={shape}];')
        for e in self.sys_edges:
            lines.append(f'  s{ids[e.source]} -> s{ids[e.target]} [label="{e.action}"];')
        for e in self.env_edges:
            lines.append(f'  s{ids[e.source]} -> s{ids[e.target]} [label="{e.action}", style=dashed];')
        lines.append("}")
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# objectives


Predicate = Callable[[Hashable], bool]


def _pred(p) -> Predicate:
    if callable(p):
        return p
    items = frozenset(p)
    return items.__contains__


@dataclass(frozen=True)
class Safety:
    safe: object


@dataclass(frozen=True)
class Reachability:
    goal: object


@dataclass(frozen=True)
class GeneralizedBuchi:
    goals: tuple


@dataclass(frozen=True)
class SafeBuchi:
    safe: object
    goals: tuple


@dataclass(frozen=True)
class WinningCondition:
    init: object
    objective: object

    def init_states(self, graph: MissionGraph) -> list:
        p = _pred(self.init)
        return [m for m in graph.states if p(m)]


def _cpre(graph: MissionGraph, Z: set) -> set:
    out = set()
    for m in graph.states:
        succ = graph.successors(m)
        if graph.turn(m) == SYS:
            if any(t in Z for t in succ):
                out.add(m)
        elif all(t in Z for t in succ):
            out.add(m)
    return out


def attractor(graph: MissionGraph, target: set, within: set | None = None) -> dict:
    """Rank of every state from which the system can force a visit to ``target``."""
    rank = {m: 0 for m in target if within is None or m in within}
    layer = 0
    while True:
        layer += 1
        new = [m for m in _cpre(graph, set(rank)) if m not in rank and (within is None or m in within)]
        if not new:
            return rank
        for m in new:
            rank[m] = layer


def _safe_region(graph: MissionGraph, safe: Predicate) -> set:
    Z = {m for m in graph.states if safe(m)}
    while True:
        nxt = Z & _cpre(graph, Z)
        if nxt == Z:
            return Z
        Z = nxt


def _buchi_region(graph: MissionGraph, goals: Sequence[Predicate], start: set) -> tuple[set, list[dict]]:
    Z = set(start)
    while True:
        ranks = []
        nxt = set(Z)
        for g in goals:
            T = {m for m in Z if g(m)} & _cpre(graph, Z)
            r = attractor(graph, T, within=Z)
            ranks.append(r)
            nxt &= set(r)
        if nxt == Z:
            return Z, ranks
        Z = nxt


@dataclass
class Solution:
    winning: set
    kind: str
    ranks: list = field(default_factory=list)  # one rank map per memory value
    region: set = field(default_factory=set)


def winning_region(graph: MissionGraph, cond: WinningCondition) -> Solution:
    obj = cond.objective
    if isinstance(obj, Safety):
        Z = _safe_region(graph, _pred(obj.safe))
        return Solution(Z, "safety", [], Z)
    if isinstance(obj, Reachability):
        r = attractor(graph, {m for m in graph.states if _pred(obj.goal)(m)})
        return Solution(set(r), "reachability", [r], set(r))
    if isinstance(obj, (GeneralizedBuchi, SafeBuchi)):
        goals = [_pred(g) for g in obj.goals] or [lambda m: True]
        if isinstance(obj, SafeBuchi):
            start = _safe_region(graph, _pred(obj.safe))
        else:
            start = set(graph.states)
        Z, ranks = _buchi_region(graph, goals, start)
        return Solution(Z, "buchi", ranks, Z)
    raise UnsupportedObjective(f"objective {type(obj).__name__} is outside the supported fragment")


# --------------------------------------------------------------------------
# strategies


@dataclass
class Strategy:
    """Finite-state transducer: ``(memory, state) -> (action or None, next memory)``."""

    memory_size: int
    table: dict
    winning: frozenset
    initial_memory: int = 0

    def choose(self, memory: int, state):
        try:
            return self.table[(memory, state)]
        except KeyError:
            raise GameError(f"strategy undefined at memory {memory}, state {state}") from None

    def to_json(self, graph: MissionGraph) -> dict:
        rows = []
        for (mem, m), (act, nxt) in sorted(self.table.items(), key=lambda kv: (kv[0][0], graph.state_id(kv[0][1]))):
            rows.append({"memory": mem, "state": graph.state_id(m),
                         "action": None if act is None else str(act), "next_memory": nxt})
        return {"memory_size": self.memory_size, "initial_memory": self.initial_memory,
                "winning": sorted(graph.state_id(m) for m in self.winning), "table": rows}

    @classmethod
    def from_json(cls, data: Mapping, graph: MissionGraph) -> "Strategy":
        acts = {}
        for e in graph.sys_edges:
            acts[(e.source, str(e.action))] = e.action
        table = {}
        for row in data["table"]:
            m = graph.states[row["state"]]
            act = None if row["action"] is None else acts[(m, row["action"])]
            table[(row["memory"], m)] = (act, row["next_memory"])
        return cls(data["memory_size"], table, frozenset(graph.states[i] for i in data["winning"]),
                   data.get("initial_memory", 0))


def _best_move(graph: MissionGraph, m, rank: Mapping, allowed: set):
    """First move (edge order) into the lowest rank; ``None`` if no move stays in ``allowed``."""
    best = None
    for act, t in graph.moves(m):
        if t not in allowed:
            continue
        r = rank.get(t, math.inf)
        if best is None or r < best[0]:
            best = (r, act)
    return None if best is None else best[1]


def solve_game(graph: MissionGraph, cond: WinningCondition) -> Strategy | None:
    sol = winning_region(graph, cond)
    inits = cond.init_states(graph)
    if any(m not in sol.winning for m in inits):
        return None
    n = max(1, len(sol.ranks)) if sol.kind == "buchi" else 1
    goal_layers = [{m for m, r in ranks.items() if r == 0} for ranks in sol.ranks]

    def decide(mem: int, m):
        if sol.kind == "buchi":
            rank = sol.ranks[mem]
            reached = m in goal_layers[mem]
            nxt = (mem + 1) % n if reached else mem
            if graph.turn(m) != SYS:
                return None, nxt
            # off the goal layer this lowers the rank; on it, layer 0 guarantees a move back into the region
            return _best_move(graph, m, sol.ranks[nxt] if reached else rank, sol.region), nxt
        if graph.turn(m) != SYS:
            return None, 0
        if sol.kind == "reachability":
            rank = sol.ranks[0]
            if rank.get(m) == 0:
                moves = graph.moves(m)
                return (moves[0][0] if moves else None), 0
            return _best_move(graph, m, rank, set(rank)), 0
        return _best_move(graph, m, {}, sol.region), 0

    table = {}
    stack = [(0, m) for m in inits]
    while stack:
        key = stack.pop()
        if key in table:
            continue
        mem, m = key
        act, nxt = decide(mem, m)
        table[key] = (act, nxt)
        if graph.turn(m) == SYS:
            if act is None:
                continue
            targets = [t for a, t in graph.moves(m) if a == act]
        else:
            targets = graph.successors(m)
        if sol.kind == "reachability" and sol.ranks[0].get(m) == 0:
            continue  # objective met; play beyond the goal is irrelevant
        for t in targets:
            stack.append((nxt, t))
    return Strategy(n, table, frozenset(sol.winning))


def strategy_to_transducer(strategy: Strategy, graph: MissionGraph) -> dict:
    return strategy.to_json(graph)


# --------------------------------------------------------------------------
# playouts


@dataclass
class Verdict:
    ok: bool
    reason: str
    steps: int
    run: list = field(default_factory=list)


def memoryless_policy(graph: MissionGraph, seed: int) -> Callable:
    """A fixed random environment choice per state (deterministic, hence lassos close)."""
    rng = random.Random(seed)
    choice = {m: rng.randrange(len(graph.moves(m))) for m in graph.states
              if graph.turn(m) == ENV and graph.moves(m)}
    return lambda m, moves: choice[m]


def first_move_policy(m, moves) -> int:
    return 0


def check_outcomes(strategy: Strategy, graph: MissionGraph, cond: WinningCondition,
                   env_policy: Callable, max_steps: int = 10_000, start=None) -> Verdict:
    obj = cond.objective
    if start is None:
        inits = cond.init_states(graph)
        if not inits:
            return Verdict(True, "no initial states", 0)
        start = inits[0]
    mem, m = strategy.initial_memory, start
    run = [m]
    seen = {}
    safe = _pred(obj.safe) if isinstance(obj, (Safety, SafeBuchi)) else None
    goal = _pred(obj.goal) if isinstance(obj, Reachability) else None
    goals = [_pred(g) for g in obj.goals] if isinstance(obj, (GeneralizedBuchi, SafeBuchi)) else []
    for step in range(max_steps):
        if safe is not None and not safe(m):
            return Verdict(False, f"unsafe state at step {step}", step, run)
        if goal is not None and goal(m):
            return Verdict(True, f"goal reached at step {step}", step, run)
        moves = graph.moves(m)
        if not moves:
            who = "system" if graph.turn(m) == SYS else "environment"
            ok = who == "environment"
            return Verdict(ok, f"{who} has no move at step {step}", step, run)
        if graph.turn(m) == SYS:
            act, nxt = strategy.choose(mem, m)
            if act is None:
                return Verdict(False, f"strategy has no action at step {step}", step, run)
            if isinstance(act, SymbolicAction) and not act.valid:
                return Verdict(False, f"edge {act} carries an invalid plan", step, run)
            target = next(t for a, t in moves if a == act)
        else:
            if (mem, m) in strategy.table:
                _, nxt = strategy.choose(mem, m)
            else:
                nxt = mem
            target = moves[env_policy(m, moves)][1]
        key = (mem, m)
        if goals and key in seen:
            cycle = run[seen[key]:]
            missing = [i for i, g in enumerate(goals) if not any(g(s) for s in cycle)]
            if missing:
                return Verdict(False, f"lasso misses goal {missing[0]}", step, run)
            return Verdict(True, f"lasso of length {len(cycle)} visits every goal", step, run)
        seen[key] = len(run) - 1
        mem, m = nxt, target
        run.append(m)
    if goal is not None:
        return Verdict(False, f"goal not reached in {max_steps} steps", max_steps, run)
    if goals:
        return Verdict(False, f"no lasso closed in {max_steps} steps", max_steps, run)
    return Verdict(True, f"no violation in {max_steps} steps", max_steps, run)


# --------------------------------------------------------------------------
# warehouse mission graphs


@dataclass(frozen=True)
class EnvRule:
    """An environment agent may move an object from ``source`` to one of ``targets``."""

    source: str
    targets: tuple[str, ...]
    name: str = "env"


def environment_edges(states: Sequence[MissionState], rules: Sequence[EnvRule],
                      idle: str = "when_stuck") -> list[Edge]:
    edges = []
    for m in states:
        if m.turn != ENV:
            continue
        occupied = set(m.placement.values())
        out = []
        for rule in rules:
            for obj, loc in m.objects:
                if loc != rule.source:
                    continue
                for t in rule.targets:
                    if t not in occupied:
                        out.append(Edge(m, f"{rule.name}:{obj}:{loc}->{t}", m.moved(obj, t, SYS)))
        if idle == "always" or (idle == "when_stuck" and not out):
            out.insert(0, Edge(m, "idle", m.with_turn(SYS)))
        edges.extend(out)
    return edges


def candidate_targets(m: MissionState, accessible: set[str], slots: Sequence[str]) -> list[MissionState]:
    """Stay, or relocate one object between robot-accessible slots."""
    out = [m.with_turn(ENV)]
    occupied = set(m.placement.values())
    for obj, loc in m.objects:
        if loc not in accessible:
            continue
        for t in slots:
            if t in accessible and t not in occupied:
                out.append(m.moved(obj, t, ENV))
    return out


@dataclass(frozen=True)
class EdgeTask:
    fragment: WarehouseFragment
    home: Mapping[str, tuple[Fraction, Fraction]]  # robot mission location -> point
    theta0: Fraction = Fraction(0)

    def valuation(self, m: MissionState, full: bool) -> dict:
        x, y = self.home[m.robot]
        v = {"px": x, "py": y}
        if full:
            v[THETA] = self.theta0
            v[HOLDING] = False
        for obj, loc in m.objects:
            v[self.fragment.object_var(obj)] = self.fragment.slot[loc]
        return v

    def task(self, src: MissionState, dst: MissionState):
        return self.fragment.task(self.valuation(src, True), self.valuation(dst, False))


def fingerprint(request: PlanRequest) -> str:
    return hashlib.sha256(to_text(request.formula()).encode()).hexdigest()[:16]


def _edge_job(args):
    src, dst, request = args
    try:
        res = itmp(request)
    except SolverUnknown as exc:
        log.warning("edge %s -> %s: %s", src.label(), dst.label(), exc)
        return src, dst, "UNKNOWN", None, request
    return src, dst, res.status, res.plan, request


def synth_mission_graph(states: Sequence[MissionState], env_edges: Sequence[Edge], workspace: Workspace,
                        cobstacles: Sequence[CObstacle], K_max: int, edge_task: EdgeTask,
                        accessible: set[str], slots: Sequence[str], backend: SolverHandle = Z3,
                        jobs: int = 1) -> MissionGraph:
    """Run ITMP on every candidate system move and keep the feasible ones as symbolic actions."""
    index = set(states)
    jobs_in = []
    for m in states:
        if m.turn != SYS:
            continue
        for t in candidate_targets(m, accessible, slots):
            if t not in index:
                continue
            req = PlanRequest(workspace, tuple(cobstacles), edge_task.task(m, t), K_max, backend)
            jobs_in.append((m, t, req))
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(_edge_job, jobs_in))
    else:
        results = [_edge_job(j) for j in jobs_in]
    sys_edges = []
    unknown = []
    for n, (src, dst, status, plan, req) in enumerate(results):
        if status == "UNKNOWN":
            unknown.append((src, dst))
            continue
        if status != "SAT":
            continue
        ok = bool(validate_plan(plan, req))
        if not ok:
            log.error("edge %s -> %s: plan fails validation", src.label(), dst.label())
        act = SymbolicAction(f"g{len(sys_edges)}", fingerprint(req), plan, ok)
        sys_edges.append(Edge(src, act, dst))
    g = MissionGraph(states, sys_edges, env_edges)
    g.unknown = unknown
    return g


def edge_plan(graph: MissionGraph, state, action) -> Plan:
    if not isinstance(action, SymbolicAction) or action.plan is None:
        raise ItmpError(f"action {action} has no cached plan")
    return action.plan
