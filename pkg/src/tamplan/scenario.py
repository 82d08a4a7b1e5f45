"""Scenario files: schema validation, cross-reference resolution and derived objects."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping

import jsonschema

from .encoder import SolverHandle
from .geometry import CObstacle, HPolytope, Workspace, c_obstacles
from .itmp import PlanRequest
from .ltlk import as_fraction
from .missiongame import (
    ENV,
    SYS,
    EdgeTask,
    EnvRule,
    GeneralizedBuchi,
    MissionConfig,
    MissionGraph,
    MissionState,
    Reachability,
    SafeBuchi,
    Safety,
    WinningCondition,
    enumerate_states,
    environment_edges,
    synth_mission_graph,
)
from .safety import SafetyParams
from .simkit import DwaConfig, ObstacleModel
from .taskspec import HOLDING, THETA, Location, WarehouseFragment, warehouse_actions

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Invalid scenario; ``pointer`` is a JSON pointer into the offending document."""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{pointer}: {message}" if pointer else message)
        self.pointer = pointer


class DanglingReference(ScenarioError):
    def __init__(self, name: str, pointer: str):
        super().__init__(f"unknown location or object {name!r}", pointer)
        self.name = name


def schema() -> dict:
    return json.loads(resources.files("tamplan.schemas").joinpath("scenario.schema.json").read_text())


def bundled(name: str = "warehouse") -> Path:
    return Path(str(resources.files("tamplan.data").joinpath(f"{name}.json")))


def _pointer(path) -> str:
    return "/" + "/".join(str(p).replace("~", "~0").replace("/", "~1") for p in path) if path else "/"


@dataclass(frozen=True)
class RobotConfig:
    name: str
    home: str
    x: float
    y: float
    theta: float = 0.0
    enforce_heading: bool = False


@dataclass
class Scenario:
    name: str
    workspace: Workspace
    obstacle_names: tuple[str, ...]
    cobstacles: tuple[CObstacle, ...]
    locations: tuple[Location, ...]
    objects: tuple[str, ...]
    placement: dict[str, str]
    robot: RobotConfig
    safety: SafetyParams
    dwa: DwaConfig
    env_rules: tuple[EnvRule, ...]
    env_idle: str
    env_script: tuple[str, ...]
    dynamic_obstacles: tuple[ObstacleModel, ...]
    condition: WinningCondition
    solver: SolverHandle
    K_max: int = 20
    dt: float = 0.01
    seed: int = 0
    max_rounds: int = 20
    block_timeout: float = 30.0
    max_t: float = 600.0
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def fragment(self) -> WarehouseFragment:
        if not hasattr(self, "_fragment"):
            self._fragment = warehouse_actions(self.locations, self.objects)
        return self._fragment

    def location(self, name: str) -> Location:
        return self.fragment.location(name)

    @property
    def slots(self) -> tuple[str, ...]:
        return tuple(l.name for l in self.locations if l.holds_objects)

    @property
    def accessible(self) -> set[str]:
        return {l.name for l in self.locations if l.robot_access}

    def mission_config(self) -> MissionConfig:
        return MissionConfig(self.objects, self.slots, (self.robot.home,))

    def states(self) -> list[MissionState]:
        return enumerate_states(self.mission_config())

    def env_edges(self, states=None):
        return environment_edges(states or self.states(), self.env_rules, self.env_idle)

    def edge_task(self) -> EdgeTask:
        home = {l.name: (l.x, l.y) for l in self.locations}
        return EdgeTask(self.fragment, home, as_fraction(self.robot.theta))

    def synth_graph(self, jobs: int = 1, K_max: int | None = None, solver: SolverHandle | None = None) -> MissionGraph:
        states = self.states()
        return synth_mission_graph(states, self.env_edges(states), self.workspace, self.cobstacles,
                                   K_max or self.K_max, self.edge_task(), self.accessible, self.slots,
                                   solver or self.solver, jobs)

    def initial_valuation(self, robot_at: str | None = None) -> dict:
        loc = self.location(robot_at or self.robot.home)
        v = {"px": loc.x, "py": loc.y, THETA: as_fraction(self.robot.theta), HOLDING: False}
        for o in self.objects:
            v[self.fragment.object_var(o)] = self.fragment.slot[self.placement[o]]
        return v

    def point_request(self, src: str, dst: str, K_max: int | None = None,
                      solver: SolverHandle | None = None) -> PlanRequest:
        """Drive from one named location to another with objects left in place."""
        for name, ptr in ((src, "--from"), (dst, "--to")):
            if name not in {l.name for l in self.locations}:
                raise DanglingReference(name, ptr)
        target = self.location(dst)
        v0 = self.initial_valuation(src)
        vf = {"px": target.x, "py": target.y}
        for o in self.objects:
            vf[self.fragment.object_var(o)] = v0[self.fragment.object_var(o)]
        return PlanRequest(self.workspace, self.cobstacles, self.fragment.task(v0, vf),
                           K_max or self.K_max, solver or self.solver)


# --------------------------------------------------------------------------
# loading


def _predicate(spec: Mapping, objects, locations, ptr: str) -> Callable[[MissionState], bool]:
    (key, val), = spec.items()
    if key == "true":
        return lambda m: True
    if key == "object":
        if val["id"] not in objects:
            raise DanglingReference(val["id"], f"{ptr}/object/id")
        for i, l in enumerate(val["in"]):
            if l not in locations:
                raise DanglingReference(l, f"{ptr}/object/in/{i}")
        where = frozenset(val["in"])
        o = val["id"]
        return lambda m: m.where(o) in where
    if key == "all_objects_in":
        for i, l in enumerate(val):
            if l not in locations:
                raise DanglingReference(l, f"{ptr}/all_objects_in/{i}")
        where = frozenset(val)
        return lambda m: all(loc in where for _, loc in m.objects)
    if key == "not":
        inner = _predicate(val, objects, locations, f"{ptr}/not")
        return lambda m: not inner(m)
    parts = [_predicate(p, objects, locations, f"{ptr}/{key}/{i}") for i, p in enumerate(val)]
    if key == "and":
        return lambda m: all(p(m) for p in parts)
    return lambda m: any(p(m) for p in parts)


def _objective(spec: Mapping, objects, locations):
    kind = spec["type"]
    ptr = "/mission/objective"
    need = {"safety": ("safe",), "reachability": ("goal",), "buchi": ("goals",), "safe_buchi": ("safe", "goals")}
    for key in need[kind]:
        if key not in spec:
            raise ScenarioError(f"objective {kind!r} requires {key!r}", ptr)
    pred = lambda key: _predicate(spec[key], objects, locations, f"{ptr}/{key}")
    goals = lambda: tuple(_predicate(g, objects, locations, f"{ptr}/goals/{i}") for i, g in enumerate(spec["goals"]))
    if kind == "safety":
        return Safety(pred("safe"))
    if kind == "reachability":
        return Reachability(pred("goal"))
    if kind == "buchi":
        return GeneralizedBuchi(goals())
    return SafeBuchi(pred("safe"), goals())


def parse_scenario(data: Mapping) -> Scenario:
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        e = errors[0]
        raise ScenarioError(e.message, _pointer(e.absolute_path))
    try:
        boundary = HPolytope.from_json(data["workspace"])
        obstacles = [HPolytope.from_json(o) for o in data.get("obstacles", [])]
        workspace = Workspace(boundary, tuple(obstacles))
    except ValueError as exc:
        raise ScenarioError(str(exc), "/workspace") from exc

    locs = []
    for i, l in enumerate(data["locations"]):
        x, y = (as_fraction(v) for v in l["at"])
        if not boundary.contains((x, y)):
            raise ScenarioError(f"location {l['name']} lies outside the workspace", f"/locations/{i}/at")
        locs.append(Location(l["name"], x, y, l.get("holds_objects", True), l.get("robot_access", True)))
    names = [l.name for l in locs]
    if len(set(names)) != len(names):
        raise ScenarioError("duplicate location names", "/locations")
    slot_names = {l.name for l in locs if l.holds_objects}

    objects = tuple(o["id"] for o in data["objects"])
    if len(set(objects)) != len(objects):
        raise ScenarioError("duplicate object ids", "/objects")
    placement = {}
    for i, o in enumerate(data["objects"]):
        if o["at"] not in slot_names:
            raise DanglingReference(o["at"], f"/objects/{i}/at")
        if o["at"] in placement.values():
            raise ScenarioError(f"location {o['at']} already holds an object", f"/objects/{i}/at")
        placement[o["id"]] = o["at"]

    r = data["robot"]
    if r["home"] not in names:
        raise DanglingReference(r["home"], "/robot/home")
    home = locs[names.index(r["home"])]
    sp = SafetyParams(**r.get("safety", {}))
    dt = float(data.get("dt", 0.01))
    if sp.eps < 2 * dt - 1e-12:
        raise ScenarioError(f"reaction delay {sp.eps} is below two control periods ({2 * dt})", "/robot/safety/eps")
    cobs = tuple(c_obstacles(workspace, as_fraction(sp.D_s)))
    for cb in cobs:
        inside = all(f.value((home.x, home.y)) < f.c for f in cb.inflated.facets)
        if inside:
            raise ScenarioError(f"robot starts inside C-obstacle {cb.source}", "/robot/home")
    robot = RobotConfig(r["name"], r["home"], float(home.x), float(home.y), float(as_fraction(r.get("theta", 0))),
                        r.get("enforce_heading", False))
    dwa = DwaConfig(alpha_max=r.get("alpha_max", 2.0), v_max=r.get("v_max", 1.0), omega_max=r.get("omega_max", 1.5))

    env = data.get("environment", {})
    rules = []
    for i, agent in enumerate(env.get("agents", [])):
        for j, mv in enumerate(agent["moves"]):
            base = f"/environment/agents/{i}/moves/{j}"
            if mv["from"] not in slot_names:
                raise DanglingReference(mv["from"], f"{base}/from")
            for k, t in enumerate(mv["to"]):
                if t not in slot_names:
                    raise DanglingReference(t, f"{base}/to/{k}")
            rules.append(EnvRule(mv["from"], tuple(mv["to"]), agent["name"]))

    dyn = []
    for i, o in enumerate(data.get("dynamic_obstacles", [])):
        if o["speed"] > sp.V_obs:
            raise ScenarioError(f"obstacle {o['name']} is faster than V_obs={sp.V_obs}", f"/dynamic_obstacles/{i}/speed")
        dyn.append(ObstacleModel(o["name"], o["policy"], float(o["radius"]), float(o["speed"]),
                                 tuple(float(as_fraction(v)) for v in o["start"]),
                                 tuple(tuple(float(as_fraction(v)) for v in w) for w in o.get("waypoints", [])),
                                 tuple(tuple(float(v) for v in s) for s in o.get("script", []))))

    mission = data["mission"]
    init = mission["init"]
    for obj, loc in init.get("objects", {}).items():
        if obj not in objects:
            raise DanglingReference(obj, f"/mission/init/objects/{obj}")
        if loc not in slot_names:
            raise DanglingReference(loc, f"/mission/init/objects/{obj}")
    want = dict(init.get("objects", placement))
    turn = init.get("turn")

    def init_pred(m, want=want, turn=turn):
        return (turn is None or m.turn == turn) and all(m.where(o) == l for o, l in want.items()) \
            and m.robot == robot.home

    objective = _objective(mission["objective"], objects, set(names))
    solver = SolverHandle.from_config(data.get("solver"))
    return Scenario(
        name=data["name"], workspace=workspace,
        obstacle_names=tuple(o.get("name", f"obstacle{i}") for i, o in enumerate(data.get("obstacles", []))),
        cobstacles=cobs, locations=tuple(locs), objects=objects, placement=placement, robot=robot,
        safety=sp, dwa=dwa, env_rules=tuple(rules), env_idle=env.get("idle", "when_stuck"),
        env_script=tuple(env.get("script", [])), dynamic_obstacles=tuple(dyn),
        condition=WinningCondition(init_pred, objective), solver=solver,
        K_max=data.get("K_max", 20), dt=dt, seed=data.get("seed", 0), max_rounds=data.get("max_rounds", 20),
        block_timeout=float(data.get("block_timeout", 30.0)), max_t=float(data.get("max_t", 600.0)), raw=dict(data),
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_scenario(data)
