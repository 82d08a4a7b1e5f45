"""One-shot solver subprocess client and model decoding."""

from __future__ import annotations

import logging
import os
import shlex
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction

from ..ltlk import BOOLEAN, INTEGER, BoundedTrace, VariableUniverse
from .compile import ConstraintSystem, symbol
from .smtlib import SExprError, emit_smtlib, parse_all, parse_model

log = logging.getLogger(__name__)

SAT = "SAT"
UNSAT = "UNSAT"
UNKNOWN = "UNKNOWN"

SOLVER_ENV = "LTLK_SOLVER_CMD"


class BackendError(RuntimeError):
    """The solver could not be launched or died; ``raw`` keeps whatever it printed."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class ProtocolError(BackendError):
    pass


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class SolverHandle:
    cmd: str = "z3"
    args: tuple[str, ...] = ("-in",)
    timeout_s: float = 60.0
    use_file: bool = False

    @classmethod
    def from_config(cls, config: dict | None = None) -> "SolverHandle":
        config = dict(config or {})
        env = os.environ.get(SOLVER_ENV)
        if env:
            parts = shlex.split(env)
            config["cmd"], config["args"] = parts[0], parts[1:]
        kw = {}
        if "cmd" in config:
            kw["cmd"] = config["cmd"]
        if "args" in config:
            kw["args"] = tuple(config["args"])
        if "timeout_s" in config:
            kw["timeout_s"] = float(config["timeout_s"])
        if "use_file" in config:
            kw["use_file"] = bool(config["use_file"])
        return cls(**kw)

    @classmethod
    def cvc5(cls, timeout_s: float = 60.0) -> "SolverHandle":
        return cls(sys.executable, ("-m", "tamplan.encoder.cvc5_shim"), timeout_s)


Z3 = SolverHandle()


@dataclass(frozen=True)
class SolveResult:
    status: str
    model: dict | None = None
    solver_time: float = 0.0
    raw: str = field(default="", repr=False)

    def __post_init__(self):
        if (self.status == SAT) != (self.model is not None):
            raise ValueError("a model is present exactly when the status is SAT")


def run_script(script: str, backend: SolverHandle) -> tuple[str | None, float]:
    """Feed ``script`` to the backend; returns (stdout, seconds) or (None, seconds) on timeout."""
    argv = [backend.cmd, *backend.args]
    tmp = None
    if backend.use_file:
        fd, tmp = tempfile.mkstemp(suffix=".smt2")
        with os.fdopen(fd, "w") as fh:
            fh.write(script)
        argv.append(tmp)
    start = time.perf_counter()
    try:
        proc = subprocess.run(
            argv,
            input=None if backend.use_file else script,
            capture_output=True,
            text=True,
            timeout=backend.timeout_s,
        )
    except subprocess.TimeoutExpired:
        return None, time.perf_counter() - start
    except OSError as exc:
        raise BackendError(f"cannot launch solver {backend.cmd!r}: {exc}") from exc
    finally:
        if tmp:
            os.unlink(tmp)
    elapsed = time.perf_counter() - start
    if proc.returncode < 0:
        raise BackendError(f"solver killed by signal {-proc.returncode}", proc.stdout + proc.stderr)
    return proc.stdout, elapsed


def solve(cs: ConstraintSystem, backend: SolverHandle = Z3) -> SolveResult:
    script = emit_smtlib(cs)
    out, elapsed = run_script(script, backend)
    if out is None:
        log.info("solver timed out after %.1fs", elapsed)
        return SolveResult(UNKNOWN, None, elapsed)
    try:
        exprs = parse_all(out)
    except SExprError as exc:
        raise ProtocolError(f"unparsable solver output: {exc}", out) from exc
    answers = [e for e in exprs if e in ("sat", "unsat", "unknown")]
    if not answers:
        raise ProtocolError("solver gave no sat/unsat/unknown answer", out)
    status = {"sat": SAT, "unsat": UNSAT, "unknown": UNKNOWN}[answers[0]]
    if status != SAT:
        return SolveResult(status, None, elapsed, out)
    try:
        model = parse_model(e for e in exprs if isinstance(e, tuple))
    except SExprError as exc:
        raise ProtocolError(f"bad model: {exc}", out) from exc
    referenced = cs.referenced()
    for name, sort in cs.declarations:
        if name in model:
            continue
        if name in referenced:
            raise ProtocolError(f"model lacks {name}", out)
        # unconstrained: any value of the sort is a witness
        model[name] = {"Bool": False, "Int": 0}.get(sort, Fraction(0))
    return SolveResult(SAT, model, elapsed, out)


def decode_model(result: SolveResult, universe: VariableUniverse, K: int) -> BoundedTrace:
    if result.status != SAT or result.model is None:
        raise DecodeError(f"cannot decode a {result.status} result")
    steps = []
    for k in range(K + 1):
        row = {}
        for d in universe.decls:
            s = symbol(d.name, k)
            if s not in result.model:
                raise DecodeError(f"model has no value for {s}")
            v = result.model[s]
            if d.sort == BOOLEAN:
                if not isinstance(v, bool):
                    raise DecodeError(f"{s} is not boolean")
            elif d.sort == INTEGER:
                v = int(v)
            else:
                v = Fraction(v)
            row[d.name] = v
        steps.append(row)
    return BoundedTrace(universe, tuple(steps))


def check(phi, K: int, universe: VariableUniverse, backend: SolverHandle = Z3):
    """Encode, solve and decode; returns ``(result, trace-or-None, constraint system)``."""
    from .compile import encode

    cs = encode(phi, K, universe)
    res = solve(cs, backend)
    trace = decode_model(res, universe, K) if res.status == SAT else None
    return res, trace, cs
