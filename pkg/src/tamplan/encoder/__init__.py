from .backend import (
    SAT,
    SOLVER_ENV,
    UNKNOWN,
    UNSAT,
    Z3,
    BackendError,
    DecodeError,
    ProtocolError,
    SolveResult,
    SolverHandle,
    check,
    decode_model,
    solve,
)
from .compile import ConstraintSystem, encode, symbol
from .smtlib import emit_smtlib

__all__ = [
    "SAT",
    "UNSAT",
    "UNKNOWN",
    "SOLVER_ENV",
    "Z3",
    "BackendError",
    "ProtocolError",
    "DecodeError",
    "SolveResult",
    "SolverHandle",
    "ConstraintSystem",
    "encode",
    "emit_smtlib",
    "solve",
    "decode_model",
    "check",
    "symbol",
]
