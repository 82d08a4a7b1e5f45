"""Minimal SMT-LIB front end over the cvc5 Python bindings.

Reads a script on stdin (or from a file argument) and prints command output
the way a command-line solver would, so it can stand in as a second backend.
"""

from __future__ import annotations

import sys


def main(argv: list[str] | None = None) -> int:
    import cvc5
    from cvc5 import InputLanguage, InputParser, SymbolManager

    argv = sys.argv[1:] if argv is None else argv
    text = open(argv[0]).read() if argv else sys.stdin.read()
    tm = cvc5.TermManager()
    solver = cvc5.Solver(tm)
    sm = SymbolManager(tm)
    parser = InputParser(solver, sm)
    parser.setStringInput(InputLanguage.SMT_LIB_2_6, text, "stdin")
    while True:
        cmd = parser.nextCommand()
        if cmd.isNull():
            break
        out = cmd.invoke(solver, sm)
        if out:
            sys.stdout.write(out)
    sys.stdout.flush()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
