"""Bounded temporal-logic task and motion planning with mission games and a safety supervisor."""

__version__ = "0.1.0"
