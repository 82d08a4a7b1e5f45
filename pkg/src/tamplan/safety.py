"""Passive-safety supervisor for a unicycle robot among moving obstacles.

The numeric helpers accept floats or numpy arrays so the same code drives
single robots and batched simulations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DRIVE = "drive"
OVERRIDE = "override"


@dataclass(frozen=True)
class SafetyParams:
    A: float = 0.5  # max acceleration, m/s^2
    B: float = 1.0  # max braking, m/s^2
    eps: float = 0.02  # max reaction delay, s
    V_obs: float = 0.8  # obstacle speed bound, m/s
    D_s: float = 0.3  # robot radius, m

    def __post_init__(self):
        if not (self.A > 0 and self.B > 0 and self.D_s > 0):
            raise ValueError("A, B and D_s must be positive")
        if self.eps < 0 or self.V_obs < 0:
            raise ValueError("eps and V_obs must be non-negative")

    def clamp_accel(self, a):
        return np.clip(a, -self.B, self.A)


def safe_threshold(v, p: SafetyParams):
    A, B, e, V = p.A, p.B, p.eps, p.V_obs
    return v * v / (2 * B) + V * (e + (v + A * e) / B) + (A / B + 1) * (A * e * e / 2 + e * v) + p.D_s


def stop_threshold(v, p: SafetyParams):
    return v * v / (2 * p.B) + p.V_obs * v / p.B + p.D_s


def inf_distance(px, py, qx, qy):
    return np.maximum(np.abs(px - qx), np.abs(py - qy))


def euclid_distance(px, py, qx, qy):
    return np.hypot(px - qx, py - qy)


def closest_point_inf(px, py, cx, cy, r):
    """Point of the disc ``(c, r)`` nearest to ``p`` in the max-norm, and that distance."""
    px, py, cx, cy, r = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (px, py, cx, cy, r)))
    ex, ey = px - cx, py - cy
    dx, dy = np.abs(ex), np.abs(ey)
    swap = dy > dx
    hi = np.where(swap, dy, dx)
    lo = np.where(swap, dx, dy)
    s = hi + lo
    disc = np.maximum(s * s - 2 * (hi * hi + lo * lo - r * r), 0.0)
    t = np.where(hi - r >= lo, hi - r, (s - np.sqrt(disc)) / 2)
    inside = dx * dx + dy * dy <= r * r
    t = np.where(inside, 0.0, np.maximum(t, 0.0))
    sx = np.where(ex >= 0, 1.0, -1.0)
    sy = np.where(ey >= 0, 1.0, -1.0)
    # one axis case: touch the disc along the dominant axis; corner case: square corner on the circle
    axis = hi - r >= lo
    qx = np.where(axis, np.where(swap, cx, cx + sx * r), px - sx * t)
    qy = np.where(axis, np.where(swap, cy + sy * r, cy), py - sy * t)
    qx = np.where(inside, px, qx)
    qy = np.where(inside, py, qy)
    return qx, qy, t


def closest_point_euclid(px, py, cx, cy, r):
    d = np.hypot(px - cx, py - cy)
    gap = np.maximum(d - r, 0.0)
    scale = np.where(d > 0, r / np.where(d > 0, d, 1.0), 0.0)
    qx = np.where(d > r, cx + (px - cx) * scale, px)
    qy = np.where(d > r, cy + (py - cy) * scale, py)
    return qx, qy, gap


def safe_condition(robot, point, p: SafetyParams) -> bool:
    if point is None:
        return True
    return bool(inf_distance(robot.px, robot.py, point[0], point[1]) > safe_threshold(robot.v, p))


def phi_pf(robot, point, p: SafetyParams, ord: float = 2) -> bool:
    """Stopped, or far enough to stop before a closing obstacle arrives."""
    if robot.v == 0 or point is None:
        return True
    dist = inf_distance if ord == np.inf else euclid_distance
    return bool(dist(robot.px, robot.py, point[0], point[1]) > stop_threshold(robot.v, p))


def supervise(robot, point, proposed, p: SafetyParams, mode: str = DRIVE):
    """Return ``((a, alpha), mode)``; unsafe states brake at ``-B`` until stopped."""
    a, alpha = proposed
    safe = safe_condition(robot, point, p)
    if mode == OVERRIDE:
        if robot.v > 0 or not safe:
            return (-p.B, 0.0), OVERRIDE
        # stopped and safe: hold still for one period, then drive
        return (0.0, 0.0), DRIVE
    if safe:
        return (float(p.clamp_accel(a)), alpha), DRIVE
    return (-p.B, 0.0), OVERRIDE


def supervise_batch(px, py, v, qx, qy, a, alpha, override, p: SafetyParams):
    """Vectorized ``supervise``; ``override`` is a boolean array, returns ``(a, alpha, override)``."""
    safe = inf_distance(px, py, qx, qy) > safe_threshold(v, p)
    resume = override & (v <= 0) & safe
    brake = (override & ~resume) | (~override & ~safe)
    a_out = np.where(brake, -p.B, np.where(resume, 0.0, np.clip(a, -p.B, p.A)))
    alpha_out = np.where(brake | resume, 0.0, alpha)
    return a_out, alpha_out, brake
