"""Angle helpers shared across the simulator.

Bearings and headings are world-frame degrees with east = 0 and
counterclockwise positive, normalized to [0, 360).
"""

from __future__ import annotations

import math


def wrap_deg(angle: float) -> float:
    """Map an angle in degrees onto [0, 360)."""
    return float(angle) % 360.0


def ang_diff_deg(a: float, b: float) -> float:
    """Smallest absolute difference between two angles, in [0, 180]."""
    d = abs(a - b) % 360.0
    return 360.0 - d if d > 180.0 else d


def bearing_deg(origin, target) -> float:
    """Bearing from ``origin`` to ``target`` in world-frame degrees."""
    dx = target[0] - origin[0]
    dy = target[1] - origin[1]
    return math.degrees(math.atan2(dy, dx)) % 360.0
