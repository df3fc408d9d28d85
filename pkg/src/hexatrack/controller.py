"""Pixel-offset to rotation commands.

A tracked target off image center by dx pixels maps to one body-turn command

    dtheta = sign(dx) * (|dx| - th) * k   if |dx| > th, else 0

with a deadband th = 640 / (4*2) = 80 px.  The camera gimbal pitch uses the
same law on dy.  Positive dx (target right of center) yields a positive,
rightward turn; positive dy yields a downward pitch command.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

DEADBAND_PX = 80.0

# Default yaw gain, with full-scale reading taken at |dx| = 320 px.  The
# alternative value derived from a pi/12 full-scale turn is exposed for
# configurations that prefer a gentler response.
K_YAW = 2.18e-3
K_YAW_FULLSCALE_PI_12 = (math.pi / 12.0) / (320.0 - DEADBAND_PX)

# Pitch follows the same law with the 320 px half-width replaced by 240.
K_PITCH = (math.pi / 12.0) / (240.0 - DEADBAND_PX)


@dataclass(frozen=True)
class ControllerParams:
    th: float = DEADBAND_PX
    k_yaw: float = K_YAW
    k_pitch: float = K_PITCH

    def __post_init__(self) -> None:
        if self.th < 0:
            raise ValueError(f"deadband must be >= 0, got {self.th}")
        if self.k_yaw <= 0 or self.k_pitch <= 0:
            raise ValueError("gains must be positive")


DEFAULT_PARAMS = ControllerParams()


def _turn_law(d: float, th: float, k: float) -> float:
    mag = abs(d)
    if mag <= th:
        return 0.0
    return math.copysign((mag - th) * k, d)


def yaw_command(dx: float, p: ControllerParams = DEFAULT_PARAMS) -> float:
    """Body turn in radians for a horizontal offset; positive = turn right."""
    return _turn_law(dx, p.th, p.k_yaw)


def pitch_command(dy: float, p: ControllerParams = DEFAULT_PARAMS) -> float:
    """Gimbal pitch in radians for a vertical offset."""
    return _turn_law(dy, p.th, p.k_pitch)
