"""Tripod gait state machine with duty factor 0.5.

The six legs form two groups, R = {R1,R2,R3} and L = {L1,L2,L3}.  A straight
cycle is six phases executed in order:

    0 R lift | 1 L power stroke | 2 R drop | 3 L lift | 4 R power stroke | 5 L drop

A group is airborne from the start of its lift until the end of its drop
(phases 0-2 for R, 3-5 for L), so each leg spends exactly half of the cycle
in stance and the two tripods are never airborne together.  The body advances
half a stride on each power-stroke phase (1 and 4).

Turning is in place about the body center: walking halts at the next drop
boundary (all six feet grounded), then full turn cycles rotate the heading by
at most ``MAX_TURN_PER_CYCLE`` each until the pending command is consumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

LEGS = ("R1", "R2", "R3", "L1", "L2", "L3")
R_GROUP = frozenset({"R1", "R2", "R3"})
L_GROUP = frozenset({"L1", "L2", "L3"})
ALL_LEGS = frozenset(LEGS)

MAX_TURN_PER_CYCLE = math.pi / 12.0
DEFAULT_STRIDE = 0.05

IDLE = "idle"
STRAIGHT = "straight"
TURNING = "turning"

# posture constants (radians), well inside the +-pi/2 servo range
_COXA_SWING = 0.35
_FEMUR_LIFT = 0.40
_FEMUR_LAND = 0.15
_TIBIA_STAND = -0.50

SERVO_LIMIT = math.pi / 2.0


class GaitModeError(RuntimeError):
    """Operation called in the wrong gait mode."""


@dataclass(frozen=True)
class BodyPose:
    """Planar body pose; heading normalized to (-pi, pi]."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def normalized(self) -> "BodyPose":
        t = self.theta
        while t > math.pi:
            t -= 2.0 * math.pi
        while t <= -math.pi:
            t += 2.0 * math.pi
        return BodyPose(self.x, self.y, t) if t != self.theta else self


@dataclass(frozen=True)
class GaitState:
    phase: int = 0
    mode: str = IDLE
    pending_turn: float = 0.0
    # mode to restore once a pending turn is consumed
    return_mode: str = IDLE

    @property
    def stance(self) -> frozenset[str]:
        """Legs currently on the ground."""
        if self.mode == IDLE:
            return ALL_LEGS
        return L_GROUP if self.phase < 3 else R_GROUP


def stance_bitmask(s: GaitState) -> int:
    """Bit i set when LEGS[i] is in stance (R1 = bit 0)."""
    st = s.stance
    return sum(1 << i for i, leg in enumerate(LEGS) if leg in st)


def _leg_angles(group_phase: int, stroke_sign: float) -> tuple[float, float, float]:
    """(coxa, femur, tibia) for one leg given its phase within the group cycle.

    ``group_phase`` 0-2 is the airborne swing (lift / mid-swing / drop),
    3-5 the grounded support (front hold / power stroke / rear hold).
    ``stroke_sign`` flips the coxa sweep for turning gaits.
    """
    coxa_by_phase = (-_COXA_SWING, 0.0, _COXA_SWING, _COXA_SWING, 0.0, -_COXA_SWING)
    femur_by_phase = (_FEMUR_LIFT, _FEMUR_LIFT, _FEMUR_LAND, 0.0, 0.0, 0.0)
    return (
        stroke_sign * coxa_by_phase[group_phase],
        femur_by_phase[group_phase],
        _TIBIA_STAND,
    )


def joint_command(
    s: GaitState, gimbal: tuple[float, float] = (0.0, 0.0), turn_sign: float = 0.0
) -> list[float]:
    """20 servo angles: 3 per leg in LEGS order plus gimbal (pan, tilt)."""
    angles: list[float] = []
    for leg in LEGS:
        right = leg in R_GROUP
        if s.mode == IDLE:
            coxa, femur, tibia = 0.0, 0.0, _TIBIA_STAND
        else:
            group_phase = s.phase if right else (s.phase + 3) % 6
            if s.mode == TURNING:
                # opposite sweep on the two sides rotates the body in place
                sign = turn_sign if right else -turn_sign
            else:
                sign = 1.0
            coxa, femur, tibia = _leg_angles(group_phase, sign)
        angles.extend((coxa, femur, tibia))
    pan, tilt = gimbal
    angles.append(_clamp_servo(pan))
    angles.append(_clamp_servo(tilt))
    return angles


def _clamp_servo(a: float) -> float:
    return max(-SERVO_LIMIT, min(SERVO_LIMIT, a))


def advance_phase(
    s: GaitState,
    pose: BodyPose,
    stride: float = DEFAULT_STRIDE,
    gimbal: tuple[float, float] = (0.0, 0.0),
) -> tuple[GaitState, BodyPose, list[float]]:
    """Execute one phase of the straight gait.

    The body moves stride/2 along the heading on each power-stroke phase.
    If a turn was requested, the walk halts at the next drop boundary
    (end of phase 2 or 5) and the state switches to turning.
    """
    if s.mode != STRAIGHT:
        raise GaitModeError(f"advance_phase requires straight mode, state is {s.mode}")
    new_phase = (s.phase + 1) % 6
    new_pose = pose
    if new_phase in (1, 4):
        new_pose = BodyPose(
            pose.x + 0.5 * stride * math.cos(pose.theta),
            pose.y + 0.5 * stride * math.sin(pose.theta),
            pose.theta,
        )
    ns = replace(s, phase=new_phase)
    if s.pending_turn != 0.0 and s.phase in (2, 5):
        # the drop just completed: all feet grounded, safe to pivot
        ns = replace(ns, phase=0, mode=TURNING, return_mode=STRAIGHT)
    return ns, new_pose, joint_command(ns, gimbal)


def begin_turn(s: GaitState, dtheta: float) -> GaitState:
    """Request an in-place turn of ``dtheta`` radians (latest command wins)."""
    if dtheta == 0.0:
        return s
    if s.mode == IDLE:
        return replace(s, mode=TURNING, pending_turn=dtheta, return_mode=IDLE, phase=0)
    if s.mode == TURNING:
        return replace(s, pending_turn=dtheta)
    # straight: note the request; advance_phase switches over at the next drop
    return replace(s, pending_turn=dtheta)


def advance_turn(
    s: GaitState,
    pose: BodyPose,
    max_turn: float = MAX_TURN_PER_CYCLE,
    gimbal: tuple[float, float] = (0.0, 0.0),
) -> tuple[GaitState, BodyPose, list[float]]:
    """Execute one phase of the turn cycle.

    The body rotates progressively while the stance legs stroke, at most
    ``max_turn`` per completed cycle (max_turn/6 per phase), so a full
    cycle changes the heading by clamp(pending, +-max_turn) in total.
    Position never changes (turning is about the body center).  The gait
    returns to the interrupted mode at the cycle boundary after the pending
    turn is used up.
    """
    if s.mode != TURNING:
        raise GaitModeError(f"advance_turn requires turning mode, state is {s.mode}")
    turn_sign = math.copysign(1.0, s.pending_turn) if s.pending_turn else 0.0
    budget = max_turn / 6.0
    rot = max(-budget, min(budget, s.pending_turn))
    new_phase = (s.phase + 1) % 6
    new_pose = BodyPose(pose.x, pose.y, pose.theta + rot).normalized() if rot else pose
    ns = replace(s, phase=new_phase, pending_turn=s.pending_turn - rot)
    if new_phase == 0 and ns.pending_turn == 0.0:
        ns = replace(ns, mode=s.return_mode)
    return ns, new_pose, joint_command(ns, gimbal, turn_sign=turn_sign)


def step(
    s: GaitState,
    pose: BodyPose,
    stride: float = DEFAULT_STRIDE,
    gimbal: tuple[float, float] = (0.0, 0.0),
) -> tuple[GaitState, BodyPose, list[float]]:
    """Advance whichever cycle is active; idle emits the standing posture."""
    if s.mode == TURNING:
        return advance_turn(s, pose, gimbal=gimbal)
    if s.mode == STRAIGHT:
        return advance_phase(s, pose, stride=stride, gimbal=gimbal)
    return s, pose, joint_command(s, gimbal)
