"""Hexapod monitoring simulation: moving-target detection under ego-motion,
correlation-filter tracking, offset-to-rotation control, tripod gait and the
RCP teleoperation wire protocol."""

__version__ = "0.1.0"
