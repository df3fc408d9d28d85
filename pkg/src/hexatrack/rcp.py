"""RCP (robot communication protocol) codec.

A command is packed MSB-first into 22 payload bits padded to 3 bytes:

    [turn flag][gimbal flag][dx sign][dx magnitude x9][dy sign][dy magnitude x9][00]

The sign bit is 1 for rightward/positive offsets and 0 for leftward/negative,
so each 10-bit field is sign-magnitude with range -511..+511.  Zero offsets
are canonicalized to a cleared sign bit, making the all-zero command the
all-zero frame; decoding maps either sign of a zero magnitude to the same
logical command.

On a stream transport every 3-byte frame is preceded by a 1-byte length
prefix (always 3 for this version) so future frame layouts can coexist.
"""

from __future__ import annotations

from dataclasses import dataclass

MAX_OFFSET = 511
FRAME_LEN = 3


class RcpError(ValueError):
    """Command out of protocol range."""


class MalformedFrame(RcpError):
    """Received bytes do not form a valid RCP frame."""


@dataclass(frozen=True)
class RcpCommand:
    """Turn/gimbal flags plus pixel offsets of the tracked target."""

    turn_flag: int = 0
    gimbal_flag: int = 0
    dx: int = 0
    dy: int = 0

    def __post_init__(self) -> None:
        if self.turn_flag not in (0, 1) or self.gimbal_flag not in (0, 1):
            raise RcpError(f"flags must be 0 or 1: {self.turn_flag}, {self.gimbal_flag}")
        if abs(self.dx) > MAX_OFFSET or abs(self.dy) > MAX_OFFSET:
            raise RcpError(f"offset out of range +-{MAX_OFFSET}: dx={self.dx}, dy={self.dy}")


def _pack_offset(v: int) -> int:
    # 10-bit sign-magnitude; zero is canonically sign=0 (all-zero wire frame)
    sign = 1 if v > 0 else 0
    return (sign << 9) | abs(v)


def encode(c: RcpCommand) -> bytes:
    """Encode a command into its 3-byte frame."""
    if abs(c.dx) > MAX_OFFSET or abs(c.dy) > MAX_OFFSET:
        raise RcpError(f"offset out of range +-{MAX_OFFSET}")
    word = (
        (c.turn_flag << 23)
        | (c.gimbal_flag << 22)
        | (_pack_offset(c.dx) << 12)
        | (_pack_offset(c.dy) << 2)
    )
    return word.to_bytes(3, "big")


def decode(b: bytes) -> RcpCommand:
    """Exact inverse of :func:`encode`; rejects frames with nonzero pad bits."""
    if len(b) != FRAME_LEN:
        raise MalformedFrame(f"expected {FRAME_LEN} bytes, got {len(b)}")
    word = int.from_bytes(b, "big")
    if word & 0b11:
        raise MalformedFrame("nonzero pad bits")
    dx_field = (word >> 12) & 0x3FF
    dy_field = (word >> 2) & 0x3FF
    dx = (dx_field & 0x1FF) * (1 if dx_field >> 9 else -1)
    dy = (dy_field & 0x1FF) * (1 if dy_field >> 9 else -1)
    return RcpCommand(
        turn_flag=(word >> 23) & 1,
        gimbal_flag=(word >> 22) & 1,
        dx=dx,
        dy=dy,
    )


def write_framed(c: RcpCommand) -> bytes:
    """Length-prefixed frame for stream transports."""
    payload = encode(c)
    return bytes([len(payload)]) + payload


def read_framed(buf: bytes) -> tuple[RcpCommand, bytes]:
    """Consume one length-prefixed frame from ``buf``; returns (command, rest)."""
    if len(buf) < 1:
        raise MalformedFrame("empty buffer")
    n = buf[0]
    if n != FRAME_LEN:
        raise MalformedFrame(f"unsupported frame length {n}")
    if len(buf) < 1 + n:
        raise MalformedFrame("truncated frame")
    return decode(buf[1 : 1 + n]), buf[1 + n :]
