import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hexatrack.controller import (
    ControllerParams,
    K_YAW_FULLSCALE_PI_12,
    pitch_command,
    yaw_command,
)


class TestYaw:
    def test_centered(self):
        assert yaw_command(0) == 0.0

    def test_deadband_boundary(self):
        assert yaw_command(80) == 0.0
        assert yaw_command(-80) == 0.0

    def test_full_scale(self):
        # (320 - 80) * 2.18e-3 = 0.5232
        assert yaw_command(320) == pytest.approx(0.5232, abs=1e-9)

    def test_negative_offset(self):
        assert yaw_command(-100) == pytest.approx(-0.0436, abs=1e-9)

    def test_alternative_gain_exposed(self):
        assert K_YAW_FULLSCALE_PI_12 == pytest.approx((math.pi / 12) / 240)
        p = ControllerParams(k_yaw=K_YAW_FULLSCALE_PI_12)
        assert yaw_command(320, p) == pytest.approx(math.pi / 12)


class TestPitch:
    def test_centered(self):
        assert pitch_command(0) == 0.0

    def test_full_scale_is_pi_over_12(self):
        assert pitch_command(240) == pytest.approx(math.pi / 12, abs=1e-12)

    def test_deadband(self):
        assert pitch_command(-80) == 0.0


class TestParams:
    def test_rejects_negative_deadband(self):
        with pytest.raises(ValueError):
            ControllerParams(th=-1)

    def test_rejects_nonpositive_gain(self):
        with pytest.raises(ValueError):
            ControllerParams(k_yaw=0)


@given(st.floats(-511, 511))
def test_odd_symmetry(d):
    assert yaw_command(-d) == pytest.approx(-yaw_command(d), abs=1e-15)
    assert pitch_command(-d) == pytest.approx(-pitch_command(d), abs=1e-15)


@given(st.floats(0, 511))
def test_zero_inside_deadband(d):
    if d <= 80:
        assert yaw_command(d) == 0.0


def test_continuity_at_deadband_edge():
    eps = 1e-9
    assert yaw_command(80 + eps) < 1e-10
    assert yaw_command(80 + eps) > 0


@given(st.tuples(st.floats(0, 511), st.floats(0, 511)))
def test_monotone(pair):
    a, b = sorted(pair)
    assert yaw_command(a) <= yaw_command(b)
