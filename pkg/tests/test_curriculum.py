"""Decay schedule against a brute-force staircase; assist-force geometry."""

import math
from types import SimpleNamespace

import numpy as np
import pytest

from gewu.sim.curriculum import (
    CurriculumSchedule,
    DEFAULT_SCHEDULE,
    assist_force,
    lambda_at,
)


def staircase_oracle(t):
    """Independent plateau table, written straight from the decay rule:
    1.0 through step 599,999, then one 0.2 decrement per 100k steps."""
    if t < 600_000:
        return 1.0
    if t < 700_000:
        return 0.8
    if t < 800_000:
        return 0.6
    if t < 900_000:
        return 0.4
    if t < 1_000_000:
        return 0.2
    return 0.0


def test_schedule_matches_oracle_every_10k_steps():
    for t in range(0, 1_500_001, 10_000):
        assert lambda_at(t) == staircase_oracle(t), f"t={t}"


@pytest.mark.parametrize("t,expected", [
    (0, 1.0),
    (499_999, 1.0),
    (500_000, 1.0),
    (600_000, 0.8),
    (750_000, 0.6),
    (1_000_000, 0.0),
    (5_000_000, 0.0),
    (10_000_000, 0.0),
])
def test_schedule_anchor_points(t, expected):
    assert lambda_at(t) == expected


def test_levels_are_the_exact_plateau_set():
    assert DEFAULT_SCHEDULE.levels == (1.0, 0.8, 0.6, 0.4, 0.2, 0.0)
    values = {lambda_at(t) for t in range(0, 1_200_001, 1_000)}
    assert values == {1.0, 0.8, 0.6, 0.4, 0.2, 0.0}


def test_lambda_non_increasing():
    prev = 1.0
    for t in range(0, 1_200_001, 7_919):
        cur = lambda_at(t)
        assert cur <= prev
        prev = cur


def test_negative_step_rejected():
    with pytest.raises(ValueError):
        lambda_at(-1)


def test_compressed_schedule_preserves_plateau_structure():
    sched = DEFAULT_SCHEDULE.compressed(50)
    assert sched.start_step == 10_000
    assert sched.step_interval == 2_000
    assert sched.zero_step == 20_000
    assert lambda_at(0, sched) == 1.0
    assert lambda_at(10_000, sched) == 1.0
    assert lambda_at(12_000, sched) == 0.8
    assert lambda_at(20_000, sched) == 0.0
    values = {lambda_at(t, sched) for t in range(0, 30_001, 100)}
    assert values == {1.0, 0.8, 0.6, 0.4, 0.2, 0.0}


# --- assist force ------------------------------------------------------------

def body_of(mass=10.0, heading=0.0):
    return SimpleNamespace(mass=mass, heading=heading)


def test_worked_force_example():
    force = assist_force(body_of(mass=10.0, heading=0.0), lam=1.0)
    assert np.linalg.norm(force) == pytest.approx(49.05, abs=1e-12)
    direction = force / np.linalg.norm(force)
    assert direction == pytest.approx([0.08715574, 0.0, 0.99619470], abs=1e-7)


def test_zero_fraction_gives_zero_vector():
    assert np.array_equal(assist_force(body_of(), 0.0), np.zeros(3))


def test_heading_rotates_horizontal_component_only():
    # Rotation-matrix oracle: rotating the heading by yaw must rotate the
    # horizontal force components by the same yaw and leave vertical alone.
    base = assist_force(body_of(heading=0.0), 1.0)
    for yaw in (math.pi / 2, -math.pi / 3, 2.1):
        rotated = assist_force(body_of(heading=yaw), 1.0)
        c, s = math.cos(yaw), math.sin(yaw)
        oracle = np.array([
            c * base[0] - s * base[1],
            s * base[0] + c * base[1],
            base[2],
        ])
        assert rotated == pytest.approx(oracle, abs=1e-12)
    quarter = assist_force(body_of(heading=math.pi / 2), 1.0)
    assert quarter[0] == pytest.approx(0.0, abs=1e-12)
    assert quarter[1] == pytest.approx(math.sin(math.radians(5)) * 49.05, abs=1e-9)


def test_tilt_angle_invariant_across_headings():
    rng = np.random.default_rng(7)
    tilt = math.radians(5.0)
    for heading in rng.uniform(-math.pi, math.pi, size=200):
        for lam in (0.2, 0.4, 0.6, 0.8, 1.0):
            f = assist_force(body_of(mass=13.5, heading=heading), lam)
            angle = math.atan2(math.hypot(f[0], f[1]), f[2])
            assert abs(angle - tilt) < 1e-9
            expected_mag = lam * 0.5 * 13.5 * 9.81
            assert abs(np.linalg.norm(f) - expected_mag) / expected_mag < 1e-12


def test_magnitude_bounded_by_half_weight():
    sched = CurriculumSchedule()
    for lam in np.linspace(0.0, 1.0, 11):
        f = assist_force(body_of(mass=10.0), float(lam), sched)
        bound = 0.5 * 10.0 * sched.gravity
        assert np.linalg.norm(f) <= bound + 1e-12
        if lam == 1.0:
            assert np.linalg.norm(f) == pytest.approx(bound, rel=1e-12)
