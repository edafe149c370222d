import pytest

from agsim.errors import EmptyLog, EmptySeries
from agsim.metrics import error_stats, traj_stats


def test_traj_single_sample_degenerate():
    stats = traj_stats([(0.0, 1.0, 2.0, 0.0)])
    assert stats.total_length == 0.0
    assert stats.duration == 0.0
    assert stats.average_speed == 0.0


def test_traj_345_triangle():
    stats = traj_stats([(0.0, 0.0, 0.0, 0.0), (2.0, 3.0, 4.0, 0.0)])
    assert stats.total_length == pytest.approx(5.0)
    assert stats.average_speed == pytest.approx(2.5)


def test_traj_speed_identity_exact():
    samples = [(0.1 * k, 0.37 * k, -0.11 * k, -0.05 * k) for k in range(200)]
    stats = traj_stats(samples)
    assert stats.average_speed == stats.total_length / stats.duration


def test_traj_table_consistency_rounds():
    # 98.0 m over 42.4 s reads back at one decimal as 2.3 m/s
    samples = [(0.0, 0.0, 0.0, 0.0), (42.4, 98.0, 0.0, 0.0)]
    stats = traj_stats(samples)
    assert stats.average_speed == pytest.approx(98.0 / 42.4)
    assert f"{stats.average_speed:.1f}" == "2.3"


def test_traj_altitude_reported_up_positive():
    stats = traj_stats([(0.0, 0.0, 0.0, -2.0), (1.0, 1.0, 0.0, -7.0)])
    assert stats.alt_range == (2.0, 7.0)


def test_traj_time_shift_invariant():
    base = [(0.5 * k, 1.0 * k, 0.2 * k, 0.0) for k in range(20)]
    shifted = [(t + 1000.0, n, e, d) for t, n, e, d in base]
    a, b = traj_stats(base), traj_stats(shifted)
    assert a.total_length == b.total_length
    assert a.duration == b.duration
    assert a.average_speed == b.average_speed


def test_traj_concatenation_additivity():
    a = [(0.0, 0.0, 0.0, 0.0), (1.0, 3.0, 0.0, 0.0)]
    b = [(2.0, 3.0, 4.0, 0.0), (3.0, 6.0, 4.0, 0.0)]
    gap = ((3.0 - 3.0) ** 2 + (4.0 - 0.0) ** 2) ** 0.5
    total = traj_stats(a + b).total_length
    assert total == traj_stats(a).total_length + traj_stats(b).total_length + gap


def test_traj_empty_log():
    with pytest.raises(EmptyLog):
        traj_stats([])


def test_error_stats_constant_series():
    stats = error_stats([1.0, 1.0, 1.0])
    assert stats.mean == 1.0
    assert stats.variance == 0.0
    assert stats.max == 1.0
    assert stats.count == 3


def test_error_stats_hand_case():
    stats = error_stats([0.0, 1.0, 2.0])
    assert stats.mean == pytest.approx(1.0)
    assert stats.variance == pytest.approx(2.0 / 3.0)  # population variance
    assert stats.max == 2.0


def test_error_stats_bounds():
    stats = error_stats([0.2, 0.9, 0.4, 0.9])
    assert stats.max >= stats.mean >= 0.0
    assert stats.variance >= 0.0


def test_error_stats_empty():
    with pytest.raises(EmptySeries):
        error_stats([])
