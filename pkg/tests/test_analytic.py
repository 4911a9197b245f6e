import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saiga.analytic import (LaserSpec, Material, PointSource, ScanPath, SourceSet, discretize_scan,
                            grad_point_source, superpose, temp_point_source)


def test_laser_derived_quantities(laser, mat):
    assert laser.energy == pytest.approx(6.3525e-4, rel=1e-12)
    assert laser.spacing == pytest.approx(5e-6)
    assert mat.alpha == pytest.approx(42.0 / (4420.0 * 990.0))
    assert laser.tau_shift(mat) == pytest.approx(4e-10 / (8 * mat.alpha))


def test_peak_rise_at_activation(laser, mat):
    # at t = t_I, t - tau = r^2 / 8 alpha: E / (rho c (pi r^2 / 2)^1.5)
    src = PointSource(np.zeros(3), laser.energy, 0.0, -laser.tau_shift(mat))
    T = temp_point_source(src, mat, np.zeros(3), 0.0)
    assert T == pytest.approx(9217.6, rel=1e-4)


def test_source_gating(mat):
    src = PointSource(np.zeros(3), 1e-3, 1e-5, 5e-6)
    assert temp_point_source(src, mat, np.zeros(3), 5e-6) == 0.0
    assert np.all(grad_point_source(src, mat, np.ones((4, 3)) * 1e-6, 4e-6) == 0.0)
    assert temp_point_source(src, mat, np.zeros(3), 6e-6) > 0.0


def test_gradient_matches_finite_differences(mat):
    src = PointSource(np.array([1e-4, -2e-5, 0.0]), 6e-4, 0.0, -5e-6)
    x = np.array([1.3e-4, 1e-5, -2e-5])
    t = 2e-5
    g = grad_point_source(src, mat, x, t)
    h = 1e-8
    fd = [(temp_point_source(src, mat, x + h * e, t) - temp_point_source(src, mat, x - h * e, t)) / (2 * h)
          for e in np.eye(3)]
    np.testing.assert_allclose(g, fd, rtol=1e-6)


def test_superpose_is_sum_of_sources(mat, rng):
    srcs = [PointSource(rng.random(3) * 1e-4, 5e-4, i * 1e-5, i * 1e-5 - 5e-6) for i in range(5)]
    x = rng.random((30, 3)) * 1e-4
    t = 4.5e-5
    T, G = superpose(srcs, mat, x, t, cull=1e9)
    T_ref = sum(temp_point_source(s, mat, x, t) for s in srcs)
    G_ref = sum(grad_point_source(s, mat, x, t) for s in srcs)
    np.testing.assert_allclose(T, T_ref, rtol=1e-12)
    np.testing.assert_allclose(G, G_ref, rtol=1e-10, atol=1e-6 * np.abs(G_ref).max())


def test_superpose_only_counts_started_sources(mat):
    srcs = [PointSource(np.zeros(3), 5e-4, 0.0, -5e-6), PointSource(np.zeros(3), 5e-4, 1e-5, 5e-6)]
    T_one, _ = superpose(srcs[:1], mat, np.zeros(3), 1e-5)
    T_both, _ = superpose(srcs, mat, np.zeros(3), 1e-5)
    assert T_both == T_one               # second source switches on at t = 1e-5 exactly
    assert superpose(srcs, mat, np.zeros(3), 1.5e-5)[0] > superpose(srcs[:1], mat, np.zeros(3), 1.5e-5)[0]


def test_zero_at_start_of_scan(laser, mat):
    path = ScanPath([[0, 0], [1e-3, 0]], z=0.0)
    S = discretize_scan(path, laser, mat)
    T, G = superpose(S, mat, np.random.default_rng(0).random((20, 3)) * 1e-4, 0.0)
    assert np.all(T == 0) and np.all(G == 0)


def test_cull_error_is_bounded(laser, mat):
    path = ScanPath([[0, 0], [5e-4, 0]], z=0.0)
    S = discretize_scan(path, laser, mat)
    x = np.column_stack([np.linspace(-2e-4, 7e-4, 50), np.full(50, 3e-5), np.zeros(50)])
    t = 1.2e-3
    T_all, _ = superpose(S, mat, x, t, cull=1e9)
    T_cut, _ = superpose(S, mat, x, t, cull=20.0)
    amp_max = laser.energy / (mat.rho_cp * (math.pi * laser.spot_radius ** 2 / 2) ** 1.5)
    assert np.all(T_all >= T_cut)
    assert np.max(T_all - T_cut) <= len(S) * amp_max * math.exp(-20.0)


def test_threads_do_not_change_results(laser, mat, rng):
    path = ScanPath([[0, 0], [4e-4, 1e-4]], z=0.0)
    S = discretize_scan(path, laser, mat)
    x = rng.random((101, 3)) * 3e-4
    T1, G1 = superpose(S, mat, x, 1e-3, threads=1)
    T3, G3 = superpose(S, mat, x, 1e-3, threads=3)
    np.testing.assert_array_equal(T1, T3)
    np.testing.assert_array_equal(G1, G3)


def test_discretize_scan_spacing_and_times(laser, mat):
    path = ScanPath([[0, 0], [1e-4, 0], [1e-4, 1e-4]], start_time=2e-5, z=1e-3)
    S = discretize_scan(path, laser, mat)
    assert len(S) == 41                                   # 200 um at 5 um spacing, both ends
    steps = np.linalg.norm(np.diff(S.x, axis=0), axis=1)
    # straight runs are exactly v*dt apart; the corner chord is shorter
    assert np.allclose(np.sort(steps)[1:], 5e-6, rtol=1e-9)
    np.testing.assert_allclose(S.t, 2e-5 + np.arange(41) * 1e-5)
    np.testing.assert_allclose(S.t - S.tau, laser.tau_shift(mat))
    assert np.all(S.x[:, 2] == 1e-3) and np.all(S.E == laser.energy)


def test_single_waypoint_is_one_pulse(laser, mat):
    S = discretize_scan(ScanPath([[1e-3, 2e-3]], start_time=1e-4), laser, mat)
    assert len(S) == 1 and S.t[0] == 1e-4
    assert isinstance(S[0], PointSource)


def test_sourceset_roundtrip(laser, mat):
    S = discretize_scan(ScanPath([[0, 0], [1e-5, 0]]), laser, mat)
    again = SourceSet.from_sources([S[i] for i in range(len(S))])
    np.testing.assert_array_equal(again.x, S.x)
    np.testing.assert_array_equal(again.tau, S.tau)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        Material(k=-1, rho=1, cp=1)
    with pytest.raises(ValueError):
        LaserSpec(power=10, speed=0.5, spot_radius=2e-5, absorptivity=1.5)
    with pytest.raises(ValueError):
        ScanPath([[0, 0], [0, 0]])
    with pytest.raises(ValueError):
        ScanPath(np.zeros((0, 2)))


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-6, 1e-3), st.floats(0.0, 3.0))
def test_field_is_radially_decreasing(s, r_in_sigma):
    mat = Material(42.0, 4420.0, 990.0)
    src = PointSource(np.zeros(3), 1e-3, 0.0, -s)
    sigma = math.sqrt(2 * mat.alpha * s)
    r = r_in_sigma * sigma
    T0 = temp_point_source(src, mat, np.array([r, 0, 0]), 0.0)
    T1 = temp_point_source(src, mat, np.array([r + 0.1 * sigma, 0, 0]), 0.0)
    assert T1 < T0
