import math

import numpy as np
import pytest

from saiga.analytic import Material, discretize_scan, superpose
from saiga.postproc import (PROFILE_HEADER, FluxProfile, boundary_flux_profile, correction_field,
                            export_field, export_profile_csv, integrated_abs_flux, read_profile_csv,
                            relative_error, sample_grid, total_temperature, write_probe_csv)
from saiga.splines import DomainError, FaceId, h_refine


def test_isoparametric_field_reproduces_coordinates(part, rng):
    # coefficients equal to a control coordinate give that coordinate exactly
    xi = rng.random((40, 3))
    for a in range(3):
        val, grad, x = correction_field(part, part.control_flat[:, a], xi)
        np.testing.assert_allclose(val, x[:, a], atol=1e-17)
        np.testing.assert_allclose(grad, np.broadcast_to(np.eye(3)[a], grad.shape), atol=1e-9)


def test_decomposition_identity(part_p2, laser, pulse_path, rng):
    mat = Material(42.0, 4420.0, 990.0, T_c=180.0)
    S = discretize_scan(pulse_path, laser, mat)
    coeffs = rng.standard_normal(part_p2.n_basis)
    xi = rng.random((25, 3))
    T, Tt, Th = total_temperature(part_p2, coeffs, S, mat, xi, 1e-4)
    np.testing.assert_array_equal(T, mat.T_c + Tt + Th)
    x = part_p2.evaluate(xi)[0]
    np.testing.assert_array_equal(Tt, superpose(S, mat, x, 1e-4)[0])


def test_parametric_points_are_checked(part):
    with pytest.raises(DomainError):
        correction_field(part, np.zeros(part.n_basis), [[0.5, 1.2, 0.1]])
    with pytest.raises(ValueError):
        correction_field(part, np.zeros(part.n_basis), [[0.5, 0.2]])


def test_profile_geometry_along_curved_face(part, laser, mat, pulse_path):
    S = discretize_scan(pulse_path, laser, mat)
    prof = boundary_flux_profile(part, np.zeros(part.n_basis), S, mat, FaceId.ETAMIN, 101, 0.0,
                                 axis_center=(2e-3, 0.0))
    assert prof.s[-1] == pytest.approx(0.5 * math.pi * 1e-3, rel=1e-12)
    # on a circle the arc length is R times the swept angle
    assert prof.theta[0] == pytest.approx(math.pi / 2) and abs(prof.theta[-1]) < 1e-12
    np.testing.assert_allclose(prof.s, 1e-3 * (math.pi / 2 - prof.theta), rtol=1e-10, atol=1e-16)
    assert not prof.q_net.any()
    I_net, I_ana, ratio = integrated_abs_flux(prof)
    assert I_net == 0.0 and I_ana == 0.0 and ratio is None


def test_profile_flux_sign(part, laser, mat, pulse_path):
    # heat flows out of the material through the curved face: q_tilde > 0 near the pulse
    S = discretize_scan(pulse_path, laser, mat)
    prof = boundary_flux_profile(part, np.zeros(part.n_basis), S, mat, "etamin", 201, 5e-5)
    assert prof.q_tilde.max() > 0 and prof.q_tilde.min() >= 0
    assert np.isnan(prof.theta).all()
    k = prof.q_tilde.argmax()
    np.testing.assert_allclose(prof.x[k, :2], [2e-3 - 1e-3 * math.sqrt(0.5), 1e-3 * math.sqrt(0.5)],
                               atol=2e-5)
    with pytest.raises(ValueError):
        boundary_flux_profile(part, np.zeros(part.n_basis), S, mat, "zetamax", 10, 1e-5)


def test_integrated_flux_trapezoid():
    s = np.linspace(0, 2.0, 5)
    prof = FluxProfile(s, s, np.full(5, 4.0), np.full(5, -3.0), np.full(5, 1.0))
    I_net, I_ana, ratio = integrated_abs_flux(prof)
    assert (I_net, I_ana) == (2.0, 8.0) and ratio == 0.25


def test_relative_error():
    assert relative_error(9.0, 10.0) == pytest.approx(0.1)
    assert relative_error(-11.0, -10.0) == pytest.approx(0.1)
    assert relative_error(3.0, 3.0) == 0.0
    with pytest.raises(ZeroDivisionError):
        relative_error(1.0, 0.0)


def test_profile_csv_roundtrip(tmp_path, rng):
    prof = FluxProfile(*(rng.random(7) for _ in range(5)))
    path = export_profile_csv(prof, tmp_path / "p.csv")
    assert path.read_text().splitlines()[0] == ",".join(PROFILE_HEADER)
    back = read_profile_csv(path)
    for name in ("s", "theta", "q_tilde", "q_hat", "q_net"):
        np.testing.assert_array_equal(getattr(back, name), getattr(prof, name))
    with pytest.raises(ValueError):
        export_profile_csv(FluxProfile(*(np.zeros(0) for _ in range(5))), tmp_path / "e.csv")


def test_probe_csv_full_precision(tmp_path):
    path = write_probe_csv([(np.float64(0.1), 1 / 3, 2.0, 7 / 3)], tmp_path / "p.csv")
    row = path.read_text().splitlines()[1].split(",")
    assert float(row[1]) == 1 / 3 and row[0] == "0.1"


def test_field_export_at_start(tmp_path, part, laser, pulse_path):
    mat = Material(42.0, 4420.0, 990.0, T_c=20.0)
    S = discretize_scan(pulse_path, laser, mat)
    path = export_field(part, np.zeros(part.n_basis), S, mat, (5, 4, 3), 0.0, tmp_path / "f.vtk")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# vtk DataFile") and "DIMENSIONS 5 4 3" in lines
    i = lines.index("SCALARS T_total double 1")
    values = np.array(lines[i + 2: i + 2 + 60], dtype=float)
    assert np.all(values == 20.0)
    pts = np.array([ln.split() for ln in lines[6: 6 + 60]], dtype=float)
    assert pts.shape == (60, 3)


def test_sample_grid_order():
    g = sample_grid((3, 2, 2))
    np.testing.assert_array_equal(g[:3, 0], [0, 0.5, 1])
    assert g.shape == (12, 3)
    with pytest.raises(ValueError):
        sample_grid((1, 2, 2))


def test_profile_converges_in_sample_count(part_p2, laser, mat, pulse_path):
    from saiga.timestepper import Simulation

    vol = h_refine(part_p2, [[0.35, 0.4, 0.45, 0.55, 0.6, 0.65], [0.1, 0.3], [0.7, 0.9]])
    sim = Simulation(vol, mat, laser, pulse_path)
    state = sim.run(1e-4)
    u = sim.coefficients(state)
    I = [integrated_abs_flux(boundary_flux_profile(vol, u, sim.sources, mat, FaceId.ETAMIN, n, 1e-4))[0]
         for n in (401, 801)]
    assert abs(I[1] - I[0]) < 0.01 * I[1]
