import json
import warnings

import numpy as np
import pytest
from scipy.sparse.linalg import spsolve

from memtune.errors import BucklingError, ValidationError
from memtune.model import preset
from memtune.thermal import (
    BeamSpec,
    ThermalGrid,
    absorption_from_chi,
    chi_of_beam,
    enclosed_fraction,
    f_of_P_curve,
    gaussian_source,
    laplacian_matrix,
    solve_heating,
)


@pytest.fixture(scope="module")
def spec():
    return preset("t1_500")


@pytest.fixture(scope="module")
def centered():
    return BeamSpec(1e-3, 350e-6, (0.0, 0.0))


def test_matches_sparse_direct_solve(spec):
    grid = ThermalGrid(41, 33)
    beam = BeamSpec(2e-3, 200e-6, (30e-6, -20e-6))
    field = solve_heating(spec, beam, grid)
    hx, hy = grid.spacing(spec.side_length)
    rhs = gaussian_source(spec, beam, grid)[1:-1, 1:-1] / (spec.heat_conductivity * spec.thickness)
    ref = spsolve(laplacian_matrix(grid, hx, hy).tocsc(), rhs.ravel()).reshape(rhs.shape)
    np.testing.assert_allclose(field.delta_T[1:-1, 1:-1], ref, rtol=1e-10)


def test_boundary_zero_and_nonnegative(spec, centered):
    f = solve_heating(spec, centered, ThermalGrid(101, 101))
    T = f.delta_T
    assert np.all(T[0] == 0) and np.all(T[-1] == 0) and np.all(T[:, 0] == 0) and np.all(T[:, -1] == 0)
    assert T.min() >= 0
    assert f.residual < 1e-10


def test_discrete_maximum_principle(spec, centered):
    grid = ThermalGrid(101, 101)
    f = solve_heating(spec, centered, grid)
    # u <= q_max/(kappa t) * x(l - x)/2, since the 5-point stencil is exact on quadratics
    qmax = gaussian_source(spec, centered, grid).max() / (spec.heat_conductivity * spec.thickness)
    x, _ = grid.coordinates(spec.side_length)
    s = x + spec.side_length / 2
    bound = qmax * s * (spec.side_length - s) / 2
    assert np.all(f.delta_T <= bound[:, None] * (1 + 1e-12))


def test_dihedral_symmetry(spec, centered):
    T = solve_heating(spec, centered, ThermalGrid(101, 101)).delta_T
    scale = T.max()
    for sym in (T[::-1, :], T[:, ::-1], T.T, T[::-1, ::-1].T):
        np.testing.assert_allclose(sym, T, rtol=0, atol=1e-12 * scale)


def test_linearity(spec, centered):
    grid = ThermalGrid(61, 61)
    a = solve_heating(spec, centered, grid).delta_T
    b = solve_heating(spec, centered.with_power(2 * centered.power), grid).delta_T
    c = solve_heating(spec.with_(absorption_fraction=2 * spec.absorption_fraction), centered, grid).delta_T
    np.testing.assert_allclose(b, 2 * a, rtol=1e-12)
    np.testing.assert_allclose(c, 2 * a, rtol=1e-12)


def test_average_is_area_weighted_mean(spec, centered):
    grid = ThermalGrid(51, 51)
    f = solve_heating(spec, centered, grid)
    w = np.ones(51)
    w[[0, -1]] = 0.5
    h = spec.side_length / 50
    expected = (w[:, None] * w[None, :] * f.delta_T).sum() * h * h / spec.side_length**2
    assert f.avg_delta_T == pytest.approx(expected, rel=1e-13)
    assert f.chi == pytest.approx(f.avg_delta_T / centered.power, rel=1e-14)


def test_zero_power_reports_unit_chi(spec, centered):
    zero = solve_heating(spec, centered.with_power(0.0), ThermalGrid(51, 51))
    unit = solve_heating(spec, centered, ThermalGrid(51, 51))
    assert np.all(zero.delta_T == 0) and zero.avg_delta_T == 0
    assert zero.chi == pytest.approx(unit.chi, rel=1e-12)


def test_reference_chi_within_band(spec, centered):
    chi = chi_of_beam(spec, centered).chi
    assert chi == pytest.approx(0.6e3, rel=0.2)


def test_average_temperature_at_160mW(spec, centered):
    f = solve_heating(spec, centered.with_power(0.160))
    assert f.avg_delta_T == pytest.approx(96.0, rel=0.2)


def test_grid_convergence(spec, centered):
    chis = [chi_of_beam(spec, centered, ThermalGrid.square(n)).chi for n in (101, 201, 401)]
    assert abs(chis[1] / chis[0] - 1) < 0.01
    assert abs(chis[2] / chis[1] - 1) < 0.01


def test_off_center_beam_heats_less(spec, centered):
    off = BeamSpec(0.0, 350e-6, (100e-6, 0.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        assert chi_of_beam(spec, off).chi < chi_of_beam(spec, centered).chi


def test_double_conductivity_halves_chi(spec, centered):
    a = chi_of_beam(spec, centered, ThermalGrid(61, 61)).chi
    b = chi_of_beam(spec.with_(heat_conductivity=2 * spec.heat_conductivity), centered, ThermalGrid(61, 61)).chi
    assert b == pytest.approx(a / 2, rel=1e-12)


def test_absorption_inversion(spec, centered):
    assert absorption_from_chi(spec, centered, 0.6e3) == pytest.approx(1.5e-3, rel=0.2)
    assert absorption_from_chi(spec, centered, 0.0) == 0.0
    rng = np.random.default_rng(3)
    grid = ThermalGrid(61, 61)
    for a in 10 ** rng.uniform(-5, -2, 10):
        chi = chi_of_beam(spec.with_(absorption_fraction=a), centered, grid).chi
        assert absorption_from_chi(spec, centered, chi, grid) == pytest.approx(a, rel=1e-10)


def test_enclosed_fraction_and_warning(spec):
    assert enclosed_fraction(spec.side_length, BeamSpec(0, 350e-6)) > 0.99
    wide = BeamSpec(1e-3, 600e-6)
    with pytest.warns(RuntimeWarning):
        f = solve_heating(spec, wide, ThermalGrid(31, 31))
    assert f.beam_truncated


def test_beam_outside_rejected(spec):
    with pytest.raises(ValidationError):
        solve_heating(spec, BeamSpec(1e-3, 100e-6, (300e-6, 0.0)), ThermalGrid(31, 31))


def test_grid_invariants():
    for bad in (15, 100):
        with pytest.raises(ValidationError):
            ThermalGrid(bad, 101)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_f_of_P_curve(spec, centered):
    assert f_of_P_curve(spec, [0.0], chi=600.0) == [(0.0, pytest.approx(259973.47, rel=1e-7))]
    curve = f_of_P_curve(spec, np.linspace(0, 0.16, 17), chi=600.0)
    f = [c[1] for c in curve]
    assert np.all(np.diff(f) < 0)
    assert 0.40 <= 1 - f[-1] / f[0] <= 0.50
    off = BeamSpec(0.0, 350e-6, (80e-6, 0.0))
    a = f_of_P_curve(spec, [0.0, 0.1], beam=centered, grid=ThermalGrid(61, 61))
    b = f_of_P_curve(spec, [0.0, 0.1], beam=off, grid=ThermalGrid(61, 61))
    assert a[0] == b[0] and a[1][1] != b[1][1]


def test_f_of_P_curve_buckling_partial(spec):
    with pytest.raises(BucklingError) as info:
        f_of_P_curve(spec, [0.0, 0.1, 0.5, 0.6], chi=600.0)
    assert [p for p, _ in info.value.partial] == [0.0, 0.1]
    with pytest.raises(ValidationError):
        f_of_P_curve(spec, [0.0])


def test_field_exports(tmp_path, spec, centered):
    f = solve_heating(spec, centered, ThermalGrid(21, 21))
    f.write_csv(tmp_path / "field.csv")
    data = np.loadtxt(tmp_path / "field.csv", delimiter=",", skiprows=1)
    assert data.shape == (21 * 21, 3)
    np.testing.assert_allclose(data[:, 2].reshape(21, 21), f.delta_T, rtol=1e-11, atol=1e-300)
    f.write_summary(tmp_path / "summary.json")
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["chi_K_per_W"] == pytest.approx(f.chi)
    assert summary["grid"]["nx"] == 21
