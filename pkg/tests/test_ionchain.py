import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from refocus.ionchain import (
    HBAR,
    ChainGeometry,
    TrapConfig,
    ZigzagInstabilityError,
    _force,
    axial_mode_spectrum,
    chain_geometry,
    equilibrium_positions,
    thermal_occupations,
    transverse_coupling_matrix,
    transverse_mode_spectrum,
)


def test_two_ions_closed_form():
    np.testing.assert_allclose(equilibrium_positions(2), [-(0.25 ** (1 / 3)), 0.25 ** (1 / 3)], rtol=1e-14)


def test_three_ions_closed_form():
    c = 1.25 ** (1 / 3)
    np.testing.assert_allclose(equilibrium_positions(3), [-c, 0.0, c], rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize("n", [2, 5, 20, 21, 47, 100])
def test_force_balance_and_symmetry(n):
    u = equilibrium_positions(n)
    assert np.max(np.abs(_force(u))) < 1e-12
    np.testing.assert_allclose(u, -u[::-1], atol=1e-15)
    assert np.all(np.diff(u) > 0)


@pytest.mark.parametrize("n", [1, 101])
def test_ion_count_limits(n):
    with pytest.raises(ValueError):
        equilibrium_positions(n)


@pytest.mark.parametrize("n", [6, 21, 60])
def test_spacing_grows_towards_edges(n):
    d = np.diff(equilibrium_positions(n))
    half = d[: (n - 1) // 2]  # left half, edge to centre
    assert np.all(np.diff(half) < 0)
    assert np.argmin(d) in ((n - 1) // 2, (n - 2) // 2)


def test_reference_chain_spacings():
    geom = chain_geometry(TrapConfig(21))
    assert geom.a_min == pytest.approx(1.02e-6, rel=0.03)
    assert np.max(geom.spacings) == pytest.approx(1.78e-6, rel=0.03)


def test_default_mass_oscillator_length():
    cfg = TrapConfig(21)
    assert cfg.oscillator_length == pytest.approx(5.4e-9, rel=1e-12)
    assert cfg.mass / 1.66053906660e-27 == pytest.approx(173.3, abs=0.1)
    assert np.sqrt(HBAR / (2 * cfg.mass * cfg.omega_z)) == pytest.approx(5.4e-9, rel=1e-12)


def test_length_scale_frequency_scaling():
    a = TrapConfig(5, omega_z=2 * np.pi * 1e6).length_scale
    b = TrapConfig(5, omega_z=2 * np.pi * 2e6).length_scale
    assert a / b == pytest.approx(2 ** (2 / 3), rel=1e-14)


@pytest.mark.parametrize("field,value", [("n_ions", 1), ("omega_z", 0.0), ("anisotropy", -1.0), ("mass", 0.0)])
def test_config_validation(field, value):
    kw = {"n_ions": 5, field: value}
    with pytest.raises(ValueError):
        TrapConfig(**kw)


def test_two_ion_transverse_modes():
    modes = transverse_mode_spectrum(equilibrium_positions(2), anisotropy=10.0)
    np.testing.assert_allclose(modes.ratios, [10.0, np.sqrt(99.0)], rtol=1e-14)
    np.testing.assert_allclose(modes.vectors[:, 0], [2**-0.5, 2**-0.5], rtol=1e-14)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(2, 15), r=st.floats(8.0, 30.0))
def test_com_mode_property(n, r):
    modes = transverse_mode_spectrum(equilibrium_positions(n), anisotropy=r)
    assert modes.ratios[0] == pytest.approx(r, rel=1e-12)
    np.testing.assert_allclose(modes.vectors[:, 0], 1 / np.sqrt(n), atol=1e-10)
    assert np.all(np.diff(modes.ratios) <= 0)


@pytest.mark.parametrize("n", [5, 20, 40])
def test_eigen_decomposition_quality(n):
    u = equilibrium_positions(n)
    modes = transverse_mode_spectrum(u, anisotropy=20.0)
    B = modes.vectors
    np.testing.assert_allclose(B.T @ B, np.eye(n), atol=1e-12)
    A = transverse_coupling_matrix(u, 20.0)
    assert np.max(np.linalg.norm(A @ B - B * modes.ratios**2, axis=0)) < 1e-10


def test_twenty_ion_band():
    modes = transverse_mode_spectrum(chain_geometry(TrapConfig(20)), TrapConfig(20))
    assert modes.n_modes == 20
    assert np.all(modes.ratios <= 10.0 + 1e-12)
    assert np.all(modes.ratios > 5.0)
    assert modes.ratios[1] == pytest.approx(np.sqrt(99.0), rel=1e-12)  # tilt mode


def test_zigzag_reported():
    with pytest.raises(ZigzagInstabilityError) as info:
        transverse_mode_spectrum(equilibrium_positions(20), anisotropy=2.0)
    assert info.value.anisotropy == 2.0
    assert info.value.min_eigenvalue < 0


def test_lamb_dicke_scaling_and_flag():
    cfg = TrapConfig(10, eta_com=0.1)
    modes = transverse_mode_spectrum(chain_geometry(cfg), cfg)
    np.testing.assert_allclose(modes.lamb_dicke, 0.1 * np.sqrt(modes.ratios[0] / modes.ratios))
    assert not modes.large_lamb_dicke
    big = TrapConfig(10, eta_com=0.25)
    assert transverse_mode_spectrum(chain_geometry(big), big).large_lamb_dicke


def test_axial_modes_known_values():
    modes = axial_mode_spectrum(equilibrium_positions(5))
    # centre of mass at omega_z, breathing mode at sqrt(3) omega_z
    assert modes.ratios[0] == pytest.approx(1.0, rel=1e-12)
    assert modes.ratios[1] == pytest.approx(np.sqrt(3.0), rel=1e-12)


def test_occupations_com_reference():
    modes = transverse_mode_spectrum(equilibrium_positions(20), anisotropy=10.0)
    nbar = thermal_occupations(modes)
    assert nbar[0] == pytest.approx(1.0, rel=1e-14)
    assert np.all(nbar >= 1.0)


def test_occupation_plug_in():
    geom = ChainGeometry(np.array([-1.0, 1.0]))
    modes = transverse_mode_spectrum(geom, anisotropy=10.0)
    nbar = thermal_occupations(modes)
    ratio = modes.ratios[1] / modes.ratios[0]
    assert nbar[1] == pytest.approx(1 / (2**ratio - 1), rel=1e-13)
    # a mode 0.5% below the top one
    assert 1 / (2**0.995 - 1) == pytest.approx(1.006967, abs=1e-6)
