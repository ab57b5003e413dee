import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import expm_displacement
from washboard.coupling import coupling_probabilities
from washboard.harmonic import (
    HoConfig,
    TruncationError,
    fock_displacement,
    ho_fock_simulation,
    ho_single_step_coupling,
    ho_square_delay_angle,
    ho_square_optimum,
)
from washboard.lattice import LatticeConfig
from washboard.pulses import make_pulse


@given(st.floats(-2.5, 2.5))
@settings(max_examples=40, deadline=None)
def test_fock_displacement_matches_expm(beta):
    np.testing.assert_allclose(fock_displacement(beta, 25), expm_displacement(beta, 25), atol=1e-10)


def test_fock_displacement_zero():
    np.testing.assert_array_equal(fock_displacement(0.0, 6), np.eye(6))


@given(st.floats(0, 3))
def test_single_step_formula_is_fock_element(xi):
    assert ho_single_step_coupling(xi) == pytest.approx(abs(fock_displacement(xi, 5)[1, 0]) ** 2, abs=1e-12)


def test_single_step_maximum():
    xi = np.linspace(0, 3, 3001)
    p = ho_single_step_coupling(xi)
    assert xi[np.argmax(p)] == pytest.approx(1.0)
    assert ho_single_step_coupling(1.0) == pytest.approx(np.exp(-1), abs=1e-15)


def test_delay_angle_limits():
    assert ho_square_delay_angle(0.5) == pytest.approx(-1.0)
    assert ho_square_delay_angle(1 / np.sqrt(2)) == pytest.approx(0.0, abs=1e-15)
    assert ho_square_delay_angle(0.3) == -1.0
    assert ho_square_delay_angle(100.0) == pytest.approx(1.0, abs=1e-4)


@given(st.floats(0.55, 3.0))
def test_delay_angle_matches_fock_optimum(r):
    # net kick beta (exp(-i theta) - 1) reaches |alpha| = 1 when cos theta = 1 - 1/(2 beta^2)
    theta, p = ho_square_optimum(r, n_theta=4001)
    assert np.cos(theta) == pytest.approx(float(ho_square_delay_angle(r)), abs=2e-3)
    assert p == pytest.approx(np.exp(-1), abs=1e-6)


def test_fock_simulation_single_step():
    cfg = HoConfig(omega=2 * np.pi * 5e3, depth_s=18.0)
    dx = 1.0 / cfg.xi(1.0)
    pops = ho_fock_simulation(cfg, make_pulse("single_step", dx))
    assert pops[1] == pytest.approx(np.exp(-1), abs=1e-12)
    assert pops.sum() == pytest.approx(1.0)


def test_fock_simulation_square_full_period_undoes_itself():
    cfg = HoConfig(omega=2 * np.pi * 5e3, depth_s=18.0)
    pops = ho_fock_simulation(cfg, make_pulse("square", 0.2, 1.0))
    assert pops[0] == pytest.approx(1.0, abs=1e-12)


def test_fock_simulation_gaussian_conserves_norm():
    cfg = HoConfig(omega=2 * np.pi * 5e3, depth_s=18.0)
    pops = ho_fock_simulation(cfg, make_pulse("gaussian", 0.2, 0.3))
    assert pops.sum() == pytest.approx(1.0, abs=1e-9)


def test_truncation_detected():
    cfg = HoConfig(omega=2 * np.pi * 5e3, depth_s=18.0)
    with pytest.raises(TruncationError):
        ho_fock_simulation(cfg, make_pulse("single_step", 0.5), n_levels=10)
    with pytest.raises(ValueError):
        ho_fock_simulation(cfg, make_pulse("single_step", 0.1), n_levels=5)
    with pytest.raises(ValueError):
        HoConfig(omega=0.0, depth_s=1.0)


def test_oscillator_scales():
    cfg = HoConfig(omega=2 * np.pi * 5e3, depth_s=16.0)
    assert cfg.x0 * cfg.p0 == pytest.approx(1.054571817e-34 / 2)
    assert cfg.spacing == pytest.approx(2 * np.pi * cfg.sigma)
    assert cfg.xi(1.0) == pytest.approx(cfg.p0 * cfg.spacing / 1.054571817e-34)


def test_deep_lattice_approaches_oscillator():
    # residual anharmonic correction shrinks with depth
    errs = []
    for s in (400.0, 1600.0, 6400.0):
        cfg = LatticeConfig(depth_s=s, num_plane_waves=40)
        ho = HoConfig.from_lattice(cfg)
        lat = coupling_probabilities(cfg, make_pulse("single_step", 0.02), n_q=16).P12
        errs.append(abs(lat / ho_single_step_coupling(ho.xi(0.02)) - 1))
    assert errs[1] < 0.02
    assert errs[0] > errs[1] > errs[2]


def test_single_step_values():
    assert ho_single_step_coupling(0.0) == 0.0
    assert ho_single_step_coupling(2.0) == pytest.approx(4 * np.exp(-4), abs=1e-15)
    assert ho_square_delay_angle(1.0) == pytest.approx(0.5)


@pytest.mark.parametrize("r", [0.5, 0.6, 1 / np.sqrt(2), 1.0, 1.5])
def test_square_pulse_at_predicted_delay_reaches_inverse_e(r):
    cfg = HoConfig.from_lattice(LatticeConfig(depth_s=18.0))
    dx = r / cfg.xi(1.0)
    tau = np.arccos(float(ho_square_delay_angle(r))) / (2 * np.pi)
    pops = ho_fock_simulation(cfg, make_pulse("square", dx, tau))
    assert pops[1] == pytest.approx(np.exp(-1), abs=1e-3)


@pytest.mark.parametrize("kind,width", [("single_step", None), ("square", 0.4), ("gaussian", 0.3)])
def test_zero_displacement_leaves_ground_state(kind, width):
    cfg = HoConfig(omega=2 * np.pi * 5e3, depth_s=18.0)
    pops = ho_fock_simulation(cfg, make_pulse(kind, 0.0, width))
    assert pops[0] == pytest.approx(1.0, abs=1e-14)
