import numpy as np
import pytest

from lib.models.grid import Field, Grid
from lib.models.kinetics import make_cutoffs
from lib.services.math_service import MathService
from lib.services.stochastic_wave_service import StochasticWaveService, StochasticWaveSystem
from lib.services.wave_service import WaveService


@pytest.fixture(scope='module')
def expansion(nagumo, nagumo_grid, nagumo_wave, nagumo_psi):
    return StochasticWaveService.speed_expansion(nagumo, nagumo_grid, nagumo_wave, nagumo_psi)


@pytest.fixture(scope='module')
def swave(nagumo_swave):
    return nagumo_swave


def test_b_at_deterministic_wave(nagumo, nagumo_wave, nagumo_psi):
    b = StochasticWaveService.eval_b(nagumo_wave.profile, nagumo_psi, nagumo)
    g_pairing = MathService.inner(Field(nagumo_wave.profile.grid, nagumo.noise(nagumo_wave.profile.values)),
                                  nagumo_psi)
    # ⟨Φ₀', ψ⟩ = 1 lies in the identity region of χ_low
    assert b == pytest.approx(-g_pairing, rel=1e-10)
    assert StochasticWaveService.eval_btilde(nagumo_wave.profile, nagumo_psi, nagumo) == pytest.approx(b, rel=1e-10)


def test_b_saturates_through_chi_high(nagumo, nagumo_wave, nagumo_psi):
    tiny = make_cutoffs(1.0)
    scaled_psi = nagumo_psi * 1e4
    b = StochasticWaveService.eval_b(nagumo_wave.profile, scaled_psi, nagumo, tiny)
    assert abs(b) <= 2.0 / 1e4 + 1e-12


def test_kappa_is_ito_enhanced_diffusion(nagumo, nagumo_wave, nagumo_psi):
    b = StochasticWaveService.eval_b(nagumo_wave.profile, nagumo_psi, nagumo)
    kappa = StochasticWaveService.eval_kappa(nagumo_wave.profile, nagumo_psi, 0.2, nagumo)
    np.testing.assert_allclose(kappa, 1.0 + 0.04 * b ** 2 / 2.0)
    np.testing.assert_array_equal(StochasticWaveService.eval_kappa(nagumo_wave.profile, nagumo_psi, 0.0, nagumo), 1.0)


def test_a_vanishes_at_deterministic_wave(nagumo, nagumo_wave, nagumo_psi):
    a = StochasticWaveService.eval_a(nagumo_wave.profile, nagumo_wave.speed, nagumo_psi, 0.0, nagumo)
    assert abs(a) <= 1e-8


def test_sigma_zero_returns_deterministic_wave(nagumo, nagumo_grid, nagumo_wave, nagumo_psi):
    result = StochasticWaveService.solve_stochastic_wave(nagumo, nagumo_grid, nagumo_wave, nagumo_psi, 0.0)
    assert result.speed == nagumo_wave.speed
    assert result.profile is nagumo_wave.profile
    assert result.continuation_steps == 0


def test_stochastic_wave_solves_a_sigma_zero(nagumo, nagumo_grid, swave, nagumo_psi):
    assert swave.a_residual <= 1e-8
    residual = StochasticWaveService.stochastic_residual(nagumo, nagumo_grid, swave.profile.values, swave.speed,
                                                         swave.sigma, swave.b_value)
    assert np.abs(residual).max() <= 1e-7
    assert swave.continuation_steps >= 1


def test_speed_correction_is_second_order(nagumo_wave, swave, expansion):
    predicted = swave.sigma ** 2 * expansion.c02
    assert swave.speed - nagumo_wave.speed == pytest.approx(predicted, rel=0.1, abs=1e-9)


def test_negative_sigma_gives_same_branch(nagumo, nagumo_grid, nagumo_wave, nagumo_psi, swave):
    mirrored = StochasticWaveService.solve_stochastic_wave(nagumo, nagumo_grid, nagumo_wave, nagumo_psi, -0.05)
    assert mirrored.speed == pytest.approx(swave.speed, abs=1e-12)


def test_bordered_expansion_agrees_with_projection(expansion):
    assert expansion.c02_bordered == pytest.approx(expansion.c02, rel=1e-3)


def test_second_order_profile_is_orthogonal_to_psi(expansion, nagumo_psi):
    assert abs(MathService.inner(expansion.phi02, nagumo_psi)) <= 1e-10 * max(1.0, MathService.norm(expansion.phi02))


def test_branch_table(nagumo, nagumo_grid, nagumo_wave, nagumo_psi, expansion):
    rows = StochasticWaveService.stochastic_branch(nagumo, nagumo_grid, nagumo_wave, nagumo_psi,
                                                   [0.06, 0.02], expansion, continuation_steps=4)
    assert [row['sigma'] for row in rows] == [0.02, 0.06]
    for row in rows:
        assert row['prediction_c02_sigma2'] == pytest.approx(row['sigma'] ** 2 * expansion.c02)
        assert row['c_sigma_minus_c0'] == pytest.approx(row['prediction_c02_sigma2'], rel=0.15, abs=1e-9)
    deviations = [abs(r['c_sigma_minus_c0'] - r['prediction_c02_sigma2']) for r in rows]
    assert deviations[0] <= deviations[1]


@pytest.mark.slow
def test_fhn_speed_correction(fhn, fhn_grid, fhn_wave, fhn_psi):
    expansion = StochasticWaveService.speed_expansion(fhn, fhn_grid, fhn_wave, fhn_psi)
    assert expansion.c02 < 0
    assert expansion.c02 == pytest.approx(-3.66, rel=0.05)
    swave = StochasticWaveService.solve_stochastic_wave(fhn, fhn_grid, fhn_wave, fhn_psi, 0.05)
    assert swave.speed - fhn_wave.speed == pytest.approx(0.05 ** 2 * expansion.c02, rel=0.1)


def test_extended_newton_jacobian_matches_finite_differences(nagumo, nagumo_grid, nagumo_wave, nagumo_psi, swave):
    system = StochasticWaveSystem(nagumo, nagumo_grid, nagumo_wave.profile, nagumo_psi, swave.sigma)
    flat = swave.profile.flat + 1e-2 * np.sin(nagumo_grid.nodes)
    speed = swave.speed + 0.05
    b = system.b_of(flat) + 0.1
    jac = system.jacobian(flat, speed, b)
    rng = np.random.default_rng(17)
    h = 1e-6
    for _ in range(5):
        direction = rng.standard_normal(system.size)
        step = h * direction
        plus = system.residual(flat + step[:-2], speed + step[-2], b + step[-1])
        minus = system.residual(flat - step[:-2], speed - step[-2], b - step[-1])
        exact = jac @ direction
        assert np.linalg.norm((plus - minus) / (2 * h) - exact) <= 1e-5 * np.linalg.norm(exact)
        # the δb row alone, since it is tiny next to the PDE rows
        assert (plus[-1] - minus[-1]) / (2 * h) == pytest.approx(exact[-1], rel=1e-5, abs=1e-9)


def test_c02_is_resolved_under_refinement(nagumo, nagumo_grid, nagumo_fine_grid, nagumo_fine_wave, expansion):
    fine_psi = WaveService.adjoint_eigenfunction(nagumo, nagumo_fine_grid, nagumo_fine_wave).psi
    fine = StochasticWaveService.speed_expansion(nagumo, nagumo_fine_grid, nagumo_fine_wave, fine_psi)
    assert fine.c02 == pytest.approx(expansion.c02, rel=1e-2)


@pytest.mark.slow
def test_fhn_c02_is_resolved_under_refinement(fhn, fhn_grid, fhn_wave, fhn_psi):
    coarse = StochasticWaveService.speed_expansion(fhn, fhn_grid, fhn_wave, fhn_psi)
    grid = Grid(half_length=fhn_grid.half_length, points=2 * fhn_grid.points)
    wave = WaveService.compute_wave(fhn, grid)
    psi = WaveService.adjoint_eigenfunction(fhn, grid, wave).psi
    fine = StochasticWaveService.speed_expansion(fhn, grid, wave, psi)
    assert fine.c02 == pytest.approx(coarse.c02, rel=1e-2)
