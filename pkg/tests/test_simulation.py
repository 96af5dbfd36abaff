import pickle

import numpy as np
import pandas as pd
import pytest

from lib.data_preparation.field_io import FieldIO
from lib.errors import ParameterError
from lib.models.grid import Field, Grid
from lib.models.kinetics import Model
from lib.models.waves import StochasticWave
from lib.services.math_service import MathService
from lib.services.semigroup_service import DriftQuadrature, Propagator, SemigroupService
from lib.services.simulation_service import PathRecord, PathState, SimConfig, SimulationService
from lib.services.stochastic_wave_service import StochasticWaveService


@pytest.fixture(scope='module')
def resting_wave(nagumo, nagumo_grid, nagumo_wave, nagumo_psi):
    return StochasticWaveService.solve_stochastic_wave(nagumo, nagumo_grid, nagumo_wave, nagumo_psi, 0.0)


@pytest.fixture(scope='module')
def noisy_config(nagumo, nagumo_grid, nagumo_swave, nagumo_psi):
    return SimConfig(model=nagumo, grid=nagumo_grid, swave=nagumo_swave, psi=nagumo_psi, sigma=0.05,
                     dt=1e-2, t_end=1.0, record_stride=10)


def test_brownian_increments_are_seeded():
    first = SimulationService.brownian_increments(7, 1e-2, 1000)
    np.testing.assert_array_equal(first, SimulationService.brownian_increments(7, 1e-2, 1000))
    assert not np.array_equal(first, SimulationService.brownian_increments(8, 1e-2, 1000))
    assert SimulationService.brownian_increments(7, 1e-2, 10).shape == (10,)


def test_brownian_increment_variance():
    draws = SimulationService.brownian_increments(2024, 1e-3, 200_000)
    assert abs(draws.mean()) < 5 * np.sqrt(1e-3 / 200_000)
    assert draws.var() == pytest.approx(1e-3, rel=2e-2)


def test_phase_of_the_wave_itself_is_zero(nagumo_swave, nagumo_psi):
    assert SimulationService.init_gamma0(nagumo_swave.profile, nagumo_swave, nagumo_psi) == 0.0


def test_phase_of_shifted_wave_is_recovered(nagumo_grid, nagumo_swave, nagumo_psi):
    # a whole number of nodes, so shifting back reproduces the samples
    shift = 9 * nagumo_grid.spacing
    shifted = Field(nagumo_grid, MathService.shift_values(nagumo_grid, nagumo_swave.profile.values, shift))
    gamma = SimulationService.init_gamma0(shifted, nagumo_swave, nagumo_psi)
    assert gamma == pytest.approx(shift, abs=1e-6)


def test_phase_of_off_node_shift_is_recovered(nagumo_grid, nagumo_swave, nagumo_psi):
    shifted = Field(nagumo_grid, MathService.shift_values(nagumo_grid, nagumo_swave.profile.values, 1.3))
    gamma = SimulationService.init_gamma0(shifted, nagumo_swave, nagumo_psi)
    assert gamma == pytest.approx(1.3, abs=1e-3)


def test_neps_update():
    assert SimulationService.neps_update(0.0, 0.0, 1e-2, 0.1) == 0.0
    value = SimulationService.neps_update(2.0, 3.0, 1e-2, 0.1)
    assert value == pytest.approx(np.exp(-1e-3) * 2.0 + 1e-2 * np.exp(-5e-4) * 3.0, rel=1e-14)


def test_neps_of_constant_input_approaches_its_limit():
    integral = 0.0
    for _ in range(20000):
        integral = SimulationService.neps_update(integral, 1.0, 1e-2, 0.5)
    assert integral == pytest.approx(1.0 / 0.5, rel=1e-2)


def test_wave_is_a_fixed_point_without_noise(nagumo, nagumo_grid, resting_wave, nagumo_psi):
    cfg = SimConfig(model=nagumo, grid=nagumo_grid, swave=resting_wave, psi=nagumo_psi, sigma=0.0,
                    dt=1e-2, t_end=1.0, record_stride=25, snapshot_times=(0.0, 0.5))
    record = SimulationService.run_path(cfg, seed=3)
    np.testing.assert_allclose(record.times, [0.0, 0.25, 0.5, 0.75, 1.0], atol=1e-12)
    assert record.sup_neps <= 1e-10
    assert np.abs(record.gamma_minus_cst).max() <= 1e-6
    np.testing.assert_allclose(record.gamma_series, resting_wave.speed * record.times, atol=1e-6)
    assert set(record.snapshots) == {0.0, 0.5}
    assert set(record.snapshots[0.5]) == {'gamma_frame', 'c_sigma_frame', 'c0_frame'}
    assert record.snapshots[0.5]['gamma_frame'].shape == (1, nagumo_grid.points)
    assert record.cutoff_activations == 0


def test_paths_are_reproducible(noisy_config):
    first = SimulationService.run_path(noisy_config, seed=11)
    second = SimulationService.run_path(noisy_config, seed=11)
    other = SimulationService.run_path(noisy_config, seed=12)
    np.testing.assert_array_equal(first.gamma_series, second.gamma_series)
    np.testing.assert_array_equal(first.neps_series, second.neps_series)
    assert not np.array_equal(first.gamma_series, other.gamma_series)
    assert first.brownian_increments_seed == 11
    assert len(first.times) == 11
    assert np.all(np.isfinite(first.gamma_vr))
    assert first.sup_neps == pytest.approx(first.neps_series.max())


def test_given_increments_drive_the_path(noisy_config):
    increments = SimulationService.brownian_increments(5, noisy_config.dt, noisy_config.n_steps)
    explicit = SimulationService.run_path(noisy_config, seed=99, increments=increments)
    seeded = SimulationService.run_path(noisy_config, seed=5)
    np.testing.assert_array_equal(explicit.gamma_series, seeded.gamma_series)
    assert explicit.beta_series[-1] == pytest.approx(increments.sum())


def test_increment_count_is_checked(noisy_config):
    with pytest.raises(ParameterError):
        SimulationService.run_path(noisy_config, seed=1, increments=np.zeros(3))


def test_variance_reduced_phase(noisy_config):
    record = SimulationService.run_path(noisy_config, seed=4)
    b0 = StochasticWaveService.eval_b(noisy_config.swave.profile, noisy_config.psi, noisy_config.model)
    np.testing.assert_allclose(record.gamma_vr,
                               record.gamma_minus_cst - noisy_config.sigma * b0 * record.beta_series)


def test_config_validation(nagumo, nagumo_grid, nagumo_swave, nagumo_psi):
    base = dict(model=nagumo, grid=nagumo_grid, swave=nagumo_swave, psi=nagumo_psi)
    with pytest.raises(ParameterError):
        SimConfig(sigma=0.1, **base)
    with pytest.raises(ParameterError):
        SimConfig(sigma=0.05, gap_beta=0.004, eps=0.01, **base)
    with pytest.raises(ParameterError):
        SimConfig(sigma=0.05, dt=0.0, **base)
    with pytest.raises(ParameterError):
        SimConfig(sigma=0.05, recenter_fraction=0.5, **base)
    cfg = SimConfig(sigma=0.05, **base)
    assert cfg.c0 == nagumo_swave.speed
    assert cfg.n_steps == 10000


def test_config_pickles_without_factorization(noisy_config):
    assert noisy_config.solver is not None
    restored = pickle.loads(pickle.dumps(noisy_config))
    assert restored._solver is None
    assert restored.sigma == noisy_config.sigma
    np.testing.assert_array_equal(restored.psi_xi, noisy_config.psi_xi)


def test_window_roll_extends_edges():
    values = np.arange(6.0)[None, :]
    np.testing.assert_array_equal(SimulationService._roll_window(values, 2), [[2, 3, 4, 5, 5, 5]])
    np.testing.assert_array_equal(SimulationService._roll_window(values, -2), [[0, 0, 0, 1, 2, 3]])
    assert SimulationService._roll_window(values, 0) is values


def test_recentering_keeps_phase_bounded(nagumo, nagumo_grid, nagumo_swave, nagumo_psi):
    cfg = SimConfig(model=nagumo, grid=nagumo_grid, swave=nagumo_swave, psi=nagumo_psi, sigma=0.05, dt=1e-2)
    state = PathState(u=nagumo_swave.profile, gamma=0.26 * nagumo_grid.half_length)
    after = SimulationService.step(state, cfg, 0.0)
    assert abs(after.gamma) <= 0.25 * nagumo_grid.half_length
    assert after.frame_shift + after.gamma == pytest.approx(state.gamma, abs=0.1)


def test_frame_slopes():
    t = np.linspace(0.0, 4.0, 9)
    zeros = np.zeros_like(t)
    record = PathRecord(times=t, gamma_series=zeros, gamma_minus_cst=0.25 * t, gamma_vr=zeros, neps_series=zeros,
                        v_l2_series=zeros, phase_mismatch=2.0 * t + 1.0, peak_c0_frame=-0.5 * t,
                        beta_series=zeros, sup_neps=0.0, brownian_increments_seed=0)
    slopes = SimulationService.frame_slopes(record)
    assert slopes['phase_mismatch_slope'] == pytest.approx(2.0)
    assert slopes['peak_c0_slope'] == pytest.approx(-0.5)
    assert slopes['peak_c0_vr_slope'] == pytest.approx(-0.75)
    assert np.isnan(SimulationService.frame_slopes(record, t_min=10.0)['phase_mismatch_slope'])


def test_snapshots_and_series_are_written(tmp_path, nagumo, nagumo_grid, resting_wave, nagumo_psi):
    cfg = SimConfig(model=nagumo, grid=nagumo_grid, swave=resting_wave, psi=nagumo_psi, sigma=0.0,
                    dt=1e-2, t_end=0.2, record_stride=10, snapshot_times=(0.2,))
    record = SimulationService.run_path(cfg, seed=1)
    fp = '0123456789abcdef'
    written = FieldIO.write_snapshots(tmp_path, record, nagumo_grid, 'sim_snapshot', f'_{fp}')
    assert [p.name for p in written] == [f'sim_snapshot-t0.2_{fp}.csv']
    frame = pd.read_csv(written[0])
    assert list(frame.columns) == ['xi', 'gamma_frame_c1', 'c_sigma_frame_c1', 'c0_frame_c1']
    series = pd.read_csv(FieldIO.write_path_record(tmp_path / 'path.csv', record))
    assert len(series) == 3
    assert 'gamma_vr' in series.columns


def test_peak_position_refines_between_nodes():
    grid = Grid(half_length=8.0, points=17)
    parabola = 1.0 - (grid.nodes - 0.3) ** 2
    assert SimulationService.peak_position(grid, parabola) == pytest.approx(0.3, abs=1e-12)
    # monotone profiles peak at the boundary node
    assert SimulationService.peak_position(grid, -grid.nodes) == grid.nodes[0]


def test_wave_travels_at_its_speed_over_long_times(nagumo, nagumo_grid, resting_wave, nagumo_psi):
    cfg = SimConfig(model=nagumo, grid=nagumo_grid, swave=resting_wave, psi=nagumo_psi, sigma=0.0,
                    dt=0.1, t_end=100.0, record_stride=100)
    record = SimulationService.run_path(cfg, seed=0)
    assert record.times[-1] == pytest.approx(100.0)
    np.testing.assert_allclose(record.gamma_series, resting_wave.speed * record.times, atol=1e-3)
    assert record.v_l2_series.max() <= 1e-5


def linear_multiplicative_model():
    """du = -u dt + u dβ on a spatially constant state"""
    def constant_jac(value):
        return lambda u: np.full((1, 1, u.shape[-1]), value)

    return Model(name='linear', n=1, rho=np.array([1.0]), reaction=lambda u: -u, reaction_jac=constant_jac(-1.0),
                 reaction_hess_dir=lambda u, v: np.zeros_like(u), noise=lambda u: u, noise_jac=constant_jac(1.0),
                 u_minus=np.zeros(1), u_plus=np.zeros(1))


def test_strong_order_on_linear_multiplicative_noise():
    grid = Grid(half_length=8.0, points=16)
    sigma, paths, fine_steps = 0.5, 128, 128
    model = linear_multiplicative_model()
    swave = StochasticWave(profile=Field(grid, np.ones((1, grid.points))), speed=0.0, sigma=sigma, a_residual=0.0)
    psi = Field(grid, np.exp(-grid.nodes ** 2)[None, :])
    rng = np.random.default_rng(2024)
    fine = rng.standard_normal((paths, fine_steps)) * np.sqrt(1.0 / fine_steps)
    exact = np.exp(-(1.0 + 0.5 * sigma ** 2) + sigma * fine.sum(axis=1))

    steps = (16, 32, 64, 128)
    errors = []
    for n_steps in steps:
        cfg = SimConfig(model=model, grid=grid, swave=swave, psi=psi, sigma=sigma, dt=1.0 / n_steps, t_end=1.0)
        finals = []
        for increments in fine.reshape(paths, n_steps, -1).sum(axis=2):
            state = PathState(u=swave.profile, gamma=0.0)
            for dW in increments:
                state = SimulationService.step(state, cfg, dW)
            # the state stays spatially constant
            assert np.ptp(state.u.values) <= 1e-12
            finals.append(state.u.values[0, 0])
        errors.append(np.mean(np.abs(np.array(finals) - exact)))

    order = -np.polyfit(np.log2(steps), np.log2(errors), 1)[0]
    assert 0.4 <= order <= 1.1


def test_phase_converges_under_step_refinement(nagumo, nagumo_grid, nagumo_swave, nagumo_psi):
    t_end, finest = 2.0, 400
    refinements = (8, 4, 2, 1)
    finals = np.zeros((6, len(refinements)))
    for seed in range(6):
        fine = SimulationService.brownian_increments(seed, t_end / finest, finest)
        for col, factor in enumerate(refinements):
            n_steps = finest // factor
            cfg = SimConfig(model=nagumo, grid=nagumo_grid, swave=nagumo_swave, psi=nagumo_psi, sigma=0.05,
                            dt=t_end / n_steps, t_end=t_end, record_stride=n_steps)
            record = SimulationService.run_path(cfg, seed, increments=fine.reshape(n_steps, factor).sum(axis=1))
            finals[seed, col] = record.gamma_series[-1]
    differences = np.abs(np.diff(finals, axis=1)).mean(axis=0)
    assert np.all(np.isfinite(differences))
    assert differences[-1] < differences[0]


@pytest.mark.slow
def test_moving_frames_of_the_pulse(fhn, fhn_grid, fhn_wave, fhn_psi, fhn_spectrum):
    sigma = 0.03
    swave = StochasticWaveService.solve_stochastic_wave(fhn, fhn_grid, fhn_wave, fhn_psi, sigma)
    prop = Propagator.from_wave(fhn, fhn_grid, fhn_wave, dt=1e-2)
    leading = SemigroupService.orbital_drift_leading(fhn, fhn_grid, fhn_wave, fhn_psi, prop,
                                                     fhn_spectrum.gap_beta, DriftQuadrature(dt=0.1))
    expected = swave.speed + sigma ** 2 * leading.value - fhn_wave.speed
    assert expected < 0

    cfg = SimConfig(model=fhn, grid=fhn_grid, swave=swave, psi=fhn_psi, sigma=sigma, dt=1e-2, t_end=100.0,
                    c0=fhn_wave.speed)
    slopes = [SimulationService.frame_slopes(SimulationService.run_path(cfg, seed), t_min=10.0)
              for seed in range(4)]
    assert max(abs(s['phase_mismatch_slope']) for s in slopes) <= 1e-3
    assert np.mean([s['peak_c0_vr_slope'] for s in slopes]) == pytest.approx(expected, rel=0.2)
