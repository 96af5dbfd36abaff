import numpy as np
import pytest

from lib.models.grid import Grid
from lib.models.kinetics import Model, fhn_model, nagumo_model
from lib.services.semigroup_service import Propagator
from lib.services.stochastic_wave_service import StochasticWaveService
from lib.services.wave_service import WaveService

NAGUMO_A = 0.1


class _Linear:
    """Zero reaction and noise: turns the operators into plain diffusion"""

    def __init__(self, n):
        self.n = n

    def reaction(self, u):
        return np.zeros_like(u)

    def reaction_jac(self, u):
        return np.zeros((self.n, self.n, u.shape[-1]))

    def reaction_hess_dir(self, u, v):
        return np.zeros_like(u)

    def noise(self, u):
        return np.zeros_like(u)

    def noise_jac(self, u):
        return np.zeros((self.n, self.n, u.shape[-1]))


def heat_model(n: int = 1) -> Model:
    k = _Linear(n)
    return Model(name='heat', n=n, rho=np.ones(n), reaction=k.reaction, reaction_jac=k.reaction_jac,
                 reaction_hess_dir=k.reaction_hess_dir, noise=k.noise, noise_jac=k.noise_jac,
                 u_minus=np.zeros(n), u_plus=np.zeros(n))


@pytest.fixture(scope='session')
def nagumo():
    return nagumo_model(a=NAGUMO_A)


@pytest.fixture(scope='session')
def nagumo_grid():
    return Grid(half_length=40.0, points=1024)


@pytest.fixture(scope='session')
def nagumo_wave(nagumo, nagumo_grid):
    return WaveService.compute_wave(nagumo, nagumo_grid)


@pytest.fixture(scope='session')
def nagumo_adjoint(nagumo, nagumo_grid, nagumo_wave):
    return WaveService.adjoint_eigenfunction(nagumo, nagumo_grid, nagumo_wave)


@pytest.fixture(scope='session')
def nagumo_psi(nagumo_adjoint):
    return nagumo_adjoint.psi


@pytest.fixture(scope='session')
def nagumo_spectrum(nagumo, nagumo_grid, nagumo_wave):
    return WaveService.spectrum(nagumo, nagumo_grid, nagumo_wave)


@pytest.fixture(scope='session')
def nagumo_propagator(nagumo, nagumo_grid, nagumo_wave):
    return Propagator.from_wave(nagumo, nagumo_grid, nagumo_wave, dt=1e-2)


@pytest.fixture(scope='session')
def fhn():
    return fhn_model()


@pytest.fixture(scope='session')
def fhn_grid():
    # n·N = 4096 keeps the spectrum on the dense path
    return Grid(half_length=60.0, points=2048)


@pytest.fixture(scope='session')
def fhn_wave(fhn, fhn_grid):
    return WaveService.compute_wave(fhn, fhn_grid)


@pytest.fixture(scope='session')
def fhn_psi(fhn, fhn_grid, fhn_wave):
    return WaveService.adjoint_eigenfunction(fhn, fhn_grid, fhn_wave).psi


@pytest.fixture(scope='session')
def fhn_spectrum(fhn, fhn_grid, fhn_wave):
    return WaveService.spectrum(fhn, fhn_grid, fhn_wave)


@pytest.fixture(scope='session')
def nagumo_swave(nagumo, nagumo_grid, nagumo_wave, nagumo_psi):
    return StochasticWaveService.solve_stochastic_wave(nagumo, nagumo_grid, nagumo_wave, nagumo_psi, 0.05)


@pytest.fixture(scope='session')
def nagumo_fine_grid():
    return Grid(half_length=40.0, points=2048)


@pytest.fixture(scope='session')
def nagumo_fine_wave(nagumo, nagumo_fine_grid):
    return WaveService.compute_wave(nagumo, nagumo_fine_grid)
