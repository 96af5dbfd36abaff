#!/usr/bin/env python3
"""
Semigroup Service
# S(t) = e^{t L_tw} by Crank-Nicolson: (I - dt/2 L) v_{k+1} = (I + dt/2 L) v_k
# Pv = ⟨v, ψ_tw⟩Φ₀',  Qv = v - Pv,  P_ξ v = -⟨v, ∂_ξψ_tw⟩Φ₀'
# c^od_{σ;2} = ½ ∫₀^∞ D₁²a_σ(Φ_σ, c_σ, ψ_tw)[w(s), w(s)] ds,  w(s) = S(s)(g(Φ_σ) + b Φ_σ')
# c^od_{0;2} = -½ ∫₀^∞ ⟨D²f(Φ₀)[I(s), I(s)], ψ_tw⟩ ds,  I(s) = S(s)g(Φ₀) + b̃ S(s)Φ₀'
# c^(2)_{σ;lim} = c_σ + σ² c^od_{σ;2}
"""

import logging
import math
import threading
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.integrate import trapezoid
from scipy.sparse.linalg import splu

from lib.errors import DecayError, ParameterError
from lib.models.grid import Field, Grid
from lib.models.kinetics import Cutoffs, Model
from lib.models.waves import (DriftCoefficients, DriftIntegral, LimitingSpeed, SpeedExpansion,
                              StochasticWave, WaveSolution)
from lib.services.math_service import MathService
from lib.services.stochastic_wave_service import DEFAULT_CUTOFFS, StochasticWaveService
from lib.services.wave_service import WaveService

logger = logging.getLogger(__name__)


class Propagator:
    """
    # Crank-Nicolson propagator for v_t = L v (and v_t = L* v)
    # One LU factorization per (effective step, direction), cached
    """

    scheme = 'crank_nicolson'

    def __init__(self, operator: sp.spmatrix, grid: Grid, n: int, dt: float = 1e-2,
                 adjoint: Optional[sp.spmatrix] = None):
        if not dt > 0:
            raise ParameterError('dt', dt, 'dt > 0')
        self.operator = sp.csc_matrix(operator)
        self.grid = grid
        self.n = n
        self.dt = float(dt)
        weights = np.tile(grid.weights, n)
        if adjoint is None:
            adjoint = sp.diags(1.0 / weights) @ self.operator.T @ sp.diags(weights)
        self.adjoint = sp.csc_matrix(adjoint)
        self._factors: Dict[Tuple[float, bool], Tuple[object, sp.spmatrix]] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_wave(cls, model: Model, grid: Grid, wave: WaveSolution, dt: float = 1e-2) -> 'Propagator':
        operator = WaveService.assemble_linearization(model, grid, wave)
        return cls(operator, grid, model.n, dt=dt)

    def _factor(self, dt: float, adjoint: bool):
        key = (dt, adjoint)
        with self._lock:
            if key not in self._factors:
                op = self.adjoint if adjoint else self.operator
                identity = sp.identity(op.shape[0], format='csc')
                self._factors[key] = (splu(sp.csc_matrix(identity - 0.5 * dt * op)),
                                      (identity + 0.5 * dt * op).tocsr())
            return self._factors[key]

    def steps_for(self, t: float) -> Tuple[int, float]:
        steps = max(1, math.ceil(t / self.dt - 1e-9))
        return steps, t / steps

    def propagate(self, flat: np.ndarray, t: float, adjoint: bool = False) -> np.ndarray:
        if t < 0:
            raise ParameterError('t', t, 't >= 0')
        if t == 0:
            return np.array(flat, dtype=float, copy=True)
        steps, dt = self.steps_for(t)
        lu, explicit = self._factor(dt, adjoint)
        v = np.array(flat, dtype=float, copy=True)
        for _ in range(steps):
            v = lu.solve(explicit @ v)
        return v

    def __getstate__(self):
        state = self.__dict__.copy()
        state['_factors'] = {}
        state.pop('_lock', None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()


@dataclass(frozen=True)
class DriftQuadrature:
    """Time mesh and stopping rule for the drift integrals"""
    dt: float = 0.05
    tol: float = 1e-6
    s_max_cap: float = 2000.0
    decay_threshold: float = 1e-3
    min_time: float = 1.0
    # D₁²a_σ step h = fd_scale·‖Φ‖/(1 + ‖w‖)
    fd_scale: float = 1e-4


class SemigroupService:
    """
    # Service for S(t), the spectral projections and the orbital drift
    """

    @staticmethod
    def apply_S(prop: Propagator, v: Field, t: float) -> Field:
        return Field.from_flat(v.grid, prop.propagate(v.flat, t), v.n)

    @staticmethod
    def apply_S_adjoint(prop: Propagator, v: Field, t: float) -> Field:
        return Field.from_flat(v.grid, prop.propagate(v.flat, t, adjoint=True), v.n)

    @staticmethod
    def translation_mode(wave: WaveSolution) -> Field:
        return MathService.diff1(wave.profile)

    @staticmethod
    def project_P(v: Field, psi: Field, wave: WaveSolution) -> Field:
        """Pv = ⟨v, ψ_tw⟩Φ₀'"""
        return SemigroupService.translation_mode(wave) * MathService.inner(v, psi)

    @staticmethod
    def project_Q(v: Field, psi: Field, wave: WaveSolution) -> Field:
        return v - SemigroupService.project_P(v, psi, wave)

    @staticmethod
    def project_Pxi(v: Field, psi: Field, wave: WaveSolution) -> Field:
        """P_ξ v = -⟨v, ∂_ξψ_tw⟩Φ₀'"""
        return SemigroupService.translation_mode(wave) * (-MathService.inner(v, MathService.diff1(psi)))

    # ------------------------------------------------------------------ drift

    @staticmethod
    def second_variation(fn: Callable[[np.ndarray], float], base: np.ndarray, direction: np.ndarray,
                         h: float) -> float:
        """
        # D²F[w,w] ≈ (4 D_{h/2} - D_h) / 3,  D_h = (F(u+hw) - 2F(u) + F(u-hw)) / h²
        """
        centre = fn(base)

        def central(step):
            return (fn(base + step * direction) - 2.0 * centre + fn(base - step * direction)) / step ** 2

        return (4.0 * central(0.5 * h) - central(h)) / 3.0

    @staticmethod
    def integrate_drift(prop: Propagator, w0: np.ndarray, integrand: Callable[[np.ndarray], float],
                        gap_beta: float, quad: DriftQuadrature, scale: float = 1.0,
                        envelope: Optional[Callable[[np.ndarray], float]] = None) -> DriftIntegral:
        """
        # Trapezoid ∫₀^{s_end} J(s) ds with w(s) = S(s)w0 stepped on the quadrature mesh
        # Stop: |J| < tol·max|J| and ‖w‖² < tol·max‖w‖², or s_max = min(12/β, cap)
        """
        if not gap_beta > 0:
            raise DecayError("drift integral needs a positive spectral gap", gap_beta=gap_beta)
        s_max = min(12.0 / gap_beta, quad.s_max_cap)
        if envelope is None:
            weights = np.tile(prop.grid.weights, prop.n)

            def envelope(vec):
                return float(vec @ (weights * vec))

        w = np.array(w0, dtype=float, copy=True)
        times, values = [0.0], [integrand(w)]
        norms = [envelope(w)]
        if norms[0] == 0.0:
            return DriftIntegral(value=0.0, times=np.array(times), integrand=np.array(values),
                                 truncation_time=0.0, error_estimate=0.0)

        s = 0.0
        peak, norm_peak = abs(values[0]), norms[0]
        while True:
            w = prop.propagate(w, quad.dt)
            s += quad.dt
            times.append(s)
            values.append(integrand(w))
            norms.append(envelope(w))
            peak = max(peak, abs(values[-1]))
            norm_peak = max(norm_peak, norms[-1])
            if (s >= quad.min_time and abs(values[-1]) <= quad.tol * peak
                    and norms[-1] < quad.tol * norm_peak):
                break
            if s >= s_max:
                if abs(values[-1]) > quad.decay_threshold * peak:
                    raise DecayError(f"drift integrand has not decayed by s_max={s_max:.4g}",
                                     gap_beta=gap_beta, ratio=abs(values[-1]) / peak)
                logger.warning(f"⚠️ Drift quadrature truncated at s_max={s_max:.4g}")
                break

        times_arr, values_arr = np.array(times), np.array(values)
        value = scale * float(trapezoid(values_arr, times_arr))
        error = scale * SemigroupService._tail_estimate(times_arr, values_arr)
        return DriftIntegral(value=value, times=times_arr, integrand=scale * values_arr,
                             truncation_time=float(s), error_estimate=abs(error))

    @staticmethod
    def _tail_estimate(times: np.ndarray, values: np.ndarray) -> float:
        """∫_{s_end}^∞ of the exponential fitted to the last quarter of |J|"""
        tail = slice(max(0, 3 * len(times) // 4), len(times))
        mags = np.abs(values[tail])
        mask = mags > 0
        if mask.sum() < 3:
            return 0.0
        slope = np.polyfit(times[tail][mask], np.log(mags[mask]), 1)[0]
        if slope >= 0:
            return float(abs(values[-1]) * (times[-1] - times[0]))
        return float(abs(values[-1]) / -slope)

    @staticmethod
    def orbital_drift_general(model: Model, grid: Grid, swave: StochasticWave, psi: Field,
                              prop: Propagator, gap_beta: float, quad: Optional[DriftQuadrature] = None,
                              cutoffs: Cutoffs = DEFAULT_CUTOFFS) -> DriftIntegral:
        quad = quad or DriftQuadrature()
        n, N = model.n, grid.points
        sigma = swave.sigma
        phi = swave.profile.values
        b = StochasticWaveService.eval_b(swave.profile, psi, model, cutoffs)
        w0 = (model.noise(phi) + b * MathService.diff1_values(grid, phi)).ravel()
        psi_xx = MathService.diff2_values(grid, psi.values)
        phi_flat = phi.ravel()
        phi_norm = float(np.sqrt(phi_flat @ (np.tile(grid.weights, n) * phi_flat)))
        weights = np.tile(grid.weights, n)

        def a_of(flat: np.ndarray) -> float:
            return StochasticWaveService.a_values(grid, model, cutoffs, flat.reshape(n, N), swave.speed,
                                                  psi.values, psi_xx, sigma)

        def integrand(w: np.ndarray) -> float:
            w_norm = float(np.sqrt(w @ (weights * w)))
            if w_norm == 0.0:
                return 0.0
            h = quad.fd_scale * phi_norm / (1.0 + w_norm)
            return SemigroupService.second_variation(a_of, phi_flat, w, h)

        result = SemigroupService.integrate_drift(prop, w0, integrand, gap_beta, quad, scale=0.5)
        logger.info(f"📉 c^od_σ;2 = {result.value:.6g} (σ={sigma:.4g}, s_end={result.truncation_time:.4g}, "
                    f"tail ≈ {result.error_estimate:.1e})")
        return result

    @staticmethod
    def leading_parts(model: Model, grid: Grid, wave: WaveSolution, psi: Field,
                      cutoffs: Cutoffs = DEFAULT_CUTOFFS) -> Tuple[np.ndarray, np.ndarray, float]:
        """(g(Φ₀), Φ₀', b̃) for the I(s) bookkeeping; noise must live in the first component"""
        g = model.noise(wave.profile.values)
        if model.n > 1 and np.any(g[1:] != 0.0):
            raise ParameterError('model.noise', model.name, 'noise acting on the first component only')
        btilde = StochasticWaveService.eval_btilde(wave.profile, psi, model, cutoffs)
        return g, MathService.diff1_values(grid, wave.profile.values), btilde

    @staticmethod
    def orbital_drift_leading(model: Model, grid: Grid, wave: WaveSolution, psi: Field,
                              prop: Propagator, gap_beta: float, quad: Optional[DriftQuadrature] = None,
                              cutoffs: Cutoffs = DEFAULT_CUTOFFS) -> DriftIntegral:
        """
        # I(s) = [S(s)(g(Φ₀),0)ᵀ]₁ + b̃[S(s)Φ₀']₁, the two evolutions kept apart
        """
        quad = quad or DriftQuadrature()
        n, N = model.n, grid.points
        g, phi_prime, btilde = SemigroupService.leading_parts(model, grid, wave, psi, cutoffs)
        phi = wave.profile.values

        def integrand(pair: np.ndarray) -> float:
            noise_part, mode_part = pair[:n * N], pair[n * N:]
            current = (noise_part + btilde * mode_part).reshape(n, N)
            return MathService.inner_values(grid, model.reaction_hess_dir(phi, current), psi.values)

        weights = np.tile(grid.weights, n)

        def envelope(pair: np.ndarray) -> float:
            current = pair[:n * N] + btilde * pair[n * N:]
            return float(current @ (weights * current))

        w0 = np.concatenate([g.ravel(), phi_prime.ravel()])
        result = SemigroupService.integrate_drift(_PairedPropagator(prop), w0, integrand, gap_beta, quad,
                                                  scale=-0.5, envelope=envelope)
        logger.info(f"📉 c^od_0;2 = {result.value:.6g} (s_end={result.truncation_time:.4g}, "
                    f"tail ≈ {result.error_estimate:.1e})")
        return result

    @staticmethod
    def limiting_speed(swave: StochasticWave, c_od_2: float, c0: Optional[float] = None,
                       expansion: Optional[SpeedExpansion] = None,
                       c_od_leading: Optional[float] = None) -> LimitingSpeed:
        """
        # c^(2)_{σ;lim} = c_σ + σ²c^od_{σ;2};  leading order σ²(c_{0;2} + c^od_{0;2})
        """
        sigma_sq = swave.sigma ** 2
        c_lim = swave.speed + sigma_sq * c_od_2
        if c0 is None:
            c0 = expansion.c0 if expansion is not None else swave.speed
        leading = None
        if expansion is not None and c_od_leading is not None:
            leading = sigma_sq * (expansion.c02 + c_od_leading)
        return LimitingSpeed(c_lim_2=float(c_lim), excess_over_c0=float(c_lim - c0),
                             leading_prediction=leading)

    @staticmethod
    def predict_drift(model: Model, grid: Grid, wave: WaveSolution, swave: StochasticWave, psi: Field,
                      prop: Propagator, gap_beta: float, quad: Optional[DriftQuadrature] = None,
                      cutoffs: Cutoffs = DEFAULT_CUTOFFS, leading: Optional[DriftIntegral] = None) -> DriftCoefficients:
        """
        # General and leading drift at one quadrature; a precomputed leading integral is reused
        """
        general = SemigroupService.orbital_drift_general(model, grid, swave, psi, prop, gap_beta, quad, cutoffs)
        if leading is None:
            leading = SemigroupService.orbital_drift_leading(model, grid, wave, psi, prop, gap_beta, quad, cutoffs)
        limit = SemigroupService.limiting_speed(swave, general.value, c0=wave.speed)
        return DriftCoefficients(c_od_2=general.value, c_od_leading=leading.value, c_lim_2=limit.c_lim_2,
                                 truncation_time=max(general.truncation_time, leading.truncation_time),
                                 quadrature_error_estimate=general.error_estimate)


class _PairedPropagator:
    """Advances two stacked fields with one Propagator"""

    def __init__(self, prop: Propagator):
        self.prop = prop
        self.grid = prop.grid
        self.n = 2 * prop.n

    def propagate(self, flat: np.ndarray, t: float, adjoint: bool = False) -> np.ndarray:
        half = flat.size // 2
        return np.concatenate([self.prop.propagate(flat[:half], t, adjoint),
                               self.prop.propagate(flat[half:], t, adjoint)])
