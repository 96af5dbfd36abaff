#!/usr/bin/env python3
"""
Stochastic Wave Service
# b(u,ψ) = -χ_high(⟨g(u), ψ⟩) / χ_low(⟨∂_ξu, ψ⟩)
# κ_{σ;i}(u,ψ) = 1 + σ² b(u,ψ)² / 2ρ_i
# a_σ(u,c,ψ) = -χ_low(⟨∂_ξu, ψ⟩)⁻¹ [⟨κ_σ u, ρ∂_ξξψ⟩ + ⟨f(u) + c∂_ξu + σ²b ∂_ξ[g(u)], ψ⟩]
# Stochastic wave: (ρ + σ²b²/2)Φ'' + cΦ' + f(Φ) + σ²b (g(Φ))' = 0
"""

import logging
from typing import Iterable, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from lib.errors import ConvergenceError, NumericalError
from lib.models.grid import Field, Grid
from lib.models.kinetics import Cutoffs, Model, make_cutoffs
from lib.models.waves import SpeedExpansion, StochasticWave, WaveSolution
from lib.services.math_service import MathService
from lib.services.wave_service import MIN_STEP, WaveService

logger = logging.getLogger(__name__)

DEFAULT_CUTOFFS = make_cutoffs()


class StochasticWaveService:
    """
    # Service for the noise-corrected wave (Φ_σ, c_σ) and its σ² expansion
    """

    # ------------------------------------------------------------------ functionals

    @staticmethod
    def pairings(grid: Grid, model: Model, u: np.ndarray, psi: np.ndarray) -> Tuple[float, float]:
        """(⟨∂_ξu, ψ⟩, ⟨g(u), ψ⟩)"""
        du = MathService.diff1_values(grid, u)
        return (MathService.inner_values(grid, du, psi),
                MathService.inner_values(grid, model.noise(u), psi))

    @staticmethod
    def eval_b(u: Field, psi: Field, model: Model, cutoffs: Cutoffs = DEFAULT_CUTOFFS) -> float:
        theta_low, theta_high = StochasticWaveService.pairings(u.grid, model, u.values, psi.values)
        return -float(cutoffs.chi_high(theta_high)) / float(cutoffs.chi_low(theta_low))

    @staticmethod
    def eval_kappa(u: Field, psi: Field, sigma: float, model: Model,
                   cutoffs: Cutoffs = DEFAULT_CUTOFFS) -> np.ndarray:
        b = StochasticWaveService.eval_b(u, psi, model, cutoffs)
        return 1.0 + sigma ** 2 * b ** 2 / (2.0 * model.rho)

    @staticmethod
    def eval_a(u: Field, c: float, psi: Field, sigma: float, model: Model,
               cutoffs: Cutoffs = DEFAULT_CUTOFFS, psi_xx: Optional[np.ndarray] = None) -> float:
        """
        # ∂_ξξ falls on ψ in the diffusive pairing; u needs only one derivative
        """
        grid = u.grid
        if psi_xx is None:
            psi_xx = MathService.diff2_values(grid, psi.values)
        return StochasticWaveService.a_values(grid, model, cutoffs, u.values, c, psi.values, psi_xx, sigma)

    @staticmethod
    def a_values(grid: Grid, model: Model, cutoffs: Cutoffs, u: np.ndarray, c: float,
                 psi: np.ndarray, psi_xx: np.ndarray, sigma: float) -> float:
        du = MathService.diff1_values(grid, u)
        g = model.noise(u)
        theta_low = MathService.inner_values(grid, du, psi)
        theta_high = MathService.inner_values(grid, g, psi)
        chi = float(cutoffs.chi_low(theta_low))
        b = -float(cutoffs.chi_high(theta_high)) / chi
        kappa_rho = model.rho + 0.5 * sigma ** 2 * b ** 2
        diffusive = MathService.inner_values(grid, kappa_rho[:, None] * u, psi_xx)
        dg = MathService.diff1_values(grid, g)
        forcing = MathService.inner_values(grid, model.reaction(u) + c * du + sigma ** 2 * b * dg, psi)
        return -(diffusive + forcing) / chi

    @staticmethod
    def eval_btilde(phi: Field, psi: Field, model: Model, cutoffs: Cutoffs = DEFAULT_CUTOFFS) -> float:
        """
        # b̃(Φ) = -⟨g(Φ), ψ⟩ / χ_low(⟨∂_ξΦ, ψ⟩)  (no saturation of the numerator)
        """
        theta_low, theta_high = StochasticWaveService.pairings(phi.grid, model, phi.values, psi.values)
        return -theta_high / float(cutoffs.chi_low(theta_low))

    # ------------------------------------------------------------------ Φ_σ, c_σ

    @staticmethod
    def stochastic_residual(model: Model, grid: Grid, values: np.ndarray, speed: float,
                            sigma: float, b: float) -> np.ndarray:
        g = model.noise(values)
        return ((model.rho[:, None] + 0.5 * sigma ** 2 * b ** 2) * MathService.diff2_values(grid, values)
                + speed * MathService.diff1_values(grid, values)
                + model.reaction(values)
                + sigma ** 2 * b * MathService.diff1_values(grid, g))

    @staticmethod
    def solve_stochastic_wave(model: Model, grid: Grid, wave: WaveSolution, psi: Field, sigma: float,
                              cutoffs: Cutoffs = DEFAULT_CUTOFFS, continuation_steps: int = 8,
                              tol: float = 1e-10, max_iters: int = 50,
                              max_halvings: int = 6) -> StochasticWave:
        """
        # Natural continuation σ_k = σ·k/m from (Φ₀, c₀), halving the σ step on Newton failure
        # Only σ² enters, so ±σ give the same branch point
        """
        sigma = float(sigma)
        sigma_sq = sigma ** 2
        if sigma_sq == 0.0:
            a_res = abs(StochasticWaveService.eval_a(wave.profile, wave.speed, psi, 0.0, model, cutoffs))
            b = StochasticWaveService.eval_b(wave.profile, psi, model, cutoffs)
            return StochasticWave(profile=wave.profile, speed=wave.speed, sigma=sigma, a_residual=a_res,
                                  residual_norm=wave.residual_norm, b_value=b, continuation_steps=0)

        level = abs(sigma)
        profile, speed = wave.profile, wave.speed
        done, step = 0.0, level / max(1, continuation_steps)
        min_step = step / 2 ** max_halvings
        steps_taken = 0
        res = np.inf
        logger.info(f"🚀 Stochastic wave at σ={level:.4g} ({continuation_steps} continuation steps)")
        while done < level * (1.0 - 1e-12):
            target = min(level, done + step)
            try:
                profile, speed, res = StochasticWaveService._newton(
                    model, grid, wave.profile, profile, speed, psi, target, cutoffs, tol, max_iters)
            except (ConvergenceError, NumericalError) as exc:
                step *= 0.5
                if step < min_step:
                    raise ConvergenceError(f"stochastic wave Newton failed at σ={target:.6g}",
                                           residual=getattr(exc, 'residual', float('nan')),
                                           sigma=target) from exc
                logger.warning(f"⚠️ Newton failed at σ={target:.4g}; halving σ step to {step:.3g}")
                continue
            done = target
            steps_taken += 1

        a_res = abs(StochasticWaveService.eval_a(profile, speed, psi, sigma, model, cutoffs))
        b = StochasticWaveService.eval_b(profile, psi, model, cutoffs)
        logger.info(f"✅ c_σ={speed:.10f} (c_σ - c₀={speed - wave.speed:.4e}), |a_σ|={a_res:.1e}")
        return StochasticWave(profile=profile, speed=speed, sigma=sigma, a_residual=a_res,
                              residual_norm=res, b_value=b, continuation_steps=steps_taken)

    @staticmethod
    def _newton(model: Model, grid: Grid, phi0: Field, profile: Field, speed: float, psi: Field,
                sigma: float, cutoffs: Cutoffs, tol: float, max_iters: int) -> Tuple[Field, float, float]:
        system = StochasticWaveSystem(model, grid, phi0, psi, sigma, cutoffs)
        phi = profile.flat.copy()
        b = system.b_of(phi)
        F = system.residual(phi, speed, b)
        res = float(np.max(np.abs(F)))
        iters = 0
        while res > tol:
            if iters >= max_iters:
                raise ConvergenceError(f"stochastic wave Newton did not converge in {max_iters} iterations",
                                       residual=res, sigma=sigma)
            delta = WaveService._bordered_solve(system.jacobian(phi, speed, b), -F)

            # δb is discarded: b is re-tied to the trial profile
            merit = F @ F
            step = 1.0
            while step >= MIN_STEP:
                trial = phi + step * delta[:-2]
                trial_c = speed + step * delta[-2]
                trial_b = system.b_of(trial)
                trial_F = system.residual(trial, trial_c, trial_b)
                if np.all(np.isfinite(trial_F)) and trial_F @ trial_F < (1.0 - 1e-4 * step) * merit:
                    break
                step *= 0.5
            else:
                raise ConvergenceError("stochastic wave line search stalled", residual=res, sigma=sigma)
            phi, speed, F, b = trial, trial_c, trial_F, trial_b
            res = float(np.max(np.abs(F)))
            iters += 1
        return Field.from_flat(grid, phi, model.n), float(speed), res

    # ------------------------------------------------------------------ expansion

    @staticmethod
    def speed_expansion(model: Model, grid: Grid, wave: WaveSolution, psi: Field,
                        cutoffs: Cutoffs = DEFAULT_CUTOFFS) -> SpeedExpansion:
        """
        # c_{0;2} = -[½b̃²⟨∂_ξξΦ₀, ψ⟩ + b̃⟨∂_ξ g(Φ₀), ψ⟩] / ⟨∂_ξΦ₀, ψ⟩
        # L_tw Φ_{0;2} + c_{0;2}Φ₀' = -½b̃²Φ₀'' - b̃ (g(Φ₀))',  ⟨Φ_{0;2}, ψ⟩ = 0
        """
        n = model.n
        phi = wave.profile.values
        btilde = StochasticWaveService.eval_btilde(wave.profile, psi, model, cutoffs)
        d1_phi = MathService.diff1_values(grid, phi)
        d2_phi = MathService.diff2_values(grid, phi)
        dg = MathService.diff1_values(grid, model.noise(phi))
        pairing = MathService.inner_values(grid, d1_phi, psi.values)
        c02 = -(0.5 * btilde ** 2 * MathService.inner_values(grid, d2_phi, psi.values)
                + btilde * MathService.inner_values(grid, dg, psi.values)) / pairing

        rhs = (-0.5 * btilde ** 2 * d2_phi - btilde * dg).ravel()
        if btilde == 0.0:
            phi02, c02_bordered = np.zeros_like(rhs), 0.0
        else:
            weights = np.tile(grid.weights, n)
            jac = sp.bmat([
                [WaveService.assemble_linearization(model, grid, wave), sp.csr_matrix(d1_phi.reshape(-1, 1))],
                [sp.csr_matrix((psi.flat * weights).reshape(1, -1)), None],
            ], format='csc')
            solution = WaveService._bordered_solve(jac, np.append(rhs, 0.0))
            phi02, c02_bordered = solution[:-1], float(solution[-1])

        logger.info(f"📈 Speed expansion: b̃(Φ₀)={btilde:.6g}, c_0;2={c02:.6g} (bordered {c02_bordered:.6g})")
        return SpeedExpansion(c0=wave.speed, c02=float(c02), phi02=Field.from_flat(grid, phi02, n),
                              btilde0=float(btilde), c02_bordered=c02_bordered)

    @staticmethod
    def stochastic_branch(model: Model, grid: Grid, wave: WaveSolution, psi: Field, sigmas: Iterable[float],
                          expansion: SpeedExpansion, cutoffs: Cutoffs = DEFAULT_CUTOFFS,
                          continuation_steps: int = 8) -> List[dict]:
        """Rows (σ, c_σ - c₀, σ²c_{0;2}) along an increasing σ list"""
        rows = []
        for sigma in sorted(float(s) for s in sigmas):
            swave = StochasticWaveService.solve_stochastic_wave(
                model, grid, wave, psi, sigma, cutoffs, continuation_steps=continuation_steps)
            rows.append({
                'sigma': sigma,
                'c_sigma': swave.speed,
                'c_sigma_minus_c0': swave.speed - wave.speed,
                'prediction_c02_sigma2': sigma ** 2 * expansion.c02,
            })
        return rows


class StochasticWaveSystem:
    """
    # Extended Newton system in the unknowns (Φ, c, b)
    #   R(Φ,c;b) = (ρ + σ²b²/2)Φ'' + cΦ' + f(Φ) + σ²b (g(Φ))'
    #   p(Φ)     = ⟨Φ - Φ₀, Φ₀'⟩
    #   q(Φ,b)   = b(Φ,ψ) - b
    # Db = -χ_high'(G) dG / χ_low(P) + χ_high(G) χ_low'(P) dP / χ_low(P)²
    # dG = (Dgᵀ W ψ)ᵀ,  dP = (D1ᵀ W ψ)ᵀ
    """

    def __init__(self, model: Model, grid: Grid, phi0: Field, psi: Field, sigma: float,
                 cutoffs: Cutoffs = DEFAULT_CUTOFFS):
        n = model.n
        weights = np.tile(grid.weights, n)
        self.model = model
        self.grid = grid
        self.sigma = float(sigma)
        self.cutoffs = cutoffs
        self.psi_w = psi.flat * weights
        self.d1 = grid.block(grid.d1, n)
        self.d2 = grid.block(grid.d2, n)
        self.dP = self.d1.T @ self.psi_w
        self.phase_row = WaveService.phase_template(grid, phi0)
        self.phi0_flat = phi0.flat.copy()

    @property
    def size(self) -> int:
        return self.model.n * self.grid.points + 2

    def pairings(self, flat: np.ndarray) -> Tuple[float, float]:
        """(P, G) = (⟨∂_ξΦ, ψ⟩, ⟨g(Φ), ψ⟩)"""
        values = flat.reshape(self.model.n, -1)
        return float((self.d1 @ flat) @ self.psi_w), float(self.model.noise(values).ravel() @ self.psi_w)

    def b_of(self, flat: np.ndarray) -> float:
        P, G = self.pairings(flat)
        return -float(self.cutoffs.chi_high(G)) / float(self.cutoffs.chi_low(P))

    def residual(self, flat: np.ndarray, c: float, b: float) -> np.ndarray:
        values = flat.reshape(self.model.n, -1)
        R = StochasticWaveService.stochastic_residual(self.model, self.grid, values, c, self.sigma, b)
        return np.concatenate([R.ravel(), [self.phase_row @ (flat - self.phi0_flat), self.b_of(flat) - b]])

    def jacobian(self, flat: np.ndarray, c: float, b: float) -> sp.csc_matrix:
        model, grid, cutoffs = self.model, self.grid, self.cutoffs
        n = model.n
        sigma_sq = self.sigma ** 2
        values = flat.reshape(n, -1)
        P, G = self.pairings(flat)

        noise_jac = WaveService.pointwise_jacobian(model.noise_jac, values)
        chi_low = float(cutoffs.chi_low(P))
        dG = noise_jac.T @ self.psi_w
        db_row = (-float(cutoffs.chi_high_prime(G)) * dG / chi_low
                  + float(cutoffs.chi_high(G)) * float(cutoffs.chi_low_prime(P)) * self.dP / chi_low ** 2)

        coeffs = model.rho + 0.5 * sigma_sq * b ** 2
        J_phi = (grid.block(grid.d2, n, coeffs) + c * self.d1
                 + WaveService.pointwise_jacobian(model.reaction_jac, values)
                 + sigma_sq * b * (self.d1 @ noise_jac))
        g_flat = model.noise(values).ravel()
        col_c = self.d1 @ flat
        col_b = sigma_sq * b * (self.d2 @ flat) + sigma_sq * (self.d1 @ g_flat)

        return sp.bmat([
            [J_phi, sp.csr_matrix(col_c.reshape(-1, 1)), sp.csr_matrix(col_b.reshape(-1, 1))],
            [sp.csr_matrix(self.phase_row.reshape(1, -1)), None, None],
            [sp.csr_matrix(db_row.reshape(1, -1)), None, sp.csr_matrix(np.array([[-1.0]]))],
        ], format='csc')
