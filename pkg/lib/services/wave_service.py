#!/usr/bin/env python3
"""
Deterministic Wave Service
# ρΦ₀'' + c₀Φ₀' + f(Φ₀) = 0 with phase condition ⟨Φ₀ - Φ_init, Φ_init'⟩ = 0
# L_tw v = ρv'' + c₀v' + Df(Φ₀)v,  L*_tw = W⁻¹ L_twᵀ W (adjoint for the trapezoid product)
"""

import logging
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import eigs, splu

from lib.errors import ConvergenceError, NumericalError, SingularSystemError, StagnationError
from lib.models.grid import Field, Grid
from lib.models.kinetics import Model, fhn_model, nagumo_front, nagumo_speed
from lib.models.waves import AdjointEigenfunction, SpectralReport, WaveSolution
from lib.services.math_service import MathService

logger = logging.getLogger(__name__)

MIN_STEP = 2.0 ** -20
BOUNDARY_TOLERANCE = 1e-4
# FHN pulses are first found at this recovery rate and continued down to the target ε
DEFAULT_SEED_EPS = 0.02


class WaveService:
    """
    # Service for the deterministic traveling wave (Φ₀, c₀), ψ_tw and σ(L_tw)
    """

    # ------------------------------------------------------------------ operators

    @staticmethod
    def pointwise_jacobian(jacobian: Callable[[np.ndarray], np.ndarray], values: np.ndarray) -> sp.csr_matrix:
        """Pointwise Dh(u) as an nN x nN matrix of diagonal blocks, for h = f or g"""
        jac = jacobian(values)
        n = jac.shape[0]
        return sp.bmat([[sp.diags(jac[i, j]) for j in range(n)] for i in range(n)], format='csr')

    @staticmethod
    def linear_operator(model: Model, grid: Grid, values: np.ndarray, speed: float) -> sp.csr_matrix:
        n = model.n
        return (grid.block(grid.d2, n, model.rho)
                + speed * grid.block(grid.d1, n)
                + WaveService.pointwise_jacobian(model.reaction_jac, values)).tocsr()

    @staticmethod
    def assemble_linearization(model: Model, grid: Grid, wave: WaveSolution) -> sp.csr_matrix:
        """
        # L_tw = ρ⊗D2 + c₀ I⊗D1 + Df(Φ₀)
        """
        return WaveService.linear_operator(model, grid, wave.profile.values, wave.speed)

    @staticmethod
    def assemble_adjoint(model: Model, grid: Grid, wave: WaveSolution,
                         operator: Optional[sp.spmatrix] = None) -> sp.csr_matrix:
        """
        # ⟨L v, w⟩ = ⟨v, L* w⟩  ⇒  L* = W⁻¹ Lᵀ W
        """
        if operator is None:
            operator = WaveService.assemble_linearization(model, grid, wave)
        w = np.tile(grid.weights, model.n)
        return (sp.diags(1.0 / w) @ operator.T @ sp.diags(w)).tocsr()

    @staticmethod
    def residual(model: Model, grid: Grid, values: np.ndarray, speed: float) -> np.ndarray:
        """F(Φ, c) = ρΦ'' + cΦ' + f(Φ), shape (n, N)"""
        return (model.rho[:, None] * MathService.diff2_values(grid, values)
                + speed * MathService.diff1_values(grid, values)
                + model.reaction(values))

    @staticmethod
    def boundary_deviation(model: Model, profile: Field) -> float:
        left = np.abs(profile.values[:, 0] - model.u_minus)
        right = np.abs(profile.values[:, -1] - model.u_plus)
        return float(max(left.max(), right.max()))

    # ------------------------------------------------------------------ Newton

    @staticmethod
    def phase_template(grid: Grid, init_profile: Field) -> np.ndarray:
        """Row of the phase condition p(Φ) = ⟨Φ - Φ_init, Φ_init'⟩"""
        n = init_profile.n
        return MathService.diff1_values(grid, init_profile.values).ravel() * np.tile(grid.weights, n)

    @staticmethod
    def bordered_residual(model: Model, grid: Grid, flat: np.ndarray, speed: float,
                          init_flat: np.ndarray, template: np.ndarray) -> np.ndarray:
        """(F(Φ, c), p(Φ)) stacked into one nN + 1 vector"""
        r = WaveService.residual(model, grid, flat.reshape(model.n, -1), speed).ravel()
        return np.append(r, template @ (flat - init_flat))

    @staticmethod
    def bordered_jacobian(model: Model, grid: Grid, flat: np.ndarray, speed: float,
                          template: np.ndarray) -> sp.csc_matrix:
        values = flat.reshape(model.n, -1)
        return sp.bmat([
            [WaveService.linear_operator(model, grid, values, speed),
             sp.csr_matrix(MathService.diff1_values(grid, values).reshape(-1, 1))],
            [sp.csr_matrix(template.reshape(1, -1)), None],
        ], format='csc')

    @staticmethod
    def solve_wave(model: Model, grid: Grid, init_profile: Field, init_speed: float,
                   tol: float = 1e-10, max_iters: int = 50) -> WaveSolution:
        """
        # Damped Newton on the bordered system
        #   [ L(Φ,c)      Φ'  ] [δΦ]   [ -F(Φ,c) ]
        #   [ (WΦ_init')ᵀ  0  ] [δc] = [ -p(Φ)   ]
        # Backtracking on ‖F‖², factor 1/2, minimum step 2⁻²⁰
        """
        n = model.n
        init_flat = init_profile.flat.copy()
        template = WaveService.phase_template(grid, init_profile)

        phi, speed = init_flat.copy(), float(init_speed)
        F = WaveService.bordered_residual(model, grid, phi, speed, init_flat, template)
        res = float(np.max(np.abs(F)))
        iters = 0
        logger.info(f"🚀 Solving {model.name} wave: N={grid.points}, L={grid.half_length}, c_init={speed:.6g}")

        while res > tol:
            if iters >= max_iters:
                raise ConvergenceError(f"wave Newton did not converge in {max_iters} iterations",
                                       residual=res, iterations=iters)
            jac = WaveService.bordered_jacobian(model, grid, phi, speed, template)
            delta = WaveService._bordered_solve(jac, -F)

            merit = F @ F
            step = 1.0
            while step >= MIN_STEP:
                trial_phi = phi + step * delta[:-1]
                trial_speed = speed + step * delta[-1]
                trial_F = WaveService.bordered_residual(model, grid, trial_phi, trial_speed, init_flat, template)
                if np.all(np.isfinite(trial_F)) and trial_F @ trial_F < (1.0 - 1e-4 * step) * merit:
                    break
                step *= 0.5
            else:
                raise ConvergenceError("wave Newton line search stalled below minimum step",
                                       residual=res, iterations=iters)

            phi, speed, F = trial_phi, trial_speed, trial_F
            res = float(np.max(np.abs(F)))
            iters += 1
            logger.debug(f"   Newton {iters}: |F|={res:.3e}, step={step:.3g}, c={speed:.10f}")

        profile = Field.from_flat(grid, phi, n)
        deviation = WaveService.boundary_deviation(model, profile)
        if deviation > BOUNDARY_TOLERANCE:
            logger.warning(f"⚠️ Wave boundary values deviate from u_± by {deviation:.2e}; consider a larger L")
        logger.info(f"✅ Wave converged: c={speed:.10f}, |F|={res:.2e}, {iters} Newton steps")
        return WaveSolution(profile=profile, speed=speed, residual_norm=res,
                            newton_iters=iters, boundary_deviation=deviation)

    @staticmethod
    def _bordered_solve(jac: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
        try:
            solution = splu(sp.csc_matrix(jac)).solve(rhs)
        except RuntimeError as exc:
            raise SingularSystemError(
                f"bordered Jacobian is singular ({exc}); refine the grid or move the parameters") from exc
        if not np.all(np.isfinite(solution)):
            raise SingularSystemError("bordered solve produced non-finite values; refine the grid or move the parameters")
        return solution

    # ------------------------------------------------------------------ seeds

    @staticmethod
    def nagumo_seed(model: Model, grid: Grid) -> Tuple[Field, float]:
        return Field(grid, nagumo_front(grid.nodes)[None, :]), nagumo_speed(model.params['a'])

    @staticmethod
    def pulse_seed(model: Model, grid: Grid, width: float = 20.0,
                   front_position: Optional[float] = None) -> Tuple[Field, float]:
        """
        # Front/back pair of Nagumo fronts, u ≈ 1 on [x_b, x_f]
        # w: linear rise across the excited plateau, exponential recovery tail behind x_b
        """
        a, eps, gamma = model.params['a'], model.params['eps'], model.params['gamma']
        xi = grid.nodes
        x_front = grid.half_length / 3.0 if front_position is None else front_position
        x_back = x_front - width
        speed = nagumo_speed(a)

        u = nagumo_front(xi - x_front) - nagumo_front(xi - x_back)
        w_max = (1.0 - np.exp(-eps * gamma * width / speed)) / gamma
        tail_rate = eps * gamma / speed
        w = np.where(xi >= x_back,
                     w_max * np.clip((x_front - xi) / width, 0.0, 1.0),
                     w_max * np.exp(tail_rate * (xi - x_back)))
        return Field(grid, np.stack([u, w])), speed

    @staticmethod
    def relax_profile(model: Model, grid: Grid, seed: Field, speed: float,
                      dt: float = 0.5, t_max: float = 600.0, tol: float = 1e-5) -> Tuple[Field, float]:
        """
        # Freezing method: u_t = ρu'' + cu' + f(u), c(t) from ⟨u_t, seed'⟩ = 0
        # Implicit (ρD2 + c*D1), explicit f and (c - c*)D1 correction; c* refreshed when c moves
        """
        n = model.n
        weights = np.tile(grid.weights, n)
        template = MathService.diff1_values(grid, seed.values).ravel() * weights
        diffusion = grid.block(grid.d2, n, model.rho)
        advection = grid.block(grid.d1, n)
        identity = sp.identity(n * grid.points, format='csc')

        u = seed.flat.copy()
        factor_speed, lu = None, None
        frozen_res = np.inf
        steps = int(np.ceil(t_max / dt))
        logger.info(f"🔄 Relaxing {model.name} seed by freezing: dt={dt}, t_max={t_max}")
        for k in range(steps):
            f = model.reaction(u.reshape(n, -1)).ravel()
            lin = diffusion @ u
            adv = advection @ u
            den = template @ adv
            if abs(den) < 1e-12:
                raise NumericalError("freezing phase condition degenerated; seed lost its front", step=k)
            speed = -float(template @ (lin + f)) / den
            frozen_res = float(np.max(np.abs(lin + speed * adv + f)))
            if frozen_res < tol:
                break
            if factor_speed is None or abs(speed - factor_speed) > 1e-2:
                factor_speed = speed
                lu = splu(sp.csc_matrix(identity - dt * (diffusion + factor_speed * advection)))
            u = lu.solve(u + dt * (f + (speed - factor_speed) * adv))
            if not np.all(np.isfinite(u)):
                raise NumericalError("freezing relaxation produced non-finite values", step=k)
        else:
            logger.warning(f"⚠️ Relaxation stopped at t_max={t_max} with frozen residual {frozen_res:.2e}")
        logger.info(f"   relaxed: c={speed:.6f}, frozen residual {frozen_res:.2e}")
        return Field.from_flat(grid, u, n), speed

    @staticmethod
    def compute_wave(model: Model, grid: Grid, tol: float = 1e-10, max_iters: int = 50,
                     relax_dt: float = 0.5, relax_t_max: float = 600.0, relax_tol: float = 1e-5,
                     seed_eps: Optional[float] = DEFAULT_SEED_EPS,
                     eps_continuation_steps: int = 8) -> WaveSolution:
        """
        # Seed → (relax) → Newton, per model
        # FHN with seed_eps > ε: solve at seed_eps, then natural continuation down to ε
        # seed_eps = None (or ≤ ε) relaxes and solves directly at ε
        """
        if model.name == 'nagumo':
            seed, speed = WaveService.nagumo_seed(model, grid)
            return WaveService.solve_wave(model, grid, seed, speed, tol=tol, max_iters=max_iters)

        target_eps = model.params['eps']
        start_model = model
        if seed_eps is not None and seed_eps > target_eps:
            start_model = fhn_model(**{**model.params, 'eps': seed_eps})

        seed, speed = WaveService.pulse_seed(start_model, grid)
        relaxed, speed = WaveService.relax_profile(start_model, grid, seed, speed,
                                                   dt=relax_dt, t_max=relax_t_max, tol=relax_tol)
        wave = WaveService.solve_wave(start_model, grid, relaxed, speed, tol=tol, max_iters=max_iters)
        if start_model is model:
            return wave

        for eps in np.linspace(seed_eps, target_eps, eps_continuation_steps + 1)[1:]:
            step_model = fhn_model(**{**model.params, 'eps': float(eps)})
            logger.info(f"   continuation ε={eps:.5g}")
            wave = WaveService.solve_wave(step_model, grid, wave.profile, wave.speed,
                                          tol=tol, max_iters=max_iters)
        return wave

    # ------------------------------------------------------------------ ψ_tw

    @staticmethod
    def adjoint_eigenfunction(model: Model, grid: Grid, wave: WaveSolution,
                              max_iters: int = 30, tol: float = 1e-10) -> AdjointEigenfunction:
        """
        # Inverse iteration x ← (L*)⁻¹x on the discrete adjoint, then ψ ← ψ / ⟨Φ₀', ψ⟩
        """
        n = model.n
        adjoint = WaveService.assemble_adjoint(model, grid, wave).tocsc()
        try:
            lu = splu(adjoint)
        except RuntimeError:
            shift = 1e-12 * max(1.0, abs(adjoint).max())
            logger.warning(f"⚠️ Adjoint operator exactly singular; inverse iteration shifted by {shift:.1e}")
            lu = splu(sp.csc_matrix(adjoint - shift * sp.identity(adjoint.shape[0])))

        weights = np.tile(grid.weights, n)

        def wnorm(vec):
            return float(np.sqrt(vec @ (weights * vec)))

        phi_prime = MathService.diff1_values(grid, wave.profile.values).ravel()
        x = phi_prime / wnorm(phi_prime)
        change = np.inf
        for iteration in range(1, max_iters + 1):
            y = lu.solve(x)
            if not np.all(np.isfinite(y)):
                raise StagnationError("adjoint inverse iteration produced non-finite values", iteration=iteration)
            y /= wnorm(y)
            if y @ (weights * x) < 0:
                y = -y
            change = wnorm(y - x)
            x = y
            if change < tol:
                break
        else:
            if change > 1e-6:
                raise StagnationError(f"adjoint inverse iteration stagnated (change {change:.2e})",
                                      iteration=max_iters)
            logger.warning(f"⚠️ Adjoint iteration change settled at {change:.2e}")

        scale = float(phi_prime @ (weights * x))
        if abs(scale) < 1e-10 * wnorm(phi_prime):
            raise NumericalError("⟨Φ₀', ψ⟩ vanishes; adjoint mode cannot be normalized", pairing=scale)
        psi_flat = x / scale
        psi = Field.from_flat(grid, psi_flat, n)
        check = MathService.inner_values(grid, phi_prime.reshape(n, -1), psi.values) - 1.0
        residual = wnorm(adjoint @ psi_flat) / wnorm(psi_flat)
        logger.info(f"✅ ψ_tw: ‖L*ψ‖/‖ψ‖={residual:.2e}, normalization {check:.1e}, {iteration} iterations")
        return AdjointEigenfunction(psi=psi, normalization_check=check,
                                    residual=residual, iterations=iteration)

    # ------------------------------------------------------------------ spectrum

    @staticmethod
    def spectrum(model: Model, grid: Grid, wave: WaveSolution, num_eigs: int = 40,
                 dense_limit: int = 4096, zero_tol: float = 1e-6) -> SpectralReport:
        """
        # Dense eigensolve for nN ≤ dense_limit, shift-invert Arnoldi near 0 otherwise
        # gap_beta = -max{Re λ : λ ≠ zero_eig} / 2
        """
        operator = WaveService.assemble_linearization(model, grid, wave)
        size = operator.shape[0]
        if size <= dense_limit:
            eigenvalues = scipy.linalg.eigvals(operator.toarray())
        else:
            k = min(num_eigs, size - 2)
            # shift just right of the origin keeps the factorization away from the translation mode
            eigenvalues = eigs(operator.tocsc(), k=k, sigma=1e-3, which='LM', return_eigenvectors=False)
        eigenvalues = np.asarray(eigenvalues, dtype=complex)
        eigenvalues = eigenvalues[np.argsort(-eigenvalues.real)]

        zero_index = int(np.argmin(np.abs(eigenvalues)))
        zero_eig = complex(eigenvalues[zero_index])
        others = np.delete(eigenvalues, zero_index)
        zero_is_simple = not bool(np.any(np.abs(others) <= zero_tol))
        gap_beta = float(-others.real.max() / 2.0) if others.size else float('inf')
        essential = WaveService.essential_bound(model, grid, wave.speed)

        report = SpectralReport(eigenvalues=eigenvalues, zero_eig=zero_eig, gap_beta=gap_beta,
                                zero_is_simple=zero_is_simple, essential_bound=essential)
        status = "✅" if report.certifies else "⚠️"
        logger.info(f"{status} Spectrum: |λ₀|={abs(zero_eig):.2e}, gap β={gap_beta:.4g}, "
                    f"simple={zero_is_simple}, essential bound {essential:.4g}")
        return report

    @staticmethod
    def essential_bound(model: Model, grid: Grid, speed: float, samples: int = 2049) -> float:
        """
        # Dispersion curves λ(k) ∈ σ(-ρk² + ick + Df(u_±)), k ∈ [0, π/h]
        """
        ks = np.linspace(0.0, np.pi / grid.spacing, samples)
        bound = -np.inf
        for state in (model.u_minus, model.u_plus):
            jac = model.reaction_jac(np.asarray(state, dtype=float)[:, None])[:, :, 0]
            symbols = np.empty((samples, model.n, model.n), dtype=complex)
            symbols[:] = jac
            idx = np.arange(model.n)
            symbols[:, idx, idx] += (-model.rho[None, :] * ks[:, None] ** 2 + 1j * speed * ks[:, None])
            bound = max(bound, float(np.linalg.eigvals(symbols).real.max()))
        return bound
