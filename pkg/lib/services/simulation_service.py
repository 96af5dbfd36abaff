#!/usr/bin/env python3
"""
SPDE Path Simulation Service
# dU = [ρ∂_ξξU + f(U)] dt + σ g(U) dβ_t
# dΓ = [c_σ + a_σ(U, c_σ, T_Γψ_tw)] dt + σ b(U, T_Γψ_tw) dβ_t
# V(t) = T_{-Γ(t)}U(t) - Φ_σ,  N_ε(t) = ‖V(t)‖²_{L²} + ∫₀ᵗ e^{-ε(t-s)} ‖V(s)‖²_{H¹} ds
#
# Integration window co-moves with c_σ: U_frame(ξ) = U(ξ + c_σt + shift), phase Γ̃ = Γ - c_σt - shift
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.linalg import splu

from lib.errors import BlowUpError, BracketError, ParameterError
from lib.models.grid import Field, Grid
from lib.models.kinetics import Cutoffs, Model, make_cutoffs
from lib.models.waves import StochasticWave
from lib.services.math_service import MathService
from lib.services.stochastic_wave_service import StochasticWaveService

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class SimConfig:
    """
    # Immutable inputs of one path; the implicit-step factorization is built lazily per process
    """
    model: Model
    grid: Grid
    swave: StochasticWave
    psi: Field
    sigma: float
    dt: float = 1e-3
    t_end: float = 10.0
    eps: float = 0.01
    record_stride: int = 100
    cutoffs: Cutoffs = field(default_factory=make_cutoffs)
    c0: Optional[float] = None
    gap_beta: Optional[float] = None
    u0: Optional[Field] = None
    snapshot_times: Tuple[float, ...] = ()
    recenter_fraction: float = 0.25

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError('dt', self.dt, 'dt > 0')
        if not self.t_end > 0:
            raise ParameterError('t_end', self.t_end, 't_end > 0')
        if self.sigma < 0:
            raise ParameterError('sigma', self.sigma, 'sigma >= 0')
        if abs(self.sigma ** 2 - self.swave.sigma ** 2) > 1e-14:
            raise ParameterError('sigma', self.sigma, f'the stochastic wave level {self.swave.sigma}')
        if not self.eps > 0:
            raise ParameterError('eps', self.eps, 'eps > 0')
        if self.gap_beta is not None and not self.eps < 2.0 * self.gap_beta:
            raise ParameterError('eps', self.eps, f'eps < 2·gap_beta = {2.0 * self.gap_beta:.4g}')
        if self.record_stride < 1:
            raise ParameterError('record_stride', self.record_stride, 'record_stride >= 1')
        if not 0.0 < self.recenter_fraction < 0.5:
            raise ParameterError('recenter_fraction', self.recenter_fraction, '0 < fraction < 1/2')
        if self.c0 is None:
            self.c0 = self.swave.speed
        self.psi_xi = MathService.diff1_values(self.grid, self.psi.values)
        self.psi_xixi = MathService.diff2_values(self.grid, self.psi.values)
        self._solver = None

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def solver(self):
        """LU of I - dt(ρD2 + c_σD1)"""
        if self._solver is None:
            n = self.model.n
            operator = (self.grid.block(self.grid.d2, n, self.model.rho)
                        + self.swave.speed * self.grid.block(self.grid.d1, n))
            identity = sp.identity(n * self.grid.points, format='csc')
            self._solver = splu(sp.csc_matrix(identity - self.dt * operator))
        return self._solver

    def __getstate__(self):
        state = self.__dict__.copy()
        state['_solver'] = None
        return state


@dataclass
class PathState:
    """
    # u: U in the co-moving window, gamma: Γ̃, frame_shift: accumulated recentering
    """
    u: Field
    gamma: float
    neps_integral: float = 0.0
    t: float = 0.0
    frame_shift: float = 0.0
    beta: float = 0.0
    cutoff_activations: int = 0


@dataclass(eq=False)
class PathRecord:
    times: np.ndarray
    gamma_series: np.ndarray
    gamma_minus_cst: np.ndarray
    gamma_vr: np.ndarray
    neps_series: np.ndarray
    v_l2_series: np.ndarray
    phase_mismatch: np.ndarray
    peak_c0_frame: np.ndarray
    beta_series: np.ndarray
    sup_neps: float
    brownian_increments_seed: int
    cutoff_activations: int = 0
    snapshots: Dict[float, Dict[str, np.ndarray]] = field(default_factory=dict)

    def series(self) -> Dict[str, np.ndarray]:
        return {
            't': self.times,
            'gamma': self.gamma_series,
            'gamma_minus_cst': self.gamma_minus_cst,
            'gamma_vr': self.gamma_vr,
            'neps': self.neps_series,
            'v_l2': self.v_l2_series,
            'phase_mismatch': self.phase_mismatch,
            'peak_c0_frame': self.peak_c0_frame,
            'beta': self.beta_series,
        }


class SimulationService:
    """
    # Semi-implicit Euler-Maruyama for the coupled (U, Γ) system
    """

    @staticmethod
    def brownian_increments(seed: int, dt: float, n_steps: int) -> np.ndarray:
        """dβ_k ~ N(0, dt) from a Philox stream keyed by the seed"""
        rng = np.random.Generator(np.random.Philox(key=int(seed) % 2 ** 64))
        return rng.standard_normal(n_steps) * np.sqrt(dt)

    @staticmethod
    def init_gamma0(u0: Field, swave: StochasticWave, psi: Field, scan_points: int = 81,
                    tol: float = 1e-10) -> float:
        """
        # Root of γ ↦ ⟨T_{-γ}u0 - Φ_σ, ψ_tw⟩ nearest 0 in [-L/2, L/2]
        """
        grid = u0.grid
        phi, psi_v = swave.profile.values, psi.values

        def mismatch(gamma: float) -> float:
            shifted = MathService.shift_values(grid, u0.values, -gamma)
            return MathService.inner_values(grid, shifted - phi, psi_v)

        f0 = mismatch(0.0)
        if abs(f0) <= 1e-14:
            return 0.0
        nodes = np.linspace(-0.5 * grid.half_length, 0.5 * grid.half_length, scan_points)
        samples = np.array([f0 if g == 0.0 else mismatch(g) for g in nodes])
        hits = np.flatnonzero(samples == 0.0)
        if hits.size:
            return float(nodes[hits[np.argmin(np.abs(nodes[hits]))]])
        changes = np.flatnonzero(samples[:-1] * samples[1:] < 0)
        if not changes.size:
            raise BracketError(f"no sign change of the phase mismatch in [-L/2, L/2] (f(0)={f0:.3e})", f0=f0)
        nearest = changes[np.argmin(np.minimum(np.abs(nodes[changes]), np.abs(nodes[changes + 1])))]
        gamma = brentq(mismatch, nodes[nearest], nodes[nearest + 1], xtol=1e-13, maxiter=200)

        # Newton polish, d/dγ T_{-γ}u0 = ∂_ξ T_{-γ}u0
        residual = mismatch(gamma)
        for _ in range(2):
            if abs(residual) <= 1e-2 * tol:
                break
            shifted = MathService.shift_values(grid, u0.values, -gamma)
            slope = MathService.inner_values(grid, MathService.diff1_values(grid, shifted), psi_v)
            if slope == 0.0:
                break
            candidate = gamma - residual / slope
            candidate_residual = mismatch(candidate)
            if abs(candidate_residual) >= abs(residual):
                break
            gamma, residual = candidate, candidate_residual
        return float(gamma)

    @staticmethod
    def deviation(state: PathState, swave: StochasticWave) -> Field:
        """V = T_{-Γ̃}U_frame - Φ_σ"""
        grid = state.u.grid
        return Field(grid, MathService.shift_values(grid, state.u.values, -state.gamma) - swave.profile.values)

    @staticmethod
    def neps_update(prev_integral: float, v_h1_sq: float, dt: float, eps: float) -> float:
        """
        # I_{k+1} = e^{-ε dt} I_k + dt e^{-ε dt/2} ‖V‖²_{H¹}
        """
        return float(np.exp(-eps * dt) * prev_integral + dt * np.exp(-0.5 * eps * dt) * v_h1_sq)

    @staticmethod
    def step(state: PathState, cfg: SimConfig, dW: float) -> PathState:
        grid, model = cfg.grid, cfg.model
        n = model.n
        u = state.u.values
        sigma, c_sigma = cfg.sigma, cfg.swave.speed

        psi, psi_xi, psi_xixi = MathService.shift_many(grid, (cfg.psi.values, cfg.psi_xi, cfg.psi_xixi),
                                                       state.gamma)
        g = model.noise(u)
        # pairings with the derivatives on the shifted ψ
        theta_low = -MathService.inner_values(grid, u, psi_xi)
        theta_high = MathService.inner_values(grid, g, psi)
        chi = float(cfg.cutoffs.chi_low(theta_low))
        b = -float(cfg.cutoffs.chi_high(theta_high)) / chi
        activations = state.cutoff_activations + int(cfg.cutoffs.is_active(theta_low, theta_high))

        f = model.reaction(u)
        kappa_rho = model.rho + 0.5 * sigma ** 2 * b ** 2
        a = -(MathService.inner_values(grid, kappa_rho[:, None] * u, psi_xixi)
              + MathService.inner_values(grid, f, psi)
              + c_sigma * theta_low
              - sigma ** 2 * b * MathService.inner_values(grid, g, psi_xi)) / chi

        rhs = (u + cfg.dt * f + sigma * g * dW).ravel()
        u_next = cfg.solver.solve(rhs).reshape(n, -1)
        gamma_next = state.gamma + a * cfg.dt + sigma * b * dW
        t_next = state.t + cfg.dt
        if not (np.all(np.isfinite(u_next)) and np.isfinite(gamma_next)):
            raise BlowUpError(t_next)

        frame_shift = state.frame_shift
        if abs(gamma_next) > cfg.recenter_fraction * grid.half_length:
            nodes = int(round(gamma_next / grid.spacing))
            u_next = SimulationService._roll_window(u_next, nodes)
            gamma_next -= nodes * grid.spacing
            frame_shift += nodes * grid.spacing

        new_state = PathState(u=Field(grid, u_next), gamma=float(gamma_next), neps_integral=state.neps_integral,
                              t=t_next, frame_shift=frame_shift, beta=state.beta + dW,
                              cutoff_activations=activations)
        v = SimulationService.deviation(new_state, cfg.swave)
        new_state.neps_integral = SimulationService.neps_update(
            state.neps_integral, MathService.h1_norm_sq(v), cfg.dt, cfg.eps)
        return new_state

    @staticmethod
    def _roll_window(values: np.ndarray, nodes: int) -> np.ndarray:
        """U_new[k] = U[k + nodes], constant extension by the edge value"""
        if nodes == 0:
            return values
        if nodes > 0:
            pad = np.repeat(values[:, -1:], nodes, axis=1)
            return np.concatenate([values[:, nodes:], pad], axis=1)
        pad = np.repeat(values[:, :1], -nodes, axis=1)
        return np.concatenate([pad, values[:, :nodes]], axis=1)

    @staticmethod
    def run_path(cfg: SimConfig, seed: int, increments: Optional[np.ndarray] = None) -> PathRecord:
        """
        # Full trajectory, recorded every record_stride steps and at t_end
        """
        grid = cfg.grid
        n_steps = cfg.n_steps
        if increments is None:
            increments = SimulationService.brownian_increments(seed, cfg.dt, n_steps)
        elif len(increments) != n_steps:
            raise ParameterError('increments', len(increments), f'{n_steps} Brownian increments')

        u0 = cfg.u0 if cfg.u0 is not None else cfg.swave.profile
        gamma0 = SimulationService.init_gamma0(u0, cfg.swave, cfg.psi)
        state = PathState(u=u0, gamma=gamma0)
        b0 = StochasticWaveService.eval_b(cfg.swave.profile, cfg.psi, cfg.model, cfg.cutoffs)
        c_sigma, c0 = cfg.swave.speed, cfg.c0

        snapshot_steps = {int(round(t / cfg.dt)): float(t) for t in cfg.snapshot_times
                          if 0.0 <= t <= cfg.t_end}
        rows = []
        snapshots = {}

        def record(current: PathState):
            v = SimulationService.deviation(current, cfg.swave)
            l2_sq = MathService.inner(v, v)
            offset = current.frame_shift + current.gamma
            peak = SimulationService.peak_position(grid, current.u.values[0])
            rows.append((
                current.t,
                c_sigma * current.t + offset,
                offset,
                offset - cfg.sigma * b0 * current.beta,
                l2_sq + current.neps_integral,
                np.sqrt(l2_sq),
                MathService.inner(v, cfg.psi),
                peak + (c_sigma - c0) * current.t + current.frame_shift,
                current.beta,
            ))

        def snapshot(current: PathState, label: float):
            values = current.u.values
            snapshots[label] = {
                'gamma_frame': MathService.shift_values(grid, values, -current.gamma),
                'c_sigma_frame': MathService.shift_values(grid, values, current.frame_shift),
                'c0_frame': MathService.shift_values(
                    grid, values, (c_sigma - c0) * current.t + current.frame_shift),
            }

        record(state)
        if 0 in snapshot_steps:
            snapshot(state, snapshot_steps[0])
        for k in range(1, n_steps + 1):
            state = SimulationService.step(state, cfg, increments[k - 1])
            if k % cfg.record_stride == 0 or k == n_steps:
                record(state)
            if k in snapshot_steps:
                snapshot(state, snapshot_steps[k])

        table = np.array(rows)
        if state.cutoff_activations:
            logger.warning(f"⚠️ Cut-offs left their identity region on {state.cutoff_activations} steps (seed {seed})")
        return PathRecord(
            times=table[:, 0], gamma_series=table[:, 1], gamma_minus_cst=table[:, 2], gamma_vr=table[:, 3],
            neps_series=table[:, 4], v_l2_series=table[:, 5], phase_mismatch=table[:, 6],
            peak_c0_frame=table[:, 7], beta_series=table[:, 8], sup_neps=float(table[:, 4].max()),
            brownian_increments_seed=int(seed), cutoff_activations=state.cutoff_activations,
            snapshots=snapshots,
        )

    @staticmethod
    def peak_position(grid: Grid, values: np.ndarray) -> float:
        """argmax refined by the parabola through the neighbouring nodes"""
        k = int(np.argmax(values))
        if 0 < k < grid.points - 1:
            left, centre, right = values[k - 1], values[k], values[k + 1]
            curvature = left - 2.0 * centre + right
            if curvature < 0.0:
                return float(grid.nodes[k] + 0.5 * grid.spacing * (left - right) / curvature)
        return float(grid.nodes[k])

    @staticmethod
    def frame_slopes(record: PathRecord, t_min: float = 0.0) -> Dict[str, float]:
        """
        # Least-squares slopes of the phase mismatch and the c₀-frame peak position
        # peak_c0_vr: peak position minus σb(Φ_σ,ψ_tw)β_t, the first-order phase response
        """
        mask = record.times >= t_min
        if mask.sum() < 2:
            nan = float('nan')
            return {'phase_mismatch_slope': nan, 'peak_c0_slope': nan, 'peak_c0_vr_slope': nan}
        times = record.times[mask]
        response = (record.gamma_minus_cst - record.gamma_vr)[mask]
        return {
            'phase_mismatch_slope': float(np.polyfit(times, record.phase_mismatch[mask], 1)[0]),
            'peak_c0_slope': float(np.polyfit(times, record.peak_c0_frame[mask], 1)[0]),
            'peak_c0_vr_slope': float(np.polyfit(times, record.peak_c0_frame[mask] - response, 1)[0]),
        }
