#!/usr/bin/env python3
"""
Mathematical Computation Service
# Grid operators shared by every stage of the wave laboratory
# ∂_ξ, ∂_ξξ, ⟨u, v⟩ = Σ_i ∫ u_i v_i dξ (trapezoid), ‖u‖²_{H¹}, (T_γ u)(ξ) = u(ξ - γ)
"""

import logging
from typing import Sequence, Tuple

import numpy as np

from lib.errors import GridMismatchError, ParameterError
from lib.models.grid import Field, Grid

logger = logging.getLogger(__name__)


class MathService:
    """
    # Service containing the discrete calculus on a truncated grid
    # Fields in, Fields (or scalars) out; inputs are never modified
    """

    @staticmethod
    def diff1(field: Field) -> Field:
        """
        # First derivative
        # Formula: (u_{k+1} - u_{k-1}) / 2h, second-order one-sided rows at ξ = ±L
        """
        return field.with_values(MathService.diff1_values(field.grid, field.values))

    @staticmethod
    def diff2(field: Field) -> Field:
        """
        # Second derivative with homogeneous Neumann closure
        # Formula: (u_{k+1} - 2u_k + u_{k-1}) / h²
        """
        return field.with_values(MathService.diff2_values(field.grid, field.values))

    @staticmethod
    def diff1_values(grid: Grid, values: np.ndarray) -> np.ndarray:
        return (grid.d1 @ np.atleast_2d(values).T).T

    @staticmethod
    def diff2_values(grid: Grid, values: np.ndarray) -> np.ndarray:
        return (grid.d2 @ np.atleast_2d(values).T).T

    @staticmethod
    def inner(u: Field, v: Field) -> float:
        """
        # L² inner product
        # Formula: ⟨u, v⟩ = Σ_i Σ_k w_k u_i(ξ_k) v_i(ξ_k)
        """
        if u.grid != v.grid:
            raise GridMismatchError("inner product of fields on different grids")
        if u.values.shape != v.values.shape:
            raise GridMismatchError(f"component mismatch: {u.values.shape} vs {v.values.shape}")
        return MathService.inner_values(u.grid, u.values, v.values)

    @staticmethod
    def inner_values(grid: Grid, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.sum(np.atleast_2d(u) * np.atleast_2d(v) * grid.weights))

    @staticmethod
    def norm(u: Field) -> float:
        return float(np.sqrt(max(MathService.inner(u, u), 0.0)))

    @staticmethod
    def h1_norm_sq(u: Field) -> float:
        """
        # Formula: ‖u‖²_{H¹} = ⟨u, u⟩ + ⟨∂_ξu, ∂_ξu⟩
        """
        return MathService.h1_norm_sq_values(u.grid, u.values)

    @staticmethod
    def h1_norm_sq_values(grid: Grid, values: np.ndarray) -> float:
        du = MathService.diff1_values(grid, values)
        return MathService.inner_values(grid, values, values) + MathService.inner_values(grid, du, du)

    @staticmethod
    def shift(u: Field, gamma: float) -> Field:
        """
        # Right shift T_γ
        # Formula: (T_γ u)(ξ_k) = u(ξ_k - γ), Catmull-Rom cubic between nodes,
        #          constant extension by the boundary values outside [-L, L]
        """
        grid = u.grid
        if not np.isfinite(gamma) or abs(gamma) >= grid.half_length:
            raise ParameterError('gamma', gamma, f'|gamma| < L = {grid.half_length}')
        if abs(gamma) > 0.5 * grid.half_length:
            logger.warning(f"⚠️ Shift by {gamma:.4g} exceeds L/2; boundary states fill {abs(gamma):.4g} of the window")
        return u.with_values(MathService.shift_values(grid, u.values, gamma))

    @staticmethod
    def shift_values(grid: Grid, values: np.ndarray, gamma: float) -> np.ndarray:
        """Unchecked T_γ on raw (n, N) arrays"""
        if gamma == 0.0:
            return np.array(values, dtype=float, copy=True)
        index, weights = MathService.shift_stencil(grid, gamma)
        return MathService.apply_stencil(values, index, weights)

    @staticmethod
    def shift_many(grid: Grid, arrays: Sequence[np.ndarray], gamma: float) -> Tuple[np.ndarray, ...]:
        """Shift several arrays by the same γ, building the stencil once"""
        if gamma == 0.0:
            return tuple(np.array(a, dtype=float, copy=True) for a in arrays)
        index, weights = MathService.shift_stencil(grid, gamma)
        return tuple(MathService.apply_stencil(a, index, weights) for a in arrays)

    @staticmethod
    def shift_stencil(grid: Grid, gamma: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        # Catmull-Rom stencil for sampling at fractional index s_k = k - γ/h
        # Weights for t = s - ⌊s⌋:
        #   w_{-1} = (-t + 2t² - t³)/2,  w_0 = (2 - 5t² + 3t³)/2
        #   w_{+1} = (t + 4t² - 3t³)/2,  w_{+2} = (-t² + t³)/2
        """
        n = grid.points
        s = np.clip(np.arange(n) - gamma / grid.spacing, 0.0, n - 1.0)
        base = np.floor(s).astype(int)
        t = s - base
        t2, t3 = t * t, t * t * t
        weights = 0.5 * np.stack([
            -t + 2.0 * t2 - t3,
            2.0 - 5.0 * t2 + 3.0 * t3,
            t + 4.0 * t2 - 3.0 * t3,
            -t2 + t3,
        ])
        index = np.clip(base[None, :] + np.arange(-1, 3)[:, None], 0, n - 1)
        return index, weights

    @staticmethod
    def apply_stencil(values: np.ndarray, index: np.ndarray, weights: np.ndarray) -> np.ndarray:
        values = np.atleast_2d(values)
        return np.einsum('jk,ijk->ik', weights, values[:, index])
