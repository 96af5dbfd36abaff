#!/usr/bin/env python3
"""
Truncated Spatial Grid
# Mesh: ξ_k = -L + k·h,  h = 2L/(N-1),  k = 0..N-1
# Field: n x N array, component i sampled at node k
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from lib.errors import GridMismatchError, NumericalError, ParameterError


@dataclass(frozen=True)
class Grid:
    """
    # Uniform mesh on [-L, L] with trapezoid weights and FD stencils
    # All stencils use the homogeneous Neumann ghost-point closure for ∂_ξξ
    """
    half_length: float
    points: int

    def __post_init__(self):
        if self.points < 16:
            raise ParameterError('points', self.points, 'N >= 16')
        if not self.half_length > 0:
            raise ParameterError('half_length', self.half_length, 'L > 0')

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_length / (self.points - 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        # symmetric by construction: ξ_k = h·(k - (N-1)/2)
        return self.spacing * (np.arange(self.points) - 0.5 * (self.points - 1))

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid weights: h·[1/2, 1, ..., 1, 1/2]"""
        w = np.full(self.points, self.spacing)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    @cached_property
    def d1(self) -> sp.csr_matrix:
        """
        # ∂_ξ: central (u_{k+1} - u_{k-1})/2h inside,
        # one-sided (-3u_0 + 4u_1 - u_2)/2h and (3u_{N-1} - 4u_{N-2} + u_{N-3})/2h at the ends
        """
        n, h = self.points, self.spacing
        d = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], shape=(n, n)).tolil()
        d[0, :3] = [-3.0, 4.0, -1.0]
        d[n - 1, n - 3:] = [1.0, -4.0, 3.0]
        return d.tocsr() / (2.0 * h)

    @cached_property
    def d2(self) -> sp.csr_matrix:
        """
        # ∂_ξξ: (u_{k+1} - 2u_k + u_{k-1})/h², ghost nodes u_{-1}=u_1, u_N=u_{N-2}
        # W·d2 is symmetric for the trapezoid weights W
        """
        n, h = self.points, self.spacing
        d = sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], shape=(n, n)).tolil()
        d[0, 1] = 2.0
        d[n - 1, n - 2] = 2.0
        return d.tocsr() / h ** 2

    def block(self, op: sp.spmatrix, n: int, coefficients=None) -> sp.csr_matrix:
        """Block-diagonal nN x nN operator diag(coef_i · op), component-major ordering"""
        if coefficients is None:
            coefficients = np.ones(n)
        return sp.block_diag([c * op for c in coefficients], format='csr')

    def weight_matrix(self, n: int) -> sp.dia_matrix:
        return sp.diags(np.tile(self.weights, n))


@dataclass(frozen=True, eq=False)
class Field:
    """n-component function sampled on a Grid; values has shape (n, N)"""
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.shape[1] != self.grid.points:
            raise GridMismatchError(f"field has {values.shape[1]} nodes, grid has {self.grid.points}")
        if not np.all(np.isfinite(values)):
            raise NumericalError("field contains NaN/Inf values")
        object.__setattr__(self, 'values', values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    @classmethod
    def from_flat(cls, grid: Grid, vector: np.ndarray, n: int) -> 'Field':
        return cls(grid, np.asarray(vector, dtype=float).reshape(n, grid.points))

    @classmethod
    def zeros(cls, grid: Grid, n: int) -> 'Field':
        return cls(grid, np.zeros((n, grid.points)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> 'Field':
        return cls(grid, np.atleast_2d(fn(grid.nodes)))

    def component(self, i: int) -> 'Field':
        return Field(self.grid, self.values[i:i + 1])

    def with_values(self, values: np.ndarray) -> 'Field':
        return Field(self.grid, values)

    def _check(self, other: 'Field'):
        if other.grid != self.grid or other.values.shape != self.values.shape:
            raise GridMismatchError("fields live on different grids or have different component counts")

    def __add__(self, other: 'Field') -> 'Field':
        self._check(other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: 'Field') -> 'Field':
        self._check(other)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> 'Field':
        return Field(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> 'Field':
        return Field(self.grid, -self.values)
