#!/usr/bin/env python3
"""
Wave Records
# Results passed between the wave, stochastic-wave and semigroup stages
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from lib.models.grid import Field


@dataclass(frozen=True, eq=False)
class WaveSolution:
    """
    # ρΦ₀'' + c₀Φ₀' + f(Φ₀) = 0
    """
    profile: Field
    speed: float
    residual_norm: float
    newton_iters: int
    boundary_deviation: float = 0.0

    def summary(self) -> Dict:
        return {
            'speed': self.speed,
            'residual_norm': self.residual_norm,
            'newton_iters': self.newton_iters,
            'boundary_deviation': self.boundary_deviation,
        }


@dataclass(frozen=True, eq=False)
class SpectralReport:
    """
    # σ(L_tw) on the truncated grid
    # gap_beta: Re λ ≤ -2β for every resolved λ other than zero_eig
    """
    eigenvalues: np.ndarray
    zero_eig: complex
    gap_beta: float
    zero_is_simple: bool
    essential_bound: float

    @property
    def certifies(self) -> bool:
        return bool(self.zero_is_simple and self.gap_beta > 0)

    def to_dict(self) -> Dict:
        return {
            'eigenvalues': [{'re': float(z.real), 'im': float(z.imag)} for z in self.eigenvalues],
            'zero_eig': {'re': float(self.zero_eig.real), 'im': float(self.zero_eig.imag)},
            'gap_beta': float(self.gap_beta),
            'zero_is_simple': bool(self.zero_is_simple),
            'essential_bound': float(self.essential_bound),
        }


@dataclass(frozen=True, eq=False)
class AdjointEigenfunction:
    """
    # L*_tw ψ_tw = 0,  ⟨Φ₀', ψ_tw⟩ = 1
    """
    psi: Field
    normalization_check: float
    residual: float = 0.0
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class StochasticWave:
    """
    # (Φ_σ, c_σ) with a_σ(Φ_σ, c_σ, ψ_tw) = 0
    """
    profile: Field
    speed: float
    sigma: float
    a_residual: float
    residual_norm: float = 0.0
    b_value: float = 0.0
    continuation_steps: int = 0


@dataclass(frozen=True, eq=False)
class SpeedExpansion:
    """
    # Φ_σ = Φ₀ + σ²Φ_{0;2} + O(σ⁴),  c_σ = c₀ + σ²c_{0;2} + O(σ⁴)
    """
    c0: float
    c02: float
    phi02: Field
    btilde0: float
    c02_bordered: float = float('nan')


@dataclass(frozen=True)
class DriftCoefficients:
    """
    # c^od_{σ;2}, c^od_{0;2} and c^(2)_{σ;lim} = c_σ + σ²c^od_{σ;2}
    """
    c_od_2: float
    c_od_leading: float
    c_lim_2: float
    truncation_time: float
    quadrature_error_estimate: float


@dataclass(frozen=True)
class LimitingSpeed:
    c_lim_2: float
    excess_over_c0: float
    leading_prediction: Optional[float] = None


@dataclass(frozen=True, eq=False)
class DriftIntegral:
    """Sampled integrand J(s) of a drift coefficient and its truncated integral"""
    value: float
    times: np.ndarray
    integrand: np.ndarray
    truncation_time: float
    error_estimate: float
    notes: List[str] = field(default_factory=list)
