#!/usr/bin/env python3
"""
Reaction-Diffusion Kinetics
# dU = [ρ ∂_xx U + f(U)] dt + σ g(U) dβ_t
# Model bundles ρ, f, Df, D²f[v,v], g, Dg and the rest states u_±
# Cutoffs: χ_low, χ_high with quintic smoothstep transitions (C²)
"""

from dataclasses import dataclass, field
from typing import Callable, Dict

import numpy as np

from lib.errors import ParameterError

# All callables act column-wise on arrays of shape (n, N):
#   reaction(u) -> (n, N), reaction_jac(u) -> (n, n, N), reaction_hess_dir(u, v) -> (n, N)
ArrayMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Model:
    """
    # Reaction-diffusion system (HDt)/(HSt)
    # ρ = diag(ρ_i) > 0,  f(u_±) = g(u_±) = 0
    """
    name: str
    n: int
    rho: np.ndarray
    reaction: ArrayMap
    reaction_jac: ArrayMap
    reaction_hess_dir: Callable[[np.ndarray, np.ndarray], np.ndarray]
    noise: ArrayMap
    noise_jac: ArrayMap
    u_minus: np.ndarray
    u_plus: np.ndarray
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.asarray(self.rho) <= 0):
            raise ParameterError('rho', list(self.rho), 'all diagonal diffusion coefficients > 0')


def smoothstep(t: np.ndarray) -> np.ndarray:
    """S(t) = 6t⁵ - 15t⁴ + 10t³ on [0, 1], clamped outside"""
    t = np.clip(t, 0.0, 1.0)
    return t ** 3 * (10.0 + t * (-15.0 + 6.0 * t))


def smoothstep_prime(t: np.ndarray) -> np.ndarray:
    inside = (t > 0.0) & (t < 1.0)
    t = np.clip(t, 0.0, 1.0)
    return np.where(inside, 30.0 * t ** 2 * (1.0 - t) ** 2, 0.0)


@dataclass(frozen=True)
class Cutoffs:
    """
    # χ_low: ℝ → [1/4, ∞),   χ_low(θ) = 1/4 (θ ≤ 1/4),  θ (θ ≥ 1/2)
    # χ_high: ℝ → [-K-1, K+1], χ_high(θ) = θ (|θ| ≤ K),  sign(θ)(K+1) (|θ| ≥ K+1)
    """
    k_high: float = 100.0

    def chi_low(self, theta):
        theta = np.asarray(theta, dtype=float)
        s = (theta - 0.25) / 0.25
        # 1/4 + (1/4)·s·S(s) on the transition, identity beyond
        blend = 0.25 + 0.25 * np.clip(s, 0.0, 1.0) * smoothstep(s)
        return _scalar(np.where(theta >= 0.5, theta, blend))

    def chi_low_prime(self, theta):
        theta = np.asarray(theta, dtype=float)
        s = (theta - 0.25) / 0.25
        sc = np.clip(s, 0.0, 1.0)
        blend = smoothstep(s) + sc * smoothstep_prime(s)
        return _scalar(np.where(theta >= 0.5, 1.0, blend))

    def chi_high(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = np.clip(np.abs(theta) - self.k_high, 0.0, 1.0)
        # K + r + 5r³ - 10r⁴ + 6r⁵ - r⁶ joins slope 1 to slope 0 and reaches K+1 at r=1
        saturated = self.k_high + r + r ** 3 * (5.0 + r * (-10.0 + r * (6.0 - r)))
        return _scalar(np.where(np.abs(theta) <= self.k_high, theta, np.sign(theta) * saturated))

    def chi_high_prime(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = np.clip(np.abs(theta) - self.k_high, 0.0, 1.0)
        slope = 1.0 - smoothstep(r) + 15.0 * r ** 2 * (1.0 - r) ** 2
        return _scalar(np.where(np.abs(theta) <= self.k_high, 1.0, slope))

    def is_active(self, theta_low: float, theta_high: float) -> bool:
        """True when either cut-off leaves its identity region"""
        return bool(theta_low < 0.5 or abs(theta_high) > self.k_high)


def make_cutoffs(k_high: float = 100.0) -> Cutoffs:
    if k_high < 1:
        raise ParameterError('k_high', k_high, 'K_high >= 1')
    return Cutoffs(k_high=float(k_high))


def _scalar(value: np.ndarray):
    return float(value) if np.ndim(value) == 0 else value


def f_cub(u: np.ndarray, a: float) -> np.ndarray:
    """f_cub(u) = u(1 - u)(u - a)"""
    return u * (1.0 - u) * (u - a)


def f_cub_prime(u: np.ndarray, a: float) -> np.ndarray:
    return -3.0 * u ** 2 + 2.0 * (1.0 + a) * u - a


def f_cub_second(u: np.ndarray, a: float) -> np.ndarray:
    return -6.0 * u + 2.0 * (1.0 + a)


@dataclass(frozen=True)
class NagumoKinetics:
    """Scalar bistable Nagumo: f = f_cub, g(u) = u(1 - u)"""
    a: float

    def reaction(self, u):
        return f_cub(u, self.a)

    def reaction_jac(self, u):
        return f_cub_prime(u, self.a)[:, None, :]

    def reaction_hess_dir(self, u, v):
        return f_cub_second(u, self.a) * v ** 2

    def noise(self, u):
        return u * (1.0 - u)

    def noise_jac(self, u):
        return (1.0 - 2.0 * u)[:, None, :]


def noise_bump(u: np.ndarray) -> np.ndarray:
    """χ(u): 1 on |u| ≤ 2, 0 on |u| ≥ 3"""
    return 1.0 - smoothstep(np.abs(u) - 2.0)


def noise_bump_prime(u: np.ndarray) -> np.ndarray:
    return -smoothstep_prime(np.abs(u) - 2.0) * np.sign(u)


@dataclass(frozen=True)
class FitzHughNagumoKinetics:
    """
    # f(u, w) = (f_cub(u) - w, ε(u - γw)),  ρ = diag(1, ϱ)
    # noise acts on the u-component only
    """
    a: float
    eps: float
    gamma: float
    noise_kind: str = 'linear_u'

    def reaction(self, u):
        uu, ww = u[0], u[1]
        return np.stack([f_cub(uu, self.a) - ww, self.eps * (uu - self.gamma * ww)])

    def reaction_jac(self, u):
        uu = u[0]
        jac = np.empty((2, 2, uu.shape[-1]))
        jac[0, 0] = f_cub_prime(uu, self.a)
        jac[0, 1] = -1.0
        jac[1, 0] = self.eps
        jac[1, 1] = -self.eps * self.gamma
        return jac

    def reaction_hess_dir(self, u, v):
        return np.stack([f_cub_second(u[0], self.a) * v[0] ** 2, np.zeros_like(v[1])])

    def noise(self, u):
        uu = u[0]
        if self.noise_kind == 'linear_u':
            gu = uu
        else:
            gu = noise_bump(uu) * uu * (1.0 - uu)
        return np.stack([gu, np.zeros_like(uu)])

    def noise_jac(self, u):
        uu = u[0]
        jac = np.zeros((2, 2, uu.shape[-1]))
        if self.noise_kind == 'linear_u':
            jac[0, 0] = 1.0
        else:
            jac[0, 0] = noise_bump_prime(uu) * uu * (1.0 - uu) + noise_bump(uu) * (1.0 - 2.0 * uu)
        return jac


NOISE_KINDS = ('linear_u', 'cubic_cutoff')


def fhn_model(a: float = 0.1, eps: float = 0.01, gamma: float = 5.0, rho2: float = 0.01,
              noise_kind: str = 'linear_u') -> Model:
    if not 0.0 < a < 1.0:
        raise ParameterError('a', a, '0 < a < 1')
    if not eps > 0:
        raise ParameterError('eps', eps, 'eps > 0')
    if not gamma > 0:
        raise ParameterError('gamma', gamma, 'gamma > 0')
    if not rho2 > 0:
        raise ParameterError('rho2', rho2, 'rho2 > 0')
    if noise_kind not in NOISE_KINDS:
        raise ParameterError('noise_kind', noise_kind, f"one of {NOISE_KINDS}")

    kinetics = FitzHughNagumoKinetics(a=a, eps=eps, gamma=gamma, noise_kind=noise_kind)
    return Model(
        name='fhn', n=2, rho=np.array([1.0, rho2]),
        reaction=kinetics.reaction, reaction_jac=kinetics.reaction_jac,
        reaction_hess_dir=kinetics.reaction_hess_dir,
        noise=kinetics.noise, noise_jac=kinetics.noise_jac,
        u_minus=np.zeros(2), u_plus=np.zeros(2),
        params={'a': a, 'eps': eps, 'gamma': gamma, 'rho2': rho2, 'noise_kind': noise_kind},
    )


def nagumo_model(a: float = 0.1) -> Model:
    # a = 1/2 is admitted: the standing front
    if not 0.0 < a <= 0.5:
        raise ParameterError('a', a, '0 < a <= 1/2')
    kinetics = NagumoKinetics(a=a)
    return Model(
        name='nagumo', n=1, rho=np.array([1.0]),
        reaction=kinetics.reaction, reaction_jac=kinetics.reaction_jac,
        reaction_hess_dir=kinetics.reaction_hess_dir,
        noise=kinetics.noise, noise_jac=kinetics.noise_jac,
        u_minus=np.ones(1), u_plus=np.zeros(1),
        params={'a': a},
    )


def nagumo_front(xi: np.ndarray) -> np.ndarray:
    """Closed-form front Φ(ξ) = (1 + e^{ξ/√2})⁻¹ joining u_- = 1 to u_+ = 0"""
    return 0.5 * (1.0 - np.tanh(xi / (2.0 * np.sqrt(2.0))))


def nagumo_speed(a: float) -> float:
    return float(np.sqrt(2.0) * (0.5 - a))


def build_model(name: str, **params) -> Model:
    if name == 'fhn':
        return fhn_model(**params)
    if name == 'nagumo':
        return nagumo_model(a=params.get('a', 0.1))
    raise ParameterError('model.name', name, "'fhn' or 'nagumo'")
