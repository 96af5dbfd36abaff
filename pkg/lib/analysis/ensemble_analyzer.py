#!/usr/bin/env python3
"""
Monte Carlo Ensemble Analyzer
# E[Γ(t) - c_σt] estimated from Γ(t) - c_σt - σ b(Φ_σ,ψ_tw) β_t on the same Brownian path
# c^od_obs = (2/T) ∫_{T/2}^{T} E[Γ(t) - c_σt] / t dt
# p_ε(T, η) = P(sup_t N_ε(t) > η), Wilson 95% interval
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import psutil
from scipy.integrate import trapezoid
from tqdm import tqdm

from lib.errors import BlowUpError, InsufficientDataError, NumericalError, ParameterError
from lib.services.simulation_service import PathRecord, SimConfig, SimulationService

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
Z95 = 1.959963984540054


def derive_seed(base_seed: int, index: int) -> int:
    """SplitMix64 mix of (base_seed, index); distinct indices give distinct seeds"""
    z = (int(base_seed) + (int(index) + 1) * 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def wilson_interval(successes: int, trials: int, z: float = Z95) -> Tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1.0 + z ** 2 / trials
    centre = (p + z ** 2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z ** 2 / (4 * trials ** 2)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(eq=False)
class EnsembleStats:
    times: np.ndarray
    mean_drift: np.ndarray
    sem_drift: np.ndarray
    n_paths: int
    c_od_obs: float
    p_eps_estimate: float
    fingerprint: Optional[str] = None
    c_od_obs_ci: Tuple[float, float] = (float('nan'), float('nan'))
    p_eps_ci: Tuple[float, float] = (0.0, 1.0)
    eta: float = float('nan')
    horizon: float = float('nan')
    sigma: float = 0.0
    sup_neps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    path_drifts: np.ndarray = field(default_factory=lambda: np.zeros(0))
    raw_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    raw_sem: np.ndarray = field(default_factory=lambda: np.zeros(0))
    correction_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    correction_sem: np.ndarray = field(default_factory=lambda: np.zeros(0))
    excluded: List[int] = field(default_factory=list)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({'t': self.times, 'mean_drift': self.mean_drift, 'sem_drift': self.sem_drift,
                             'raw_mean': self.raw_mean, 'raw_sem': self.raw_sem})

    def summary(self) -> Dict:
        return {
            'sigma': self.sigma,
            'n_paths': self.n_paths,
            'n_excluded': len(self.excluded),
            'excluded': list(self.excluded),
            'horizon': self.horizon,
            'c_od_obs': self.c_od_obs,
            'c_od_obs_ci': list(self.c_od_obs_ci),
            'eta': self.eta,
            'p_eps': self.p_eps_estimate,
            'p_eps_ci': list(self.p_eps_ci),
            'mean_sup_neps': float(self.sup_neps.mean()) if self.sup_neps.size else float('nan'),
            'fingerprint': self.fingerprint,
        }


_WORKER_CONFIG: Optional[SimConfig] = None


def _init_worker(cfg: SimConfig):
    global _WORKER_CONFIG
    _WORKER_CONFIG = cfg


def _run_job(job: Tuple[int, int]):
    index, seed = job
    try:
        return index, SimulationService.run_path(_WORKER_CONFIG, seed), None
    except BlowUpError as exc:
        return index, None, exc.to_dict()


class EnsembleAnalyzer:
    """Runs seeded path ensembles and turns them into drift and stability estimates"""

    def __init__(self, workers: Optional[int] = None, show_progress: bool = True,
                 max_excluded_fraction: float = 0.01):
        self.workers = workers or psutil.cpu_count(logical=False) or 1
        self.show_progress = show_progress
        self.max_excluded_fraction = max_excluded_fraction

    def run_paths(self, cfg: SimConfig, n_paths: int, base_seed: int) -> Tuple[List[PathRecord], List[int]]:
        """Records in path-index order, plus the indices of blown-up paths"""
        jobs = [(i, derive_seed(base_seed, i)) for i in range(n_paths)]
        logger.info(f"🎲 Running {n_paths} paths at σ={cfg.sigma:.4g} on {self.workers} worker(s)")
        if self.workers <= 1:
            _init_worker(cfg)
            results = [_run_job(job) for job in tqdm(jobs, disable=not self.show_progress, desc='paths')]
        else:
            chunk = max(1, n_paths // (4 * self.workers))
            with ProcessPoolExecutor(max_workers=self.workers, initializer=_init_worker,
                                     initargs=(cfg,)) as executor:
                results = list(tqdm(executor.map(_run_job, jobs, chunksize=chunk), total=n_paths,
                                    disable=not self.show_progress, desc='paths'))

        records, excluded = [], []
        for index, record, error in sorted(results, key=lambda item: item[0]):
            if record is None:
                excluded.append(index)
                logger.warning(f"⚠️ Path {index} blew up: {error.get('message')}")
            else:
                records.append(record)
        if excluded:
            fraction = len(excluded) / n_paths
            if fraction >= self.max_excluded_fraction:
                raise NumericalError(f"{len(excluded)} of {n_paths} paths blew up", excluded=str(excluded))
            logger.warning(f"⚠️ Excluding {len(excluded)} blown-up path(s) from the ensemble")
        return records, excluded

    def run_ensemble(self, cfg: SimConfig, n_paths: int, base_seed: int, eta: float = 1e-3,
                     fingerprint: Optional[str] = None) -> EnsembleStats:
        if n_paths < 2:
            raise ParameterError('n_paths', n_paths, 'n_paths >= 2')
        records, excluded = self.run_paths(cfg, n_paths, base_seed)
        stats = self.aggregate(records, cfg, eta=eta, fingerprint=fingerprint)
        stats.excluded = excluded
        return stats

    def aggregate(self, records: Sequence[PathRecord], cfg: SimConfig, eta: float = 1e-3,
                  fingerprint: Optional[str] = None) -> EnsembleStats:
        """Deterministic, index-ordered reduction of path records"""
        if len(records) < 2:
            raise InsufficientDataError(f"need at least 2 surviving paths, have {len(records)}")
        times = records[0].times
        vr = np.stack([r.gamma_vr for r in records])
        raw = np.stack([r.gamma_minus_cst for r in records])
        correction = raw - vr
        count = len(records)

        def mean_sem(block):
            return block.mean(axis=0), block.std(axis=0, ddof=1) / np.sqrt(count)

        mean_drift, sem_drift = mean_sem(vr)
        raw_mean, raw_sem = mean_sem(raw)
        corr_mean, corr_sem = mean_sem(correction)
        horizon = float(times[-1])

        path_drifts = np.array([self.observed_drift_series(times, row, horizon) for row in vr])
        c_od_obs = self.observed_drift_series(times, mean_drift, horizon)
        half = Z95 * path_drifts.std(ddof=1) / np.sqrt(count)

        sup_neps = np.array([r.sup_neps for r in records])
        p_eps, p_ci = self.p_eps_from_sup(sup_neps, eta)
        logger.info(f"📊 c^od_obs={c_od_obs:.5g} ± {half:.2g}, p_ε(η={eta:.3g})={p_eps:.3f}, {count} paths")
        return EnsembleStats(
            times=times, mean_drift=mean_drift, sem_drift=sem_drift, n_paths=count, c_od_obs=c_od_obs,
            p_eps_estimate=p_eps, fingerprint=fingerprint, c_od_obs_ci=(c_od_obs - half, c_od_obs + half),
            p_eps_ci=p_ci, eta=eta, horizon=horizon, sigma=cfg.sigma, sup_neps=sup_neps,
            path_drifts=path_drifts, raw_mean=raw_mean, raw_sem=raw_sem,
            correction_mean=corr_mean, correction_sem=corr_sem,
        )

    @staticmethod
    def observed_drift_series(times: np.ndarray, mean: np.ndarray, T: float) -> float:
        """
        # (2/T) ∫_{T/2}^{T} m(t)/t dt, endpoints interpolated onto the record
        """
        times = np.asarray(times, dtype=float)
        mean = np.asarray(mean, dtype=float)
        if not T > 0 or T > times[-1] * (1.0 + 1e-12):
            raise InsufficientDataError(f"record ends at t={times[-1]:.4g}, window needs T={T}")
        lo = 0.5 * T
        inside = (times > lo) & (times < T)
        if inside.sum() + 2 < 3:
            raise InsufficientDataError(f"fewer than 3 samples in [{lo:.4g}, {T:.4g}]")
        window = np.concatenate([[lo], times[inside], [T]])
        values = np.interp(window, times, mean) / window
        return float(2.0 / T * trapezoid(values, window))

    @staticmethod
    def observed_drift(stats: EnsembleStats, T: float) -> float:
        return EnsembleAnalyzer.observed_drift_series(stats.times, stats.mean_drift, T)

    @staticmethod
    def p_eps_from_sup(sup_neps: np.ndarray, eta: float) -> Tuple[float, Tuple[float, float]]:
        exceed = int(np.sum(np.asarray(sup_neps) > eta))
        trials = int(np.size(sup_neps))
        return (exceed / trials if trials else 0.0), wilson_interval(exceed, trials)

    def estimate_p_eps(self, cfg: SimConfig, n_paths: int, eta: float,
                       base_seed: int) -> Tuple[float, Tuple[float, float]]:
        records, _ = self.run_paths(cfg, n_paths, base_seed)
        return self.p_eps_from_sup(np.array([r.sup_neps for r in records]), eta)

    def sweep(self, config_for_sigma: Callable[[float], SimConfig], sigmas: Sequence[float], n_paths: int,
              base_seed: int, c0: float, c02: float, c_od_leading: float,
              eta: float = 1e-3) -> pd.DataFrame:
        """
        # Rows: sigma, c_sigma_minus_c0, prediction_c02_sigma2, c_od_obs, prediction_cod_sigma2
        """
        rows = []
        for sigma in tqdm(list(sigmas), disable=not self.show_progress, desc='sigma sweep'):
            cfg = config_for_sigma(float(sigma))
            stats = self.run_ensemble(cfg, n_paths, base_seed, eta=eta)
            rows.append({
                'sigma': float(sigma),
                'c_sigma_minus_c0': cfg.swave.speed - c0,
                'prediction_c02_sigma2': sigma ** 2 * c02,
                'c_od_obs': stats.c_od_obs,
                'c_od_obs_lo': stats.c_od_obs_ci[0],
                'c_od_obs_hi': stats.c_od_obs_ci[1],
                'prediction_cod_sigma2': sigma ** 2 * c_od_leading,
                'mean_sup_neps': float(stats.sup_neps.mean()),
                'p_eps': stats.p_eps_estimate,
            })
        return pd.DataFrame(rows)

    @staticmethod
    def stability_scaling(table: pd.DataFrame) -> pd.DataFrame:
        """mean sup N_ε / σ² per row; a flat column indicates σ² scaling"""
        scaled = table.copy()
        scaled['sup_neps_over_sigma2'] = scaled['mean_sup_neps'] / scaled['sigma'] ** 2
        reference = scaled['sup_neps_over_sigma2'].iloc[0]
        scaled['scaling_ratio'] = scaled['sup_neps_over_sigma2'] / reference
        return scaled
