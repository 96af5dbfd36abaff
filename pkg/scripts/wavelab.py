#!/usr/bin/env python3
"""
Wavelab Command Line
# wave → spectrum / ψ_tw → stochastic wave → drift prediction → simulation → ensemble
# Exit codes: 0 ok, 1 validation error, 2 numerical failure (JSON payload on stderr)
"""

import json
import logging
import os
import sys
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid

# Add project root to path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from lib.analysis.decay_analyzer import DecayAnalyzer
from lib.analysis.ensemble_analyzer import EnsembleAnalyzer
from lib.data_preparation.field_io import FieldIO, json_default
from lib.errors import WaveLabError
from lib.models.grid import Field, Grid
from lib.models.kinetics import build_model, make_cutoffs
from lib.models.waves import StochasticWave
from lib.services.config_service import ConfigService
from lib.services.semigroup_service import DriftQuadrature, Propagator, SemigroupService
from lib.services.simulation_service import SimConfig, SimulationService
from lib.services.stochastic_wave_service import StochasticWaveService
from lib.services.visualization_service import VisualizationService
from lib.services.wave_service import WaveService
from models.run_models import RunConfig
from utils.filename_utils import config_path, output_path

logger = logging.getLogger('wavelab')

FULL_PATHS = 1000
FIGURE_1A_POINTS = 15


class Lab:
    """
    # One validated RunConfig and the lazily computed pipeline artifacts it implies
    """

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.fingerprint = ConfigService.fingerprint(cfg)
        self.root = Path(cfg.output.directory)
        self._swaves: Dict[float, StochasticWave] = {}

    # ------------------------------------------------------------------ outputs

    def path(self, stage: str, name: str, ext: str) -> Path:
        return output_path(self.root, self.fingerprint, stage, name, ext)

    def write_config(self) -> Path:
        target = config_path(self.root, self.fingerprint)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(ConfigService.echo_config(self.cfg) + '\n', encoding='utf-8')
        return target

    def write_summary(self, stage: str, payload: Dict) -> Dict:
        payload = {**payload, 'fingerprint': self.fingerprint}
        if 'json' in self.cfg.output.formats:
            FieldIO.write_json(self.path(stage, 'summary', 'json'), payload)
        return payload

    # ------------------------------------------------------------------ artifacts

    @cached_property
    def model(self):
        m = self.cfg.model
        if m.name == 'nagumo':
            return build_model('nagumo', a=m.a)
        return build_model('fhn', a=m.a, eps=m.eps, gamma=m.gamma, rho2=m.rho2, noise_kind=m.noise_kind)

    @cached_property
    def grid(self) -> Grid:
        return Grid(half_length=self.cfg.grid.half_length, points=self.cfg.grid.points)

    @cached_property
    def cutoffs(self):
        return make_cutoffs(self.cfg.model.k_high)

    @cached_property
    def wave(self):
        s = self.cfg.solver
        return WaveService.compute_wave(self.model, self.grid, tol=s.newton_tol, max_iters=s.max_iters,
                                        relax_dt=s.relax_dt, relax_t_max=s.relax_t_max, relax_tol=s.relax_tol,
                                        seed_eps=s.seed_eps, eps_continuation_steps=s.eps_continuation_steps)

    @cached_property
    def adjoint(self):
        return WaveService.adjoint_eigenfunction(self.model, self.grid, self.wave)

    @property
    def psi(self) -> Field:
        return self.adjoint.psi

    @cached_property
    def spectrum(self):
        s = self.cfg.solver
        return WaveService.spectrum(self.model, self.grid, self.wave, num_eigs=s.num_eigs,
                                    dense_limit=s.dense_limit)

    @cached_property
    def expansion(self):
        return StochasticWaveService.speed_expansion(self.model, self.grid, self.wave, self.psi, self.cutoffs)

    @cached_property
    def propagator(self) -> Propagator:
        return Propagator.from_wave(self.model, self.grid, self.wave, dt=self.cfg.semigroup.dt)

    @cached_property
    def quadrature(self) -> DriftQuadrature:
        sg = self.cfg.semigroup
        return DriftQuadrature(dt=sg.sample_every, tol=sg.quad_tol, s_max_cap=sg.s_max_cap)

    @cached_property
    def leading_drift(self):
        return SemigroupService.orbital_drift_leading(self.model, self.grid, self.wave, self.psi, self.propagator,
                                                      self.spectrum.gap_beta, self.quadrature, self.cutoffs)

    def swave(self, sigma: float) -> StochasticWave:
        key = abs(float(sigma))
        if key not in self._swaves:
            self._swaves[key] = StochasticWaveService.solve_stochastic_wave(
                self.model, self.grid, self.wave, self.psi, key, self.cutoffs,
                continuation_steps=self.cfg.solver.sigma_continuation_steps,
                tol=self.cfg.solver.newton_tol, max_iters=self.cfg.solver.max_iters)
        return self._swaves[key]

    def sim_config(self, sigma: float, snapshot_times: Sequence[float] = ()) -> SimConfig:
        st = self.cfg.stochastic
        return SimConfig(model=self.model, grid=self.grid, swave=self.swave(sigma), psi=self.psi,
                         sigma=abs(float(sigma)), dt=st.dt, t_end=st.t_end, eps=st.eps,
                         record_stride=st.record_stride, cutoffs=self.cutoffs, c0=self.wave.speed,
                         gap_beta=self.spectrum.gap_beta,
                         snapshot_times=tuple(snapshot_times or st.snapshot_times),
                         recenter_fraction=st.recenter_fraction)

    def ensemble_analyzer(self) -> EnsembleAnalyzer:
        return EnsembleAnalyzer(workers=self.cfg.ensemble.workers)


# ---------------------------------------------------------------------- stages

def wave_solve(lab: Lab) -> Dict:
    wave = lab.wave
    if 'csv' in lab.cfg.output.formats:
        FieldIO.write_field(lab.path('wave', 'profile', 'csv'), wave.profile)
    return lab.write_summary('wave', {'model': lab.model.name, **wave.summary()})


def wave_spectrum(lab: Lab) -> Dict:
    report = lab.spectrum
    adjoint = lab.adjoint
    if 'csv' in lab.cfg.output.formats:
        FieldIO.write_field(lab.path('spectrum', 'psi', 'csv'), adjoint.psi)
        FieldIO.write_table(lab.path('spectrum', 'eigenvalues', 'csv'),
                            {'re': report.eigenvalues.real, 'im': report.eigenvalues.imag})
    payload = report.to_dict()
    payload.pop('eigenvalues')
    payload.update({'certifies': report.certifies, 'c0': lab.wave.speed,
                    'psi_normalization_check': adjoint.normalization_check, 'psi_residual': adjoint.residual})
    return lab.write_summary('spectrum', payload)


def wave_stochastic_profile(lab: Lab) -> Dict:
    sigma = lab.cfg.stochastic.sigma
    swave = lab.swave(sigma)
    expansion = lab.expansion
    if 'csv' in lab.cfg.output.formats:
        FieldIO.write_field(lab.path('stochastic-profile', f'sigma{sigma:g}', 'csv'), swave.profile)
        FieldIO.write_field(lab.path('stochastic-profile', 'phi02', 'csv'), expansion.phi02)
    return lab.write_summary('stochastic-profile', {
        'sigma': sigma, 'c0': lab.wave.speed, 'c_sigma': swave.speed,
        'c_sigma_minus_c0': swave.speed - lab.wave.speed, 'c02': expansion.c02,
        'c02_bordered': expansion.c02_bordered, 'prediction_c02_sigma2': sigma ** 2 * expansion.c02,
        'btilde0': expansion.btilde0, 'b_sigma': swave.b_value, 'a_residual': swave.a_residual,
        'continuation_steps': swave.continuation_steps,
    })


def drift_predict(lab: Lab) -> Dict:
    sigma = lab.cfg.stochastic.sigma
    swave = lab.swave(sigma)
    leading = lab.leading_drift
    coefficients = SemigroupService.predict_drift(lab.model, lab.grid, lab.wave, swave, lab.psi, lab.propagator,
                                                  lab.spectrum.gap_beta, lab.quadrature, lab.cutoffs,
                                                  leading=leading)
    limit = SemigroupService.limiting_speed(swave, coefficients.c_od_2, expansion=lab.expansion,
                                            c_od_leading=coefficients.c_od_leading)
    if 'csv' in lab.cfg.output.formats:
        FieldIO.write_table(lab.path('drift', 'integrand', 'csv'),
                            {'s': leading.times, 'integrand': leading.integrand})
    return lab.write_summary('drift', {
        'sigma': sigma, 'c_sigma': swave.speed, 'c_od_2': coefficients.c_od_2,
        'c_od_leading': coefficients.c_od_leading, 'c_lim_2': coefficients.c_lim_2,
        'excess_over_c0': limit.excess_over_c0, 'leading_prediction': limit.leading_prediction,
        'gap_beta': lab.spectrum.gap_beta, 'truncation_time': coefficients.truncation_time,
        'quadrature_error_estimate': coefficients.quadrature_error_estimate,
    })


def sim_run(lab: Lab) -> Dict:
    sigma = lab.cfg.stochastic.sigma
    cfg = lab.sim_config(sigma)
    record = SimulationService.run_path(cfg, lab.cfg.ensemble.seed)
    if 'csv' in lab.cfg.output.formats:
        FieldIO.write_path_record(lab.path('sim', f'path_seed{lab.cfg.ensemble.seed}', 'csv'), record)
        FieldIO.write_snapshots(lab.path('sim', 'snapshots', 'csv').parent, record, lab.grid,
                                'sim_snapshot', f'_{lab.fingerprint}')
    return lab.write_summary('sim', {
        'sigma': sigma, 'seed': lab.cfg.ensemble.seed, 't_end': float(record.times[-1]),
        'gamma_final': float(record.gamma_series[-1]), 'sup_neps': record.sup_neps,
        'cutoff_activations': record.cutoff_activations, **SimulationService.frame_slopes(record),
    })


def ensemble_run(lab: Lab) -> Dict:
    sigma = lab.cfg.stochastic.sigma
    stats = lab.ensemble_analyzer().run_ensemble(lab.sim_config(sigma), lab.cfg.ensemble.paths,
                                                 lab.cfg.ensemble.seed, eta=lab.cfg.stochastic.eta,
                                                 fingerprint=lab.fingerprint)
    summary = stats.summary()
    if lab.cfg.ensemble.window_t is not None:
        summary['c_od_obs_window'] = EnsembleAnalyzer.observed_drift(stats, lab.cfg.ensemble.window_t)
    if 'csv' in lab.cfg.output.formats:
        FieldIO.write_ensemble_stats(lab.path('ensemble', f'stats_sigma{sigma:g}', 'csv'), stats)
        FieldIO.write_table(lab.path('ensemble', f'paths_sigma{sigma:g}', 'csv'),
                            {'sup_neps': stats.sup_neps, 'observed_drift': stats.path_drifts})
    return lab.write_summary('ensemble', summary)


def sweep_table(lab: Lab, sigmas: Sequence[float], n_paths: int) -> pd.DataFrame:
    return lab.ensemble_analyzer().sweep(
        lab.sim_config, sigmas, n_paths, lab.cfg.ensemble.seed, c0=lab.wave.speed,
        c02=lab.expansion.c02, c_od_leading=lab.leading_drift.value, eta=lab.cfg.stochastic.eta)


def ensemble_sweep(lab: Lab) -> Dict:
    table = EnsembleAnalyzer.stability_scaling(sweep_table(lab, lab.cfg.ensemble.sigmas, lab.cfg.ensemble.paths))
    if 'csv' in lab.cfg.output.formats:
        FieldIO.write_table(lab.path('sweep', 'table', 'csv'), table)
    return lab.write_summary('sweep', {'rows': table.to_dict(orient='records')})


def ensemble_stability(lab: Lab) -> Dict:
    """p_ε(T, η) per σ on the same seeds; ordered when each p_ε stays below the next upper bound"""
    analyzer = lab.ensemble_analyzer()
    eta = lab.cfg.stochastic.eta
    rows = []
    for sigma in sorted(lab.cfg.ensemble.sigmas):
        p, (lo, hi) = analyzer.estimate_p_eps(lab.sim_config(sigma), lab.cfg.ensemble.paths, eta,
                                              lab.cfg.ensemble.seed)
        rows.append({'sigma': sigma, 'p_eps': p, 'p_eps_lo': lo, 'p_eps_hi': hi})
    table = pd.DataFrame(rows)
    ordered = bool(np.all(table['p_eps'].to_numpy()[:-1] <= table['p_eps_hi'].to_numpy()[1:]))
    if 'csv' in lab.cfg.output.formats:
        FieldIO.write_table(lab.path('stability', 'table', 'csv'), table)
    return lab.write_summary('stability', {'eta': eta, 'ordered': ordered,
                                           'rows': table.to_dict(orient='records')})

def diagnostics_semigroup(lab: Lab) -> Dict:
    sg = lab.cfg.semigroup
    analyzer = DecayAnalyzer(power_iterations=sg.power_iterations, probes=sg.probes, seed=lab.cfg.ensemble.seed)
    report = analyzer.decay_diagnostics(lab.propagator, lab.psi, lab.wave, sg.diagnostic_times)
    if 'csv' in lab.cfg.output.formats:
        FieldIO.write_table(lab.path('diagnostics', 'semigroup', 'csv'), {
            't': report['times'], 'norm_SQ': report['norm_SQ'], 'norm_Lambda': report['norm_Lambda']})
    predicted = 2.0 * lab.spectrum.gap_beta
    summary = {k: v for k, v in report.items() if k not in ('times', 'norm_SQ', 'norm_Lambda')}
    summary['predicted_rate'] = predicted
    summary['rate_ratio'] = summary['fitted_beta'] / predicted if predicted > 0 else float('nan')
    return lab.write_summary('diagnostics', summary)


# ---------------------------------------------------------------------- figures

def figure_table(lab: Lab, figure: str, full: bool) -> pd.DataFrame:
    if figure == '1a':
        sigmas = np.linspace(0.0, lab.cfg.stochastic.sigma_max, FIGURE_1A_POINTS + 1)[1:]
        rows = StochasticWaveService.stochastic_branch(
            lab.model, lab.grid, lab.wave, lab.psi, sigmas, lab.expansion, lab.cutoffs,
            continuation_steps=lab.cfg.solver.sigma_continuation_steps)
        return pd.DataFrame(rows)[['sigma', 'c_sigma_minus_c0', 'prediction_c02_sigma2', 'c_sigma']]

    if figure == '1b':
        swave = lab.swave(lab.cfg.stochastic.sigma_max)
        table = {'xi': lab.grid.nodes}
        for i in range(lab.model.n):
            table[f'phi0_c{i + 1}'] = lab.wave.profile.values[i]
            table[f'phisigma_c{i + 1}'] = swave.profile.values[i]
        return pd.DataFrame(table)

    if figure == '2':
        t_end = lab.cfg.stochastic.t_end
        cfg = lab.sim_config(lab.cfg.stochastic.sigma, snapshot_times=(t_end,))
        record = SimulationService.run_path(cfg, lab.cfg.ensemble.seed)
        frames = record.snapshots[max(record.snapshots)]
        table = {'xi': lab.grid.nodes}
        for name in ('gamma_frame', 'c_sigma_frame', 'c0_frame'):
            table[f'{name}_c1'] = frames[name][0]
        table['phisigma_c1'] = cfg.swave.profile.values[0]
        slopes = SimulationService.frame_slopes(record, t_min=0.5 * t_end)
        logger.info(f"   frame slopes: mismatch {slopes['phase_mismatch_slope']:.3e}, "
                    f"c₀-frame peak {slopes['peak_c0_slope']:.4g}")
        return pd.DataFrame(table)

    if figure == '3a':
        leading = lab.leading_drift
        # integrand already carries the -1/2 factor
        return pd.DataFrame({'s': leading.times, 'integrand': leading.integrand,
                             'cumulative': cumulative_trapezoid(leading.integrand, leading.times, initial=0.0)})

    n_paths = FULL_PATHS if full else lab.cfg.ensemble.paths
    return sweep_table(lab, lab.cfg.ensemble.sigmas, n_paths)


def reproduce_figure(lab: Lab, figure: str, full: bool) -> Dict:
    table = figure_table(lab, figure, full)
    csv_path = lab.path('figure', figure, 'csv')
    formats = lab.cfg.output.formats
    written = VisualizationService.write_figure(figure, table, csv_path, formats)
    summary = {'figure': figure, 'full': full, 'rows': len(table), 'files': [p.name for p in written]}
    if figure in ('1a', '1b', '3b'):
        summary['c02'] = lab.expansion.c02
    if figure in ('3a', '3b'):
        summary['c_od_leading'] = lab.leading_drift.value
    return lab.write_summary('figure', summary)


STAGES = {
    ('wave', 'solve'): wave_solve,
    ('wave', 'spectrum'): wave_spectrum,
    ('wave', 'stochastic-profile'): wave_stochastic_profile,
    ('drift', 'predict'): drift_predict,
    ('sim', 'run'): sim_run,
    ('ensemble', 'run'): ensemble_run,
    ('ensemble', 'sweep'): ensemble_sweep,
    ('ensemble', 'stability'): ensemble_stability,
    ('diagnostics', 'semigroup'): diagnostics_semigroup,
}


def load_run_config(args) -> RunConfig:
    raw = ConfigService.load_config(args.config) if args.config else {}
    overrides = ConfigService.overrides_from_args(args)
    if getattr(args, 'full', False):
        overrides['ensemble.paths'] = FULL_PATHS
    return ConfigService.build_run_config(raw, overrides)


def emit_error(error: WaveLabError) -> int:
    print(json.dumps(error.to_dict(), default=json_default), file=sys.stderr)
    return error.exit_code


def main(argv: Optional[List[str]] = None) -> int:
    parser = ConfigService.build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1

    ConfigService.setup_logging('INFO')
    try:
        cfg = load_run_config(args)
        ConfigService.setup_logging(cfg.logging.level)
        lab = Lab(cfg)
        logger.info(f"🚀 wavelab {args.command} {getattr(args, 'action', '') or args.figure} "
                    f"(model={cfg.model.name}, fingerprint={lab.fingerprint})")
        lab.write_config()
        if args.command == 'reproduce-figure':
            result = reproduce_figure(lab, args.figure, args.full)
        else:
            result = STAGES[(args.command, args.action)](lab)
    except WaveLabError as error:
        logger.error(f"❌ {error.message}")
        return emit_error(error)

    print(json.dumps(result, default=json_default, sort_keys=True))
    logger.info("✅ Done")
    return 0


if __name__ == "__main__":
    sys.exit(main())
