#!/usr/bin/env python3
"""
Configuration Service
# Loads YAML/JSON run files, validates them into RunConfig and provides the CLI parser
# fingerprint = sha256(canonical JSON)[:16]
"""

import argparse
import copy
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import pydantic
import yaml

from lib.errors import ConfigError
from models.run_models import RunConfig

FIGURES = ('1a', '1b', '2', '3a', '3b')

# flag dest → dotted config key
OVERRIDES = {
    'model': 'model.name',
    'a': 'model.a',
    'eps_model': 'model.eps',
    'gamma': 'model.gamma',
    'rho2': 'model.rho2',
    'noise_kind': 'model.noise_kind',
    'half_length': 'grid.half_length',
    'points': 'grid.points',
    'sigma': 'stochastic.sigma',
    'dt': 'stochastic.dt',
    't_end': 'stochastic.t_end',
    'eta': 'stochastic.eta',
    'paths': 'ensemble.paths',
    'seed': 'ensemble.seed',
    'workers': 'ensemble.workers',
    'sigmas': 'ensemble.sigmas',
    'output': 'output.directory',
    'log_level': 'logging.level',
}


class ConfigService:
    """Service for configuration management"""

    @staticmethod
    def load_config(config_path: str) -> dict:
        """Load a YAML (or JSON) configuration file; failures are validation errors"""
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}", path=str(path))
        try:
            with open(path, 'r') as f:
                config = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse config {path}: {e}", path=str(path)) from e
        if config is None:
            return {}
        if not isinstance(config, dict):
            raise ConfigError(f"config {path} must be a mapping at top level", path=str(path))
        return config

    @staticmethod
    def apply_overrides(raw: Dict[str, Any], overrides: Optional[Dict[str, Any]]) -> Dict[str, Any]:
        """Dotted keys ('stochastic.sigma') set nested values; None leaves the entry alone"""
        merged = copy.deepcopy(raw)
        for dotted, value in (overrides or {}).items():
            if value is None:
                continue
            node = merged
            *parents, leaf = dotted.split('.')
            for key in parents:
                child = node.setdefault(key, {})
                if not isinstance(child, dict):
                    raise ConfigError(f"config section '{key}' must be a mapping", key=dotted)
                node = child
            node[leaf] = value
        return merged

    @staticmethod
    def build_run_config(raw: Optional[Dict[str, Any]] = None,
                         overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        merged = ConfigService.apply_overrides(raw or {}, overrides)
        try:
            return RunConfig.model_validate(merged)
        except pydantic.ValidationError as e:
            errors = [{'loc': '.'.join(str(p) for p in err['loc']), 'msg': err['msg']} for err in e.errors()]
            raise ConfigError(f"invalid run configuration ({len(errors)} error(s))", errors=errors) from e

    @staticmethod
    def echo_config(cfg: RunConfig) -> str:
        """Fully-defaulted, key-sorted canonical JSON"""
        return json.dumps(cfg.model_dump(mode='json'), sort_keys=True, separators=(',', ':'))

    @staticmethod
    def fingerprint(cfg: RunConfig) -> str:
        return hashlib.sha256(ConfigService.echo_config(cfg).encode('utf-8')).hexdigest()[:16]

    @staticmethod
    def parse_config_text(text: str) -> RunConfig:
        return ConfigService.build_run_config(json.loads(text))

    @staticmethod
    def setup_logging(level: str = 'INFO'):
        """Root logger on stderr; stdout stays reserved for JSON results"""
        root = logging.getLogger()
        for handler in list(root.handlers):
            root.removeHandler(handler)
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter('%(asctime)s %(levelname)s %(name)s: %(message)s', '%H:%M:%S'))
        root.addHandler(handler)
        root.setLevel(getattr(logging, level.upper(), logging.INFO))

    @staticmethod
    def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
        return {key: getattr(args, dest) for dest, key in OVERRIDES.items() if hasattr(args, dest)}

    @staticmethod
    def build_parser() -> argparse.ArgumentParser:
        """Parse wavelab arguments"""
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument('--config', type=str, help='Run configuration file (YAML or JSON)')
        common.add_argument('--model', type=str, choices=['fhn', 'nagumo'], help='Reaction-diffusion model')
        common.add_argument('--a', type=float, help='Threshold parameter a')
        common.add_argument('--eps-model', dest='eps_model', type=float, help='FHN recovery rate ε')
        common.add_argument('--gamma', type=float, help='FHN decay γ')
        common.add_argument('--rho2', type=float, help='FHN second diffusion ϱ')
        common.add_argument('--noise-kind', dest='noise_kind', choices=['linear_u', 'cubic_cutoff'])
        common.add_argument('--half-length', dest='half_length', type=float, help='Domain half-length L')
        common.add_argument('--points', type=int, help='Grid points N')
        common.add_argument('--sigma', type=float, help='Noise strength σ')
        common.add_argument('--dt', type=float, help='Simulation time step')
        common.add_argument('--t-end', dest='t_end', type=float, help='Simulation horizon')
        common.add_argument('--eta', type=float, help='Stability threshold η')
        common.add_argument('--paths', type=int, help='Ensemble size')
        common.add_argument('--seed', type=int, help='Base seed')
        common.add_argument('--workers', type=int, help='Worker processes')
        common.add_argument('--sigmas', type=float, nargs='+', help='σ list for sweeps')
        common.add_argument('--output', type=str, help='Output directory')
        common.add_argument('--log-level', dest='log_level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])

        parser = argparse.ArgumentParser(prog='wavelab', description='Stochastic traveling-wave laboratory')
        groups = parser.add_subparsers(dest='command', required=True)

        wave = groups.add_parser('wave', help='Deterministic and stochastic wave profiles')
        wave_cmds = wave.add_subparsers(dest='action', required=True)
        wave_cmds.add_parser('solve', parents=[common], help='Solve for (Φ₀, c₀)')
        wave_cmds.add_parser('spectrum', parents=[common], help='Spectral certificate of L_tw')
        wave_cmds.add_parser('stochastic-profile', parents=[common], help='Solve for (Φ_σ, c_σ)')

        drift = groups.add_parser('drift', help='Orbital drift prediction')
        drift_cmds = drift.add_subparsers(dest='action', required=True)
        drift_cmds.add_parser('predict', parents=[common], help='c^od_σ;2, c^od_0;2 and c_lim')

        sim = groups.add_parser('sim', help='Single SPDE path')
        sim_cmds = sim.add_subparsers(dest='action', required=True)
        sim_cmds.add_parser('run', parents=[common], help='Simulate one path')

        ensemble = groups.add_parser('ensemble', help='Monte Carlo ensembles')
        ensemble_cmds = ensemble.add_subparsers(dest='action', required=True)
        ensemble_cmds.add_parser('run', parents=[common], help='Ensemble at one σ')
        ensemble_cmds.add_parser('sweep', parents=[common], help='Ensembles over the σ list')
        ensemble_cmds.add_parser('stability', parents=[common], help='p_ε over the σ list')

        diagnostics = groups.add_parser('diagnostics', help='Semigroup diagnostics')
        diagnostics_cmds = diagnostics.add_subparsers(dest='action', required=True)
        diagnostics_cmds.add_parser('semigroup', parents=[common], help='‖S(t)Q‖ and Λ(t) probes')

        figure = groups.add_parser('reproduce-figure', parents=[common], help='Plot-ready data for a figure')
        figure.add_argument('figure', choices=FIGURES)
        figure.add_argument('--full', action='store_true', help='Publication-scale ensemble sizes (1000 paths)')
        return parser
