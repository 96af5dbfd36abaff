"""
Run Configuration Schema
# RunConfig = {model, grid, solver, stochastic, semigroup, ensemble, output, logging}
# Unknown keys are rejected in every section; every default is materialized on validation
"""

from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

GRID_DEFAULTS = {
    'fhn': {'half_length': 60.0, 'points': 3072},
    'nagumo': {'half_length': 40.0, 'points': 2048},
}


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class ModelSection(_Section):
      name                   : Literal['fhn', 'nagumo'] = 'fhn'
      a                      : float = Field(0.1, gt=0.0, lt=1.0)
      eps                    : float = Field(0.01, gt=0.0)
      gamma                  : float = Field(5.0, gt=0.0)
      rho2                   : float = Field(0.01, gt=0.0)
      noise_kind             : Literal['linear_u', 'cubic_cutoff'] = 'linear_u'
      k_high                 : float = Field(100.0, ge=1.0)


class GridSection(_Section):
      half_length            : Optional[float] = Field(None, gt=0.0)
      points                 : Optional[int] = Field(None, ge=16)


class SolverSection(_Section):
      newton_tol             : float = Field(1e-10, gt=0.0)
      max_iters              : int = Field(50, ge=1)
      relax_dt               : float = Field(0.5, gt=0.0)
      relax_t_max            : float = Field(600.0, gt=0.0)
      relax_tol              : float = Field(1e-5, gt=0.0)
      seed_eps               : Optional[float] = Field(0.02, gt=0.0)   # null solves directly at ε
      eps_continuation_steps : int = Field(8, ge=1)
      sigma_continuation_steps: int = Field(8, ge=1)
      num_eigs               : int = Field(40, ge=2)
      dense_limit            : int = Field(4096, ge=0)


class StochasticSection(_Section):
      sigma                  : float = Field(0.05, ge=0.0)
      sigma_max              : float = Field(0.15, ge=0.0)
      dt                     : float = Field(1e-3, gt=0.0)
      t_end                  : float = Field(10.0, gt=0.0)
      eps                    : float = Field(0.01, gt=0.0)
      eta                    : float = Field(1e-3, gt=0.0)
      record_stride          : int = Field(100, ge=1)
      recenter_fraction      : float = Field(0.25, gt=0.0, lt=0.5)
      snapshot_times         : List[float] = Field(default_factory=list)


class SemigroupSection(_Section):
      dt                     : float = Field(1e-2, gt=0.0)
      sample_every           : float = Field(0.05, gt=0.0)
      quad_tol               : float = Field(1e-6, gt=0.0)
      s_max_cap              : float = Field(2000.0, gt=0.0)
      probes                 : int = Field(3, ge=1)
      power_iterations       : int = Field(12, ge=1)
      diagnostic_times       : List[float] = Field(default_factory=lambda: [0.25, 0.5, 1.0, 2.0, 4.0, 6.0, 8.0, 10.0])


class EnsembleSection(_Section):
      paths                  : int = Field(100, ge=2)
      seed                   : int = Field(12345, ge=0)
      workers                : Optional[int] = Field(None, ge=1)
      sigmas                 : List[float] = Field(default_factory=lambda: [0.05, 0.10, 0.15])
      window_t               : Optional[float] = Field(None, gt=0.0)


class OutputSection(_Section):
      directory              : str = 'outputs'
      formats                : List[Literal['csv', 'json', 'gnuplot', 'html']] = Field(
                                   default_factory=lambda: ['csv', 'json', 'gnuplot'])


class LoggingSection(_Section):
      level                  : Literal['DEBUG', 'INFO', 'WARNING', 'ERROR'] = 'INFO'


class RunConfig(_Section):
      schema_version         : Literal[1] = 1
      model                  : ModelSection = Field(default_factory=ModelSection)
      grid                   : GridSection = Field(default_factory=GridSection)
      solver                 : SolverSection = Field(default_factory=SolverSection)
      stochastic             : StochasticSection = Field(default_factory=StochasticSection)
      semigroup              : SemigroupSection = Field(default_factory=SemigroupSection)
      ensemble               : EnsembleSection = Field(default_factory=EnsembleSection)
      output                 : OutputSection = Field(default_factory=OutputSection)
      logging                : LoggingSection = Field(default_factory=LoggingSection)

      @model_validator(mode='after')
      def _materialize_grid(self) -> 'RunConfig':
          defaults = GRID_DEFAULTS[self.model.name]
          missing = {k: v for k, v in defaults.items() if getattr(self.grid, k) is None}
          if missing:
              self.grid = self.grid.model_copy(update=missing)
          if self.model.name == 'nagumo' and self.model.a > 0.5:
              raise ValueError('model.a must satisfy 0 < a <= 1/2 for the nagumo model')
          return self
