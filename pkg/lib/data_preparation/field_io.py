#!/usr/bin/env python3
"""
Field and Record I/O
# Field CSV: xi,c1,...,cn, one row per node, 17 significant digits
# PathRecord / EnsembleStats / tables: plain CSV with a header row
"""

import json
import logging
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd

from lib.errors import ConfigError, GridMismatchError
from lib.models.grid import Field, Grid

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'
PathLike = Union[str, Path]


class FieldIO:
    """Readers and writers for everything the pipeline leaves on disk"""

    @staticmethod
    def field_frame(field: Field) -> pd.DataFrame:
        columns = {'xi': field.grid.nodes}
        for i in range(field.n):
            columns[f'c{i + 1}'] = field.values[i]
        return pd.DataFrame(columns)

    @staticmethod
    def write_field(path: PathLike, field: Field) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        FieldIO.field_frame(field).to_csv(path, index=False, float_format=FLOAT_FORMAT)
        return path

    @staticmethod
    def read_field(path: PathLike, grid: Optional[Grid] = None) -> Field:
        """Reads a Field CSV; the grid is rebuilt from the ξ column unless one is given"""
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"field file not found: {path}", path=str(path))
        frame = pd.read_csv(path)
        if 'xi' not in frame.columns:
            raise ConfigError(f"field file {path} has no 'xi' column", path=str(path))
        xi = frame['xi'].to_numpy()
        if grid is None:
            grid = Grid(half_length=float(-xi[0]), points=len(xi))
        elif len(xi) != grid.points or not np.allclose(xi, grid.nodes, rtol=0, atol=1e-9 * grid.half_length):
            raise GridMismatchError(f"field file {path} does not match the configured grid")
        components = [c for c in frame.columns if c != 'xi']
        return Field(grid, frame[components].to_numpy().T)

    @staticmethod
    def write_table(path: PathLike, table: Union[pd.DataFrame, Dict[str, np.ndarray]]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = table if isinstance(table, pd.DataFrame) else pd.DataFrame(table)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        return path

    @staticmethod
    def write_path_record(path: PathLike, record) -> Path:
        return FieldIO.write_table(path, record.series())

    @staticmethod
    def write_snapshots(directory: PathLike, record, grid: Grid, stem: str, suffix: str = '') -> list:
        """One CSV per snapshot time, named <stem>-t<time><suffix>.csv: xi plus each frame's components"""
        written = []
        for t, frames in sorted(record.snapshots.items()):
            table = {'xi': grid.nodes}
            for name, values in frames.items():
                for i in range(values.shape[0]):
                    table[f'{name}_c{i + 1}'] = values[i]
            written.append(FieldIO.write_table(Path(directory) / f'{stem}-t{t:g}{suffix}.csv', table))
        return written

    @staticmethod
    def write_ensemble_stats(path: PathLike, stats) -> Path:
        return FieldIO.write_table(path, stats.frame())

    @staticmethod
    def write_json(path: PathLike, payload: Dict) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        text = json.dumps(payload, indent=2, sort_keys=True, default=json_default)
        path.write_text(text + '\n', encoding='utf-8')
        return path


def json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, complex):
        return {'re': value.real, 'im': value.imag}
    raise TypeError(f"not JSON serializable: {type(value).__name__}")
