#!/usr/bin/env python3
"""
Visualization Service
# Plot-ready CSV → gnuplot script (references only the CSV) + plotly HTML preview
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd
import plotly.graph_objects as go

from lib.data_preparation.field_io import FieldIO

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Curve:
    x: str
    y: str
    title: str
    style: str = 'lines'
    error_low: Optional[str] = None
    error_high: Optional[str] = None


@dataclass(frozen=True)
class FigureSpec:
    figure_id: str
    title: str
    xlabel: str
    ylabel: str
    curves: Tuple[Curve, ...]
    logscale_y: bool = False


FIGURE_SPECS: Dict[str, FigureSpec] = {
    '1a': FigureSpec('1a', 'Stochastic speed correction', 'sigma', 'c_sigma - c_0', (
        Curve('sigma', 'c_sigma_minus_c0', 'c_σ - c₀', 'linespoints'),
        Curve('sigma', 'prediction_c02_sigma2', 'σ² c₀;₂', 'lines'),
    )),
    '1b': FigureSpec('1b', 'Deterministic and stochastic wave profiles', 'xi', 'u', (
        Curve('xi', 'phi0_c1', 'Φ₀ (u)'),
        Curve('xi', 'phisigma_c1', 'Φ_σ (u)'),
        Curve('xi', 'phi0_c2', 'Φ₀ (w)'),
        Curve('xi', 'phisigma_c2', 'Φ_σ (w)'),
    )),
    '2': FigureSpec('2', 'Wave in three moving frames', 'xi', 'u', (
        Curve('xi', 'gamma_frame_c1', 'Γ(t) frame'),
        Curve('xi', 'c_sigma_frame_c1', 'c_σ frame'),
        Curve('xi', 'c0_frame_c1', 'c₀ frame'),
        Curve('xi', 'phisigma_c1', 'Φ_σ'),
    )),
    '3a': FigureSpec('3a', 'Orbital drift integrand', 's', 'I(s)', (
        Curve('s', 'integrand', 'I(s)'),
        Curve('s', 'cumulative', '-½∫₀ˢ I'),
    )),
    '3b': FigureSpec('3b', 'Observed orbital drift', 'sigma', 'drift', (
        Curve('sigma', 'c_od_obs', 'c^od_obs (95% CI)', 'yerrorbars', 'c_od_obs_lo', 'c_od_obs_hi'),
        Curve('sigma', 'prediction_cod_sigma2', 'σ² c^od₀;₂', 'lines'),
    )),
}


class VisualizationService:
    """
    # Service for figure data export
    # Input: DataFrame with the columns named in FIGURE_SPECS → Output: csv/gp/html files
    """

    @staticmethod
    def gnuplot_script(spec: FigureSpec, csv_name: str, table: pd.DataFrame, output_name: str) -> str:
        columns = list(table.columns)

        def col(name):
            return columns.index(name) + 1

        lines = [
            f"# {spec.title}",
            "set datafile separator ','",
            "set key top left autotitle columnhead",
            f"set xlabel '{spec.xlabel}'",
            f"set ylabel '{spec.ylabel}'",
            "set terminal pngcairo size 900,600",
            f"set output '{output_name}'",
        ]
        if spec.logscale_y:
            lines.append('set logscale y')
        plots = []
        for curve in spec.curves:
            if curve.y not in columns:
                continue
            if curve.style == 'yerrorbars' and curve.error_low in columns:
                using = f"{col(curve.x)}:{col(curve.y)}:{col(curve.error_low)}:{col(curve.error_high)}"
            else:
                using = f"{col(curve.x)}:{col(curve.y)}"
            plots.append(f"'{csv_name}' using {using} with {curve.style} title '{curve.title}'")
        lines.append('plot ' + ', \\\n     '.join(plots))
        return '\n'.join(lines) + '\n'

    @staticmethod
    def plotly_figure(spec: FigureSpec, table: pd.DataFrame) -> go.Figure:
        fig = go.Figure()
        for curve in spec.curves:
            if curve.y not in table.columns:
                continue
            error_y = None
            if curve.error_low in table.columns and curve.error_high in table.columns:
                error_y = dict(type='data', symmetric=False,
                               array=table[curve.error_high] - table[curve.y],
                               arrayminus=table[curve.y] - table[curve.error_low])
            mode = 'lines' if curve.style == 'lines' else 'lines+markers'
            fig.add_trace(go.Scatter(x=table[curve.x], y=table[curve.y], mode=mode,
                                     name=curve.title, error_y=error_y))
        fig.update_layout(title=spec.title, xaxis_title=spec.xlabel, yaxis_title=spec.ylabel,
                          yaxis_type='log' if spec.logscale_y else 'linear', height=600)
        return fig

    @staticmethod
    def write_figure(figure_id: str, table: pd.DataFrame, csv_path: Path,
                     formats: Sequence[str] = ('csv', 'gnuplot')) -> List[Path]:
        """Always writes the CSV; gnuplot and html only when requested"""
        spec = FIGURE_SPECS[figure_id]
        csv_path = Path(csv_path)
        written = [FieldIO.write_table(csv_path, table)]
        if 'gnuplot' in formats:
            script = csv_path.with_suffix('.gp')
            script.write_text(VisualizationService.gnuplot_script(
                spec, csv_path.name, table, csv_path.with_suffix('.png').name), encoding='utf-8')
            written.append(script)
        if 'html' in formats:
            html = csv_path.with_suffix('.html')
            html.write_text(VisualizationService.plotly_figure(spec, table).to_html(include_plotlyjs='cdn'), encoding='utf-8')
            written.append(html)
        logger.info(f"📊 Figure {figure_id}: {', '.join(p.name for p in written)}")
        return written
