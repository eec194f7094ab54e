"""Módulo de ingestão de logs de treinamento."""

from .training_log import (
    Split,
    Stage,
    TrainLogPoint,
    format_summary_lines,
    parse_training_log,
    plot_training_log,
    summarize_training_log,
)

__all__ = [
    'Split',
    'Stage',
    'TrainLogPoint',
    'format_summary_lines',
    'parse_training_log',
    'plot_training_log',
    'summarize_training_log',
]
