"""Módulo de utilitários."""

from .console import Console
from .date_utils import DateUtils
from .stats_utils import StatsUtils
from .formatters import Formatters

__all__ = ['Console', 'DateUtils', 'StatsUtils', 'Formatters']
