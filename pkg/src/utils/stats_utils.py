"""
Utilitários para cálculos estatísticos sobre tensores
"""

import math
from typing import Dict, Iterable

import numpy as np


class StatsUtils:
    """Utilitários para cálculos estatísticos."""

    @staticmethod
    def error_summary(candidate: np.ndarray, expected: np.ndarray,
                      rel_floor: float = 1e-8) -> Dict[str, float]:
        """
        Calcula estatísticas de erro elemento a elemento.

        Args:
            candidate: Valores observados
            expected: Valores esperados (mesmo shape)
            rel_floor: Piso do denominador do erro relativo

        Returns:
            Dicionário com max_abs_err, max_rel_err e mean_abs_err
        """
        cand = np.asarray(candidate, dtype=np.float64).ravel()
        exp = np.asarray(expected, dtype=np.float64).ravel()

        if cand.size == 0:
            return {'max_abs_err': 0.0, 'max_rel_err': 0.0, 'mean_abs_err': 0.0}

        abs_err = np.abs(cand - exp)
        rel_err = abs_err / np.maximum(np.abs(exp), rel_floor)

        return {
            'max_abs_err': float(abs_err.max()),
            'max_rel_err': float(rel_err.max()),
            'mean_abs_err': float(abs_err.mean()),
        }

    @staticmethod
    def rms(sum_of_squares: float, count: int) -> float:
        """
        Raiz do erro quadrático médio a partir da soma dos quadrados.

        Args:
            sum_of_squares: Soma dos resíduos ao quadrado
            count: Número de elementos

        Returns:
            RMS (0 quando não há elementos)
        """
        if count <= 0:
            return 0.0
        return math.sqrt(max(sum_of_squares, 0.0) / count)

    @staticmethod
    def stable_mean(values: Iterable[float]) -> float:
        """
        Média com soma compensada, independente da ordem dos valores.

        Args:
            values: Valores

        Returns:
            Média (0 para sequência vazia)
        """
        values = list(values)
        if not values:
            return 0.0
        return math.fsum(values) / len(values)

    @staticmethod
    def condition_number(matrix: np.ndarray) -> float:
        """
        Estima o número de condição de uma matriz quadrada.

        Args:
            matrix: Matriz k×k

        Returns:
            Número de condição (inf quando singular)
        """
        if matrix.size == 0:
            return math.inf
        with np.errstate(divide='ignore', invalid='ignore'):
            cond = np.linalg.cond(matrix)
        if not np.isfinite(cond):
            return math.inf
        return float(cond)
