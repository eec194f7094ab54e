"""
Formatadores de dados para exibição
"""

import math
from typing import Optional, Union


class Formatters:
    """Formatadores de dados para exibição."""

    @staticmethod
    def format_number(value: Optional[float], decimals: int = 2) -> str:
        """
        Formata número com casas decimais.

        Args:
            value: Valor numérico
            decimals: Número de casas decimais

        Returns:
            String formatada
        """
        if value is None or (isinstance(value, float) and math.isnan(value)):
            return '-'
        return f"{value:.{decimals}f}"

    @staticmethod
    def format_error(value: Optional[float]) -> str:
        """
        Formata erro numérico em notação científica.

        Args:
            value: Erro absoluto ou relativo

        Returns:
            String formatada (ex: 3.2e-07)
        """
        if value is None or (isinstance(value, float) and math.isnan(value)):
            return '-'
        return f"{value:.2e}"

    @staticmethod
    def format_weight(value: float) -> str:
        """
        Formata peso de mistura.

        Args:
            value: Peso wᵢ

        Returns:
            String formatada
        """
        return f"{value:.4f}"

    @staticmethod
    def format_percentage(value: Optional[float], decimals: int = 1) -> str:
        """
        Formata fração (0-1) como porcentagem.

        Args:
            value: Fração
            decimals: Casas decimais

        Returns:
            String formatada
        """
        if value is None:
            return '-'
        return f"{value * 100:.{decimals}f}%"

    @staticmethod
    def format_digest(digest: str, length: int = 12) -> str:
        """
        Abrevia um digest hexadecimal.

        Args:
            digest: Digest completo
            length: Quantidade de caracteres mantidos

        Returns:
            Digest abreviado
        """
        if not digest:
            return '-'
        return digest[:length]

    @staticmethod
    def format_bytes(value: Union[int, float]) -> str:
        """
        Formata tamanho em bytes com unidade legível.

        Args:
            value: Quantidade de bytes

        Returns:
            String formatada (B, KB, MB, GB)
        """
        size = float(value)
        for unit in ('B', 'KB', 'MB', 'GB'):
            if size < 1024 or unit == 'GB':
                return f"{size:.0f} {unit}" if unit == 'B' else f"{size:.1f} {unit}"
            size /= 1024
        return f"{size:.1f} GB"
