"""
Utilitários para manipulação de datas
"""

import os
from typing import Optional

import pandas as pd

from config import SOURCE_DATE_ENV_VAR


class DateUtils:
    """Utilitários para trabalhar com datas."""

    @staticmethod
    def utc_now() -> str:
        """
        Retorna o instante atual em UTC (ISO 8601, precisão de segundos).

        Quando SOURCE_DATE_EPOCH está definida, usa esse instante fixo para
        que execuções repetidas produzam artefatos idênticos.

        Returns:
            String ISO 8601 terminada em 'Z'
        """
        epoch = os.environ.get(SOURCE_DATE_ENV_VAR)
        if epoch:
            return DateUtils.from_epoch(int(epoch))
        return DateUtils.format_utc(pd.Timestamp.now(tz='UTC'))

    @staticmethod
    def from_epoch(seconds: int) -> str:
        """
        Converte segundos desde a época Unix para ISO 8601 UTC.

        Args:
            seconds: Segundos desde 1970-01-01

        Returns:
            String ISO 8601 terminada em 'Z'
        """
        return DateUtils.format_utc(pd.Timestamp(seconds, unit='s', tz='UTC'))

    @staticmethod
    def format_utc(ts: pd.Timestamp) -> str:
        """
        Formata um timestamp como ISO 8601 UTC.

        Args:
            ts: Timestamp (com ou sem fuso)

        Returns:
            String no formato AAAA-MM-DDTHH:MM:SSZ
        """
        if ts.tzinfo is None:
            ts = ts.tz_localize('UTC')
        return ts.tz_convert('UTC').strftime('%Y-%m-%dT%H:%M:%SZ')

    @staticmethod
    def parse_utc(text: Optional[str]) -> Optional[pd.Timestamp]:
        """
        Lê um timestamp ISO 8601.

        Args:
            text: String ISO 8601

        Returns:
            Timestamp em UTC ou None se vazio/inválido
        """
        if not text:
            return None
        ts = pd.to_datetime(text, utc=True, errors='coerce')
        if pd.isna(ts):
            return None
        return ts
