"""
Saída de diagnóstico no terminal
Mensagens humanas vão para stderr; stdout fica livre para JSON e tabelas.
"""

import sys
from typing import TextIO


class Console:
    """Imprime mensagens de progresso com prefixos visuais."""

    quiet = False
    stream: TextIO = None

    @classmethod
    def set_quiet(cls, quiet: bool) -> None:
        """Ativa ou desativa as mensagens de diagnóstico."""
        cls.quiet = quiet

    @classmethod
    def _emit(cls, prefix: str, message: str) -> None:
        if cls.quiet:
            return
        stream = cls.stream if cls.stream is not None else sys.stderr
        print(f"{prefix} {message}", file=stream)

    @classmethod
    def section(cls, title: str) -> None:
        """Imprime separador de seção."""
        if cls.quiet:
            return
        stream = cls.stream if cls.stream is not None else sys.stderr
        print("\n" + "=" * 70, file=stream)
        print(f"  {title}", file=stream)
        print("=" * 70, file=stream)

    @classmethod
    def info(cls, message: str) -> None:
        cls._emit("📂", message)

    @classmethod
    def step(cls, message: str) -> None:
        cls._emit("🔄", message)

    @classmethod
    def ok(cls, message: str) -> None:
        cls._emit("✅", message)

    @classmethod
    def warn(cls, message: str) -> None:
        cls._emit("⚠️ ", message)

    @classmethod
    def error(cls, message: str) -> None:
        cls._emit("❌", message)
