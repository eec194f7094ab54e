#!/usr/bin/env python3
"""
Ponto de entrada do MesclaLoRA
"""

import os
import sys

# Adicionar diretório raiz ao path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.cli import main


if __name__ == '__main__':
    sys.exit(main())
