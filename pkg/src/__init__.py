"""
MesclaLoRA - Mescla ponderada e auditoria de adaptadores LoRA
Verificação numérica de checkpoints exportados e métricas de avaliação
"""

__version__ = "1.0.0"
__author__ = "Projeto MesclaLoRA"
