"""
Configurações globais do MesclaLoRA
"""

import os

# Formato do contêiner de tensores
DTYPE_CONFIG = {
    'F32': {'size': 4, 'numpy': '<f4'},
    'F16': {'size': 2, 'numpy': '<f2'},
    'BF16': {'size': 2, 'numpy': '<u2'},  # bits crus, convertidos à mão
}

HEADER_CONFIG = {
    'length_bytes': 8,
    'metadata_key': '__metadata__',
    'alignment': 8,
    'max_header_bytes': 100 * 1024 * 1024,
}

CHECKPOINT_SUFFIXES = ('.safetensors',)

# Convenções de adaptadores LoRA
LORA_CONFIG = {
    'r': 8,
    'lora_alpha': 16.0,
    'module_suffix': '.weight',
    'a_suffix': '.lora_A',
    'b_suffix': '.lora_B',
    'sidecar_name': 'adapter_config.json',
}

# Mescla padrão (PT=0.3, SFT=0.7)
DEFAULT_MERGE = {
    'pt': 0.3,
    'sft': 0.7,
}

ALPHA_SWEEP_GRID = [round(i / 10, 1) for i in range(11)]

# Tolerâncias de verificação por dtype do candidato
TOLERANCE_PROFILES = {
    'F32': {'abs': 1e-5, 'rel': 1e-4},
    'BF16': {'abs': 1e-5, 'rel': 2 ** -7},
    'F16': {'abs': 1e-5, 'rel': 2 ** -9},
}

TOLERANCE_ENV_VAR = 'MESCLA_TOLERANCE_PROFILE'

AUDIT_CONFIG = {
    'rel_err_floor': 1e-8,
    'condition_threshold': 1e8,
    'tie_tolerance': 1e-12,
}

# Proveniência
FINGERPRINT_ALGORITHM = 'sha256'
MANIFEST_NAME = 'merge_manifest.json'
MERGED_NAME = 'merged.safetensors'
SOURCE_DATE_ENV_VAR = 'SOURCE_DATE_EPOCH'

METADATA_KEYS = {
    'label': 'mescla.label',
    'weights': 'mescla.weights',
    'adapters': 'mescla.adapters',
    'tool_version': 'mescla.tool_version',
    'output_dtype': 'mescla.output_dtype',
    'module_suffix': 'mescla.module_suffix',
    'overflow': 'mescla.overflow_count',
}

# Templates de chat
TEMPLATE_IDS = {
    'think': 'qwen3',
    'nothink': 'qwen3_nothink',
}

CHAT_MARKERS = {
    'start': '<|im_start|>',
    'end': '<|im_end|>',
    'think_open': '<think>',
    'think_close': '</think>',
    'empty_think': '<think>\n\n</think>\n\n',
}

# Presets de decodificação (apenas metadados, nenhuma amostragem é feita)
DECODING_PRESETS = {
    'A': {'temperature': 0.0, 'top_p': 1.0},
    'B': {'temperature': 0.6, 'top_p': 0.8},
}

DEFAULT_DECODING = DECODING_PRESETS['B']

# Métricas
BLEU_CONFIG = {
    'max_order': 4,
    'smooth': False,
}

TOKENIZER_DESCRIPTION = 'nfc+lowercase+whitespace+strip-ascii-punct'

REFUSAL_MARKERS = [
    "i cannot",
    "i can't",
    "i won't",
    "unable to help",
    "cannot assist",
    "refuse",
]

MC_LETTERS = ('A', 'B', 'C', 'D', 'E')

LEAKAGE_CONFIG = {
    'ngram': 13,
    'max_examples': 20,
}

# Códigos de saída da CLI
EXIT_CODES = {
    'ok': 0,
    'finding': 2,
    'structural': 3,
}

# Colunas do relatório comparativo (mesma ordem da tabela de decodificação)
REPORT_COLUMNS = {
    'bleu4': 'BLEU-4',
    'rouge1_f': 'R-1',
    'rouge2_f': 'R-2',
    'rougeL_f': 'R-L',
    'mc_accuracy': 'MC-Acc',
    'refusal_rate': 'Refusal',
}

PLOT_CONFIG = {
    'dpi': 150,
    'format': 'png',
    'colors': {'Train': '#1f77b4', 'Eval': '#ff7f0e'},
}


def resolve_tolerance_profile(default: str = 'F32') -> str:
    """
    Retorna o perfil de tolerância vindo do ambiente.

    Args:
        default: Perfil usado quando a variável não está definida

    Returns:
        Nome do perfil ('F32', 'BF16' ou 'F16')
    """
    profile = os.environ.get(TOLERANCE_ENV_VAR, default).strip().upper()
    if profile not in TOLERANCE_PROFILES:
        raise ValueError(
            f"{TOLERANCE_ENV_VAR}={profile!r} inválido; use um de {sorted(TOLERANCE_PROFILES)}"
        )
    return profile
