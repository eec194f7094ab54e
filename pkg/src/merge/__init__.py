"""Módulo de mescla de adaptadores LoRA e auditoria de checkpoints."""

from .lora_algebra import (
    LoraAdapter,
    MergeSpec,
    alpha_sweep,
    apply_merge,
    compute_delta,
    default_merge_spec,
    load_adapter,
    load_merge_spec,
    save_adapter,
    target_name,
)
from .merge_audit import (
    AttributionReport,
    VerifyReport,
    classify_checkpoint,
    default_hypotheses,
    infer_mix_weights,
    tolerance_profile,
    verify_merge,
)

__all__ = [
    'LoraAdapter',
    'MergeSpec',
    'alpha_sweep',
    'apply_merge',
    'compute_delta',
    'default_merge_spec',
    'load_adapter',
    'load_merge_spec',
    'save_adapter',
    'target_name',
    'AttributionReport',
    'VerifyReport',
    'classify_checkpoint',
    'default_hypotheses',
    'infer_mix_weights',
    'tolerance_profile',
    'verify_merge',
]
