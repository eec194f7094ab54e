"""
Módulo de auditoria de checkpoints mesclados
Verifica a combinação linear pretendida, infere os pesos realmente presentes
e classifica checkpoints suspeitos (base / só um adaptador / mistura).
"""

import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from config import AUDIT_CONFIG, LORA_CONFIG, TOLERANCE_PROFILES
from src.errors import (
    EmptySpec,
    InvalidMergeSpec,
    MissingBaseTensor,
    NameSetMismatch,
    ShapeMismatch,
    SingularSystem,
)
from src.merge.lora_algebra import (
    DeltaCache,
    LoraAdapter,
    MergeSpec,
    cached_delta,
    merged_arrays,
    target_name,
)
from src.store.tensor_store import TensorStore
from src.utils.console import Console
from src.utils.stats_utils import StatsUtils

# Ordem de "largura" dos dtypes: o candidato mais estreito define a tolerância
_DTYPE_PRECISION = {'F32': 0, 'F16': 1, 'BF16': 2}


@dataclass
class VerifyReport:
    """Estatísticas de erro por tensor e veredito da verificação."""

    per_tensor: Dict[str, Dict[str, float]]
    tolerance_abs: float
    tolerance_rel: float
    verdict: str
    failing_tensors: List[str]
    label: str = ''

    @property
    def passed(self) -> bool:
        return self.verdict == 'Pass'

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


@dataclass
class AttributionReport:
    """Pesos de mistura inferidos, resíduos e hipótese mais provável."""

    inferred_weights: Dict[str, float]
    residual_rms: float
    per_tensor_weights: Dict[str, List[float]]
    best_hypothesis: str = ''
    hypothesis_residuals: Dict[str, float] = field(default_factory=dict)
    adapter_order: List[str] = field(default_factory=list)
    degenerate: bool = False
    condition: float = 0.0

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def tolerance_profile(dtype: str) -> Tuple[float, float]:
    """
    Tolerâncias padrão (abs, rel) para candidatos de um dtype.

    Args:
        dtype: 'F32', 'BF16' ou 'F16'

    Returns:
        Tupla (tol_abs, tol_rel)
    """
    profile = TOLERANCE_PROFILES[dtype]
    return profile['abs'], profile['rel']


def candidate_dtype(candidate: TensorStore) -> str:
    """Dtype menos preciso presente no candidato (F32 se vazio)."""
    dtypes = {t.dtype for t in candidate.tensors.values()} or {'F32'}
    return max(dtypes, key=lambda d: _DTYPE_PRECISION[d])


def _check_compatible(base: TensorStore, candidate: TensorStore) -> None:
    base_names, cand_names = set(base.tensors), set(candidate.tensors)
    if base_names != cand_names:
        missing = sorted(base_names - cand_names)
        extra = sorted(cand_names - base_names)
        raise NameSetMismatch(f"Conjuntos de tensores diferem (faltando {missing}, sobrando {extra})")
    for name in base.names():
        if tuple(base[name].shape) != tuple(candidate[name].shape):
            raise ShapeMismatch(
                f"'{name}': base {list(base[name].shape)} ≠ candidato {list(candidate[name].shape)}"
            )


def verify_merge(base: TensorStore, spec: MergeSpec, candidate: TensorStore,
                 tol_abs: Optional[float] = None, tol_rel: Optional[float] = None,
                 module_suffix: str = LORA_CONFIG['module_suffix']) -> VerifyReport:
    """
    Compara o candidato com base + Σ wᵢ·ΔWᵢ recalculado em F32.

    Um tensor passa quando max_abs_err ≤ tol_abs OU max_rel_err ≤ tol_rel;
    tensores não alvo são comparados com o base com as mesmas tolerâncias.

    Args:
        base: Checkpoint base
        spec: Mescla pretendida
        candidate: Checkpoint exportado
        tol_abs: Tolerância absoluta (padrão pelo dtype do candidato)
        tol_rel: Tolerância relativa (padrão pelo dtype do candidato)
        module_suffix: Sufixo da convenção de nomes

    Returns:
        VerifyReport com veredito Pass/Fail
    """
    _check_compatible(base, candidate)

    default_abs, default_rel = tolerance_profile(candidate_dtype(candidate))
    tol_abs = default_abs if tol_abs is None else float(tol_abs)
    tol_rel = default_rel if tol_rel is None else float(tol_rel)

    expected = merged_arrays(base, spec, module_suffix, cache={})

    per_tensor = {}
    failing = []
    for name in base.names():
        exp = expected[name] if name in expected else base.array(name)
        stats = StatsUtils.error_summary(candidate.array(name), exp, AUDIT_CONFIG['rel_err_floor'])
        per_tensor[name] = stats
        ok = stats['max_abs_err'] <= tol_abs or stats['max_rel_err'] <= tol_rel
        if not ok:
            failing.append(name)

    verdict = 'Fail' if failing else 'Pass'
    if failing:
        Console.error(f"Verificação falhou em {len(failing)} de {len(base)} tensores")
    else:
        Console.ok(f"Verificação aprovada em {len(base)} tensores")

    return VerifyReport(
        per_tensor=per_tensor,
        tolerance_abs=tol_abs,
        tolerance_rel=tol_rel,
        verdict=verdict,
        failing_tensors=failing,
        label=spec.label,
    )


# ---------------------------------------------------------------------------
# Inferência dos pesos de mistura
# ---------------------------------------------------------------------------

def _solve_normal(gram: np.ndarray, rhs: np.ndarray) -> Tuple[np.ndarray, bool, float]:
    """Resolve G·w = b por LU com pivoteamento parcial; pseudo-inversa se degenerado."""
    k = gram.shape[0]
    if k == 0:
        return np.zeros(0), True, float('inf')
    cond = StatsUtils.condition_number(gram)
    if cond > AUDIT_CONFIG['condition_threshold']:
        return np.linalg.pinv(gram) @ rhs, True, cond
    lu, piv = lu_factor(gram)
    return lu_solve((lu, piv), rhs), False, cond


def _delta_columns(adapters: Sequence[LoraAdapter], target: str, shape: Tuple[int, ...],
                   module_suffix: str, cache: DeltaCache) -> np.ndarray:
    """Matriz N×k com vec(ΔWᵢ) de cada adaptador (zeros se não atinge o tensor)."""
    size = int(np.prod(shape, dtype=np.int64)) if shape else 1
    columns = np.zeros((size, len(adapters)), dtype=np.float64)
    for j, adapter in enumerate(adapters):
        for module in adapter.module_names():
            if target_name(module, module_suffix) == target:
                delta = cached_delta(adapter, module, cache)
                if tuple(delta.shape) != tuple(shape):
                    raise ShapeMismatch(
                        f"'{adapter.name}.{module}': delta {delta.shape} ≠ '{target}' {tuple(shape)}"
                    )
                columns[:, j] = delta.ravel()
    return columns


def _targets(adapters: Sequence[LoraAdapter], module_suffix: str) -> List[str]:
    names = set()
    for adapter in adapters:
        names.update(target_name(m, module_suffix) for m in adapter.module_names())
    return sorted(names)


def infer_mix_weights(base: TensorStore, adapters: Sequence[LoraAdapter], candidate: TensorStore,
                      module_suffix: str = LORA_CONFIG['module_suffix'],
                      strict: bool = False,
                      cache: Optional[DeltaCache] = None) -> AttributionReport:
    """
    Inverte a mescla: min_w ‖vec(candidato − base) − Σ wᵢ·vec(ΔWᵢ)‖₂.

    Resolve as equações normais k×k somadas sobre todos os tensores alvo e,
    para localizar exportações parcialmente corrompidas, também por tensor.

    Args:
        base: Checkpoint base
        adapters: Adaptadores candidatos (k ≥ 1)
        candidate: Checkpoint suspeito
        module_suffix: Sufixo da convenção de nomes
        strict: Levanta SingularSystem quando o sistema é degenerado
        cache: Cache opcional de deltas

    Returns:
        AttributionReport com pesos inferidos e resíduo RMS global
    """
    if not adapters:
        raise EmptySpec("Nenhum adaptador candidato para inferir pesos")
    _check_compatible(base, candidate)
    cache = {} if cache is None else cache

    ordered = sorted(adapters, key=lambda a: a.name)
    names = [a.name for a in ordered]
    if len(set(names)) != len(names):
        raise InvalidMergeSpec(f"Adaptadores repetidos: {names}")
    k = len(ordered)

    targets = _targets(ordered, module_suffix)
    for target in targets:
        if target not in base:
            raise MissingBaseTensor(f"Tensor alvo '{target}' ausente no checkpoint base")

    gram = np.zeros((k, k), dtype=np.float64)
    rhs = np.zeros(k, dtype=np.float64)
    systems = {}
    for target in targets:
        shape = tuple(base[target].shape)
        cols = _delta_columns(ordered, target, shape, module_suffix, cache)
        diff = (candidate.array(target).astype(np.float64)
                - base.array(target).astype(np.float64)).ravel()
        g_t = cols.T @ cols
        b_t = cols.T @ diff
        gram += g_t
        rhs += b_t
        systems[target] = (cols, diff, g_t, b_t)

    weights, degenerate, cond = _solve_normal(gram, rhs)
    if degenerate:
        message = f"Sistema degenerado (condição {cond:.3g}); usando pseudo-inversa"
        if strict:
            raise SingularSystem(message)
        Console.warn(message)

    sum_sq = 0.0
    count = 0
    per_tensor = {}
    for target in targets:
        cols, diff, g_t, b_t = systems[target]
        residual = diff - cols @ weights
        sum_sq += float(residual @ residual)
        count += diff.size
        w_t, _, _ = _solve_normal(g_t, b_t)
        per_tensor[target] = [float(w) for w in w_t]

    return AttributionReport(
        inferred_weights={name: float(w) for name, w in zip(names, weights)},
        residual_rms=StatsUtils.rms(sum_sq, count),
        per_tensor_weights=per_tensor,
        adapter_order=names,
        degenerate=degenerate,
        condition=cond,
    )


# ---------------------------------------------------------------------------
# Classificação de checkpoints
# ---------------------------------------------------------------------------

def default_hypotheses(adapters: Sequence[LoraAdapter],
                       declared: Optional[MergeSpec] = None) -> List[MergeSpec]:
    """
    Hipóteses padrão: só o base, cada adaptador sozinho com peso 1 e a mescla declarada.

    Args:
        adapters: Adaptadores candidatos
        declared: Especificação declarada (opcional)

    Returns:
        Lista de MergeSpec rotuladas ("base", "{nome}-only", rótulo declarado)
    """
    ordered = sorted(adapters, key=lambda a: a.name)
    hypotheses = [MergeSpec(entries=[(a, 0.0) for a in ordered], label='base')]
    for chosen in ordered:
        hypotheses.append(MergeSpec(
            entries=[(a, 1.0 if a is chosen else 0.0) for a in ordered],
            label=f"{chosen.name}-only",
        ))
    if declared is not None and declared.label not in {h.label for h in hypotheses}:
        hypotheses.append(declared)
    return hypotheses


def _hypothesis_residual(base: TensorStore, candidate: TensorStore, spec: MergeSpec,
                         module_suffix: str, cache: DeltaCache) -> float:
    expected = merged_arrays(base, spec, module_suffix, cache=cache)
    sum_sq = 0.0
    count = 0
    for name in base.names():
        exp = expected[name] if name in expected else base.array(name)
        diff = candidate.array(name).astype(np.float64) - exp.astype(np.float64)
        sum_sq += float(np.sum(diff * diff))
        count += diff.size
    return StatsUtils.rms(sum_sq, count)


def classify_checkpoint(base: TensorStore, adapters: Sequence[LoraAdapter], candidate: TensorStore,
                        hypotheses: Optional[Sequence[MergeSpec]] = None,
                        module_suffix: str = LORA_CONFIG['module_suffix']) -> AttributionReport:
    """
    Escolhe a hipótese de mescla que melhor explica o candidato.

    best_hypothesis = argmin do resíduo RMS; empates (dentro de tie_tolerance)
    são resolvidos pelo menor número de pesos não nulos e depois pelo rótulo.

    Args:
        base: Checkpoint base
        adapters: Adaptadores candidatos
        candidate: Checkpoint suspeito
        hypotheses: Hipóteses (padrão: default_hypotheses(adapters))
        module_suffix: Sufixo da convenção de nomes

    Returns:
        AttributionReport com pesos inferidos e resíduo por hipótese
    """
    _check_compatible(base, candidate)
    if hypotheses is None:
        hypotheses = default_hypotheses(adapters)
    hypotheses = list(hypotheses)
    if not hypotheses:
        raise EmptySpec("Lista de hipóteses vazia")
    labels = [h.label for h in hypotheses]
    if len(set(labels)) != len(labels):
        raise InvalidMergeSpec(f"Rótulos de hipótese repetidos: {labels}")

    cache: DeltaCache = {}
    residuals = {h.label: _hypothesis_residual(base, candidate, h, module_suffix, cache)
                 for h in hypotheses}

    best_value = min(residuals.values())
    slack = AUDIT_CONFIG['tie_tolerance'] * max(1.0, best_value)
    tied = [h for h in hypotheses if residuals[h.label] <= best_value + slack]
    best = min(tied, key=lambda h: (h.nonzero_count(), h.label))

    report = infer_mix_weights(base, adapters, candidate, module_suffix, cache=cache)
    report.best_hypothesis = best.label
    report.hypothesis_residuals = dict(sorted(residuals.items()))

    Console.info(f"Hipótese mais provável: {best.label} (resíduo RMS {residuals[best.label]:.3e})")
    return report
