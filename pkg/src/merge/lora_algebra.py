"""
Módulo de álgebra de adaptadores LoRA
Materializa ΔW = (α/r)·B·A e exporta W' = W + Σᵢ wᵢ·ΔWᵢ em um único checkpoint.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import ALPHA_SWEEP_GRID, DEFAULT_MERGE, DTYPE_CONFIG, LORA_CONFIG, METADATA_KEYS
from src import __version__
from src.errors import (
    EmptySpec,
    InvalidAdapter,
    InvalidMergeSpec,
    IoFailure,
    MissingBaseTensor,
    ShapeMismatch,
    UnknownDtype,
    UnknownModule,
)
from src.guard.fingerprint import fingerprint
from src.store.tensor_store import Tensor, TensorStore, read_store, write_store
from src.utils.console import Console

PathLike = Union[str, Path]
DeltaCache = Dict[Tuple[int, str], np.ndarray]


@dataclass
class LoraAdapter:
    """Pares de baixo rank (A: r×d_in, B: d_out×r) por módulo alvo."""

    name: str
    rank: int
    alpha: float
    modules: Dict[str, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.name:
            raise InvalidAdapter("Adaptador sem nome")
        try:
            rank = int(self.rank)
            alpha = float(self.alpha)
        except (TypeError, ValueError) as e:
            raise InvalidAdapter(f"'{self.name}': rank/alpha não numéricos") from e
        if rank < 1 or rank != float(self.rank):
            raise InvalidAdapter(f"'{self.name}': rank deve ser inteiro ≥ 1 (recebido {self.rank})")
        if not math.isfinite(alpha) or alpha <= 0:
            raise InvalidAdapter(f"'{self.name}': alpha deve ser > 0 (recebido {self.alpha})")
        self.rank = rank
        self.alpha = alpha

        converted = {}
        for module, (a, b) in self.modules.items():
            a = np.asarray(a, dtype=np.float32)
            b = np.asarray(b, dtype=np.float32)
            if a.ndim != 2 or b.ndim != 2:
                raise ShapeMismatch(f"'{self.name}.{module}': A e B devem ser matrizes")
            converted[module] = (a, b)
        self.modules = converted

    @property
    def scaling(self) -> float:
        """Fator α/r."""
        return self.alpha / self.rank

    def module_names(self) -> List[str]:
        return sorted(self.modules)

    def delta_shape(self, module: str) -> Tuple[int, int]:
        """Shape (d_out, d_in) do delta de um módulo."""
        a, b = self.modules[module]
        return b.shape[0], a.shape[1]

    def validate(self) -> None:
        """
        Verifica que todo A tem r linhas e todo B tem r colunas.

        Raises:
            ShapeMismatch: dimensões internas incoerentes
        """
        for module in self.module_names():
            a, b = self.modules[module]
            if a.shape[0] != self.rank or b.shape[1] != self.rank:
                raise ShapeMismatch(
                    f"'{self.name}.{module}': A {a.shape}, B {b.shape} incompatíveis com r={self.rank}"
                )

    def to_store(self) -> TensorStore:
        """
        Converte o adaptador no layout de arquivo ({módulo}.lora_A / .lora_B).

        Returns:
            TensorStore em F32 com rank/alpha/nome nos metadados
        """
        store = TensorStore(metadata={
            'name': self.name,
            'r': str(self.rank),
            'lora_alpha': repr(self.alpha),
        })
        for module in self.module_names():
            a, b = self.modules[module]
            store.add(Tensor.from_array(module + LORA_CONFIG['a_suffix'], a))
            store.add(Tensor.from_array(module + LORA_CONFIG['b_suffix'], b))
        return store


@dataclass
class MergeSpec:
    """Lista ordenada de (adaptador, peso wᵢ), dtype de saída e rótulo."""

    entries: List[Tuple[LoraAdapter, float]]
    output_dtype: str = 'F32'
    label: str = ''

    def validate(self) -> None:
        """
        Verifica os invariantes da especificação.

        Raises:
            EmptySpec: nenhuma entrada
            InvalidMergeSpec: pesos não finitos ou adaptadores repetidos
            UnknownDtype: dtype de saída não suportado
        """
        if not self.entries:
            raise EmptySpec(f"Especificação '{self.label}' sem adaptadores")
        names = [adapter.name for adapter, _ in self.entries]
        if len(set(names)) != len(names):
            raise InvalidMergeSpec(f"Adaptadores repetidos em '{self.label}': {names}")
        for adapter, weight in self.entries:
            if not math.isfinite(weight):
                raise InvalidMergeSpec(f"Peso não finito para '{adapter.name}': {weight}")
        if self.output_dtype not in DTYPE_CONFIG:
            raise UnknownDtype(f"Dtype de saída não suportado: {self.output_dtype}")

    def sorted_entries(self) -> List[Tuple[LoraAdapter, float]]:
        """Entradas ordenadas pelo nome do adaptador (ordem fixa de soma)."""
        return sorted(self.entries, key=lambda e: e[0].name)

    def weights(self) -> Dict[str, float]:
        return {adapter.name: float(w) for adapter, w in self.sorted_entries()}

    def nonzero_count(self) -> int:
        return sum(1 for _, w in self.entries if w != 0)


def target_name(module: str, module_suffix: str = LORA_CONFIG['module_suffix']) -> str:
    """Nome do tensor base alvo de um módulo ("layers.0.q_proj" → "layers.0.q_proj.weight")."""
    return module + module_suffix


def compute_delta(adapter: LoraAdapter, module: str) -> np.ndarray:
    """
    Materializa o delta de um módulo.

    Args:
        adapter: Adaptador LoRA
        module: Nome do módulo alvo

    Returns:
        Matriz d_out×d_in float32 igual a (α/r)·B·A

    Raises:
        UnknownModule: módulo ausente no adaptador
        ShapeMismatch: dimensões internas de A/B discordam
    """
    if module not in adapter.modules:
        raise UnknownModule(f"Módulo '{module}' não existe no adaptador '{adapter.name}'")

    a, b = adapter.modules[module]
    if a.shape[0] != b.shape[1] or a.shape[0] != adapter.rank:
        raise ShapeMismatch(
            f"'{adapter.name}.{module}': A {a.shape} e B {b.shape} incompatíveis com r={adapter.rank}"
        )

    product = b @ a
    return (np.float32(adapter.scaling) * product).astype(np.float32)


def cached_delta(adapter: LoraAdapter, module: str, cache: Optional[DeltaCache]) -> np.ndarray:
    if cache is None:
        return compute_delta(adapter, module)
    key = (id(adapter), module)
    if key not in cache:
        cache[key] = compute_delta(adapter, module)
    return cache[key]


def merge_plan(base: TensorStore, spec: MergeSpec,
               module_suffix: str = LORA_CONFIG['module_suffix']
               ) -> Dict[str, List[Tuple[LoraAdapter, str, float]]]:
    """
    Resolve quais tensores base recebem quais deltas.

    Args:
        base: Checkpoint base
        spec: Especificação de mescla
        module_suffix: Sufixo da convenção de nomes

    Returns:
        Mapa tensor alvo → [(adaptador, módulo, peso)] em ordem de nome do adaptador

    Raises:
        MissingBaseTensor: módulo sem tensor correspondente no base
        ShapeMismatch: shape do delta difere do tensor base
    """
    spec.validate()
    plan: Dict[str, List[Tuple[LoraAdapter, str, float]]] = {}

    for adapter, weight in spec.sorted_entries():
        for module in adapter.module_names():
            target = target_name(module, module_suffix)
            if target not in base:
                raise MissingBaseTensor(
                    f"'{adapter.name}.{module}' aponta para '{target}', ausente no checkpoint base"
                )
            expected_shape = tuple(base[target].shape)
            if adapter.delta_shape(module) != expected_shape:
                raise ShapeMismatch(
                    f"'{adapter.name}.{module}': delta {adapter.delta_shape(module)} "
                    f"≠ base '{target}' {expected_shape}"
                )
            plan.setdefault(target, []).append((adapter, module, float(weight)))

    return plan


def merged_arrays(base: TensorStore, spec: MergeSpec,
                  module_suffix: str = LORA_CONFIG['module_suffix'],
                  workers: Optional[int] = None,
                  cache: Optional[DeltaCache] = None) -> Dict[str, np.ndarray]:
    """
    Calcula W + Σ wᵢ·ΔWᵢ em float32 para cada tensor alvo (sem conversão final).

    Args:
        base: Checkpoint base
        spec: Especificação de mescla
        module_suffix: Sufixo da convenção de nomes
        workers: Threads para processar tensores em paralelo (None = sequencial)
        cache: Cache opcional de deltas já materializados

    Returns:
        Mapa tensor alvo → array float32
    """
    plan = merge_plan(base, spec, module_suffix)

    def merge_one(target: str) -> Tuple[str, np.ndarray]:
        base_arr = base[target].to_array()
        contributions = [(a, m, w) for a, m, w in plan[target] if w != 0]
        if not contributions:
            return target, base_arr
        total = np.zeros(base_arr.shape, dtype=np.float32)
        for adapter, module, weight in contributions:
            total += np.float32(weight) * cached_delta(adapter, module, cache)
        return target, (base_arr + total).astype(np.float32)

    targets = sorted(plan)
    if workers and workers > 1 and cache is None:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(merge_one, targets))
    else:
        results = [merge_one(t) for t in targets]

    return dict(results)


def apply_merge(base: TensorStore, spec: MergeSpec,
                module_suffix: str = LORA_CONFIG['module_suffix'],
                workers: Optional[int] = None) -> TensorStore:
    """
    Exporta o checkpoint mesclado completo.

    Tensores alvo recebem W + Σ wᵢ·ΔWᵢ (acumulado em F32 e convertido uma vez
    para output_dtype); os demais são copiados sem alteração.

    Args:
        base: Checkpoint base
        spec: Especificação de mescla
        module_suffix: Sufixo da convenção de nomes
        workers: Threads para processar tensores em paralelo

    Returns:
        Novo TensorStore com metadados de proveniência
    """
    spec.validate()
    for adapter, weight in spec.sorted_entries():
        if weight < 0 or weight > 1:
            Console.warn(f"Peso {weight} para '{adapter.name}' fora de [0, 1] (aritmética de tarefas)")

    merged = merged_arrays(base, spec, module_suffix, workers)

    result = TensorStore(metadata=dict(base.metadata))
    overflow = 0
    for name in base.names():
        if name in merged:
            tensor = Tensor.from_array(name, merged[name], spec.output_dtype)
            overflow += tensor.overflow_count
            result.add(tensor)
        else:
            result.add(base[name])

    if overflow:
        Console.warn(f"{overflow} elementos saturaram para ±inf ao converter para {spec.output_dtype}")

    adapter_digests = {a.name: fingerprint(a.to_store()).digest for a, _ in spec.sorted_entries()}
    result.metadata.update({
        METADATA_KEYS['label']: spec.label,
        METADATA_KEYS['weights']: json.dumps(spec.weights(), sort_keys=True),
        METADATA_KEYS['adapters']: json.dumps(adapter_digests, sort_keys=True),
        METADATA_KEYS['tool_version']: __version__,
        METADATA_KEYS['output_dtype']: spec.output_dtype,
        METADATA_KEYS['module_suffix']: module_suffix,
        METADATA_KEYS['overflow']: str(overflow),
    })

    return result


def default_merge_spec(pt: LoraAdapter, sft: LoraAdapter, output_dtype: str = 'F32') -> MergeSpec:
    """Mescla padrão PT=0.3 / SFT=0.7."""
    return MergeSpec(
        entries=[(pt, DEFAULT_MERGE['pt']), (sft, DEFAULT_MERGE['sft'])],
        output_dtype=output_dtype,
        label=f"pt{DEFAULT_MERGE['pt']}/sft{DEFAULT_MERGE['sft']}",
    )


def alpha_sweep(pt: LoraAdapter, sft: LoraAdapter,
                alphas: Optional[Sequence[float]] = None,
                output_dtype: str = 'F32') -> List[Tuple[float, MergeSpec]]:
    """
    Gera a família de especificações w_PT = a, w_SFT = 1 − a.

    Args:
        pt: Adaptador de pré-treino
        sft: Adaptador de ajuste supervisionado
        alphas: Grade de valores de a (padrão 0.0, 0.1, ..., 1.0)
        output_dtype: Dtype de saída de cada exportação

    Returns:
        Lista de (a, MergeSpec) na ordem da grade
    """
    grid = list(alphas) if alphas is not None else list(ALPHA_SWEEP_GRID)
    specs = []
    for a in grid:
        w_pt = round(float(a), 10)
        w_sft = round(1.0 - float(a), 10)
        specs.append((w_pt, MergeSpec(
            entries=[(pt, w_pt), (sft, w_sft)],
            output_dtype=output_dtype,
            label=f"pt{w_pt:g}/sft{w_sft:g}",
        )))
    return specs


# ---------------------------------------------------------------------------
# Leitura e gravação de adaptadores
# ---------------------------------------------------------------------------

def _sidecar_candidates(path: Path) -> List[Path]:
    return [path.with_suffix('.json'), path.parent / LORA_CONFIG['sidecar_name']]


def _read_json(path: Path) -> dict:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise IoFailure(f"Falha ao ler {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InvalidAdapter(f"{path} não é JSON válido: {e}") from e
    if not isinstance(data, dict):
        raise InvalidAdapter(f"{path} deve conter um objeto JSON")
    return data


def load_adapter(path: PathLike, config_path: Optional[PathLike] = None) -> LoraAdapter:
    """
    Carrega um adaptador do disco.

    Tensores "{módulo}.lora_A" (r×d_in) e "{módulo}.lora_B" (d_out×r), com
    sufixo ".weight" opcional; r, lora_alpha e name vêm do JSON ao lado do
    arquivo ({stem}.json ou adapter_config.json).

    Args:
        path: Arquivo de tensores do adaptador
        config_path: JSON de configuração explícito

    Returns:
        LoraAdapter em float32
    """
    path = Path(path)
    store = read_store(path)

    sidecar = Path(config_path) if config_path else next(
        (p for p in _sidecar_candidates(path) if p.exists()), None
    )
    if sidecar is not None:
        cfg = _read_json(sidecar)
    else:
        Console.warn(f"{path.name}: configuração ausente, usando r={LORA_CONFIG['r']}, "
                     f"alpha={LORA_CONFIG['lora_alpha']}")
        cfg = {}

    pairs: Dict[str, Dict[str, np.ndarray]] = {}
    for name in store.names():
        key = name[:-len('.weight')] if name.endswith('.weight') else name
        for part, suffix in (('A', LORA_CONFIG['a_suffix']), ('B', LORA_CONFIG['b_suffix'])):
            if key.endswith(suffix):
                module = key[:-len(suffix)]
                pairs.setdefault(module, {})[part] = store.array(name)
                break
        else:
            Console.warn(f"{path.name}: tensor '{name}' ignorado (não é lora_A/lora_B)")

    modules = {}
    for module, pair in sorted(pairs.items()):
        if set(pair) != {'A', 'B'}:
            raise InvalidAdapter(f"{path.name}: módulo '{module}' sem par A/B completo")
        modules[module] = (pair['A'], pair['B'])

    rank = cfg.get('r', LORA_CONFIG['r'])
    adapter = LoraAdapter(
        name=str(cfg.get('name') or path.stem),
        rank=rank,
        alpha=float(cfg.get('lora_alpha', LORA_CONFIG['lora_alpha'])),
        modules=modules,
    )
    adapter.validate()
    return adapter


def save_adapter(adapter: LoraAdapter, path: PathLike) -> Path:
    """
    Grava o adaptador e seu JSON de configuração ({stem}.json).

    Args:
        adapter: Adaptador
        path: Arquivo de tensores de destino

    Returns:
        Caminho do JSON de configuração gravado
    """
    path = Path(path)
    write_store(adapter.to_store(), path)
    sidecar = path.with_suffix('.json')
    cfg = {'r': adapter.rank, 'lora_alpha': adapter.alpha, 'name': adapter.name}
    try:
        sidecar.write_text(json.dumps(cfg, sort_keys=True, indent=2) + "\n", encoding='utf-8')
    except OSError as e:
        raise IoFailure(f"Falha ao gravar {sidecar}: {e}") from e
    return sidecar


def load_merge_spec(path: PathLike) -> MergeSpec:
    """
    Lê o documento JSON de especificação de mescla.

    Formato: {"entries": [{"adapter": caminho, "weight": número}, ...],
    "output_dtype": "...", "label": "..."}; caminhos relativos ao arquivo.

    Args:
        path: Arquivo JSON

    Returns:
        MergeSpec com os adaptadores carregados
    """
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            doc = json.load(f)
    except OSError as e:
        raise IoFailure(f"Falha ao ler {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InvalidMergeSpec(f"{path} não é JSON válido: {e}") from e

    if not isinstance(doc, dict) or not isinstance(doc.get('entries', []), list):
        raise InvalidMergeSpec(f"{path}: documento deve ter uma lista 'entries'")

    entries = []
    for i, item in enumerate(doc.get('entries', [])):
        if not isinstance(item, dict) or 'adapter' not in item or 'weight' not in item:
            raise InvalidMergeSpec(f"{path}: entrada {i} precisa de 'adapter' e 'weight'")
        adapter_path = path.parent / item['adapter']
        config_path = path.parent / item['config'] if item.get('config') else None
        adapter = load_adapter(adapter_path, config_path)
        if item.get('name'):
            adapter.name = str(item['name'])
        try:
            weight = float(item['weight'])
        except (TypeError, ValueError) as e:
            raise InvalidMergeSpec(f"{path}: peso inválido na entrada {i}") from e
        entries.append((adapter, weight))

    spec = MergeSpec(
        entries=entries,
        output_dtype=str(doc.get('output_dtype', 'F32')),
        label=str(doc.get('label', path.stem)),
    )
    spec.validate()
    return spec
