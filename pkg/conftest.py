"""
Fixtures compartilhadas: checkpoints sintéticos, adaptadores aleatórios e
o oráculo escalar da mescla (laços puros em Python, sem numpy).
"""

import os
import sys
from types import SimpleNamespace
from typing import Dict, Sequence, Tuple

import numpy as np
import pytest

# Adicionar diretório raiz ao path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.merge import LoraAdapter
from src.store import TensorStore
from src.utils import Console

# Módulos alvo (d_out, d_in) e tensores que nenhum adaptador toca
MODULE_SHAPES = {
    'layers.0.q_proj': (8, 8),
    'layers.0.v_proj': (8, 16),
    'layers.1.q_proj': (16, 8),
    'layers.1.mlp.up_proj': (16, 16),
}
UNTARGETED_SHAPES = {
    'embed_tokens.weight': (10, 8),
    'norm.weight': (8,),
}


def random_adapter(rng: np.random.Generator, name: str, rank: int = 2, alpha: float = 4.0,
                   shapes: Dict[str, Tuple[int, int]] = None) -> LoraAdapter:
    shapes = MODULE_SHAPES if shapes is None else shapes
    modules = {}
    for module, (d_out, d_in) in shapes.items():
        a = rng.standard_normal((rank, d_in)).astype(np.float32) * 0.5
        b = rng.standard_normal((d_out, rank)).astype(np.float32) * 0.5
        modules[module] = (a, b)
    return LoraAdapter(name=name, rank=rank, alpha=alpha, modules=modules)


def random_base(rng: np.random.Generator, shapes: Dict[str, Tuple[int, int]] = None,
                dtype: str = 'F32') -> TensorStore:
    shapes = MODULE_SHAPES if shapes is None else shapes
    arrays = {f"{module}.weight": rng.standard_normal(shape).astype(np.float32)
              for module, shape in shapes.items()}
    for name, shape in UNTARGETED_SHAPES.items():
        arrays[name] = rng.standard_normal(shape).astype(np.float32)
    return TensorStore.from_arrays(arrays, dtype=dtype)


def scalar_merge(base: TensorStore, entries: Sequence[Tuple[LoraAdapter, float]],
                 suffix: str = '.weight') -> Dict[str, list]:
    """W + Σ w·(α/r)·B·A elemento a elemento, em floats do Python."""
    result = {}
    for name in base.names():
        flat = [float(v) for v in base.array(name).ravel()]
        shape = base[name].shape
        if len(shape) != 2:
            result[name] = flat
            continue
        rows, cols = shape
        for adapter, weight in entries:
            module = name[:-len(suffix)] if name.endswith(suffix) else name
            if module not in adapter.modules:
                continue
            a, b = adapter.modules[module]
            scale = adapter.alpha / adapter.rank
            for i in range(rows):
                for j in range(cols):
                    acc = 0.0
                    for k in range(adapter.rank):
                        acc += float(b[i, k]) * float(a[k, j])
                    flat[i * cols + j] += weight * scale * acc
        result[name] = flat
    return result


def oracle_store(base: TensorStore, entries: Sequence[Tuple[LoraAdapter, float]],
                 dtype: str = 'F32') -> TensorStore:
    """Checkpoint montado a partir do oráculo escalar, no formato de cada tensor base."""
    merged = scalar_merge(base, entries)
    arrays = {name: np.array(values, dtype=np.float64).reshape(base[name].shape)
              for name, values in merged.items()}
    return TensorStore.from_arrays(arrays, dtype=dtype)


@pytest.fixture(autouse=True, scope='session')
def quiet_console():
    """Silencia os diagnósticos durante os testes."""
    Console.set_quiet(True)
    yield
    Console.set_quiet(False)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def synthetic(rng):
    """Base com 6 tensores (até 16×16) e adaptadores PT/SFT de rank 2."""
    return SimpleNamespace(
        base=random_base(rng),
        pt=random_adapter(rng, 'pt'),
        sft=random_adapter(rng, 'sft'),
    )


@pytest.fixture
def oracle():
    return scalar_merge
