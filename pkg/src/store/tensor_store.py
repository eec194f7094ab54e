"""
Módulo para ler e gravar o contêiner binário de tensores
Layout: 8 bytes (u64 little-endian) com o tamanho N do cabeçalho,
N bytes de JSON UTF-8 e, em seguida, a região de dados crua.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from config import DTYPE_CONFIG, HEADER_CONFIG
from src.errors import (
    InvalidTensor,
    IoFailure,
    MalformedHeader,
    OverlappingOffsets,
    TruncatedData,
    UnknownDtype,
)

PathLike = Union[str, Path]


@dataclass(frozen=True)
class Tensor:
    """Tensor denso com dtype, shape e bytes row-major little-endian."""

    name: str
    dtype: str
    shape: Tuple[int, ...]
    data: bytes
    overflow_count: int = field(default=0, compare=False)

    @property
    def element_count(self) -> int:
        """Número de elementos (shape vazio = escalar com 1 elemento)."""
        return int(np.prod(self.shape, dtype=np.int64)) if self.shape else 1

    @property
    def nbytes(self) -> int:
        return len(self.data)

    def validate(self) -> None:
        """
        Verifica os invariantes do tensor.

        Raises:
            InvalidTensor: nome vazio/com NUL, shape negativo ou tamanho incoerente
            UnknownDtype: dtype fora da tabela suportada
        """
        if not isinstance(self.name, str) or not self.name or '\x00' in self.name:
            raise InvalidTensor(f"Nome de tensor inválido: {self.name!r}")
        if self.dtype not in DTYPE_CONFIG:
            raise UnknownDtype(f"Dtype não suportado em '{self.name}': {self.dtype}")
        if any((not isinstance(dim, int)) or dim < 0 for dim in self.shape):
            raise InvalidTensor(f"Shape inválido em '{self.name}': {list(self.shape)}")
        expected = self.element_count * DTYPE_CONFIG[self.dtype]['size']
        if len(self.data) != expected:
            raise InvalidTensor(
                f"'{self.name}': {len(self.data)} bytes, esperado {expected} "
                f"para shape {list(self.shape)} em {self.dtype}"
            )

    def to_array(self) -> np.ndarray:
        """
        Materializa o tensor como array float32 com o shape declarado.

        Returns:
            Cópia em float32 (upcast exato para F16/BF16)
        """
        if self.dtype == 'F32':
            flat = np.frombuffer(self.data, dtype='<f4').astype(np.float32)
        elif self.dtype == 'F16':
            flat = np.frombuffer(self.data, dtype='<f2').astype(np.float32)
        elif self.dtype == 'BF16':
            raw = np.frombuffer(self.data, dtype='<u2').astype(np.uint32)
            flat = (raw << 16).view(np.float32)
        else:
            raise UnknownDtype(f"Dtype não suportado: {self.dtype}")
        return flat.reshape(self.shape)

    @classmethod
    def from_array(cls, name: str, array: np.ndarray, dtype: str = 'F32') -> 'Tensor':
        """
        Cria um tensor a partir de um array numérico.

        Args:
            name: Nome do tensor
            array: Valores (qualquer dtype de ponto flutuante)
            dtype: Dtype de armazenamento

        Returns:
            Tensor com os bytes convertidos (arredondamento ao par mais próximo)
        """
        arr = np.ascontiguousarray(array, dtype=np.float32)
        f32 = cls(name=name, dtype='F32', shape=tuple(int(d) for d in arr.shape),
                  data=arr.astype('<f4').tobytes())
        if dtype == 'F32':
            return f32
        return cast_tensor(f32, dtype)


@dataclass
class TensorStore:
    """Mapa nome → tensor com metadados textuais."""

    tensors: Dict[str, Tensor] = field(default_factory=dict)
    metadata: Dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.tensors)

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> List[str]:
        """Nomes em ordem canônica (lexicográfica)."""
        return sorted(self.tensors)

    def add(self, tensor: Tensor) -> None:
        """Adiciona ou substitui um tensor."""
        self.tensors[tensor.name] = tensor

    def array(self, name: str) -> np.ndarray:
        """Atalho para o array float32 de um tensor."""
        return self.tensors[name].to_array()

    @property
    def total_bytes(self) -> int:
        return sum(t.nbytes for t in self.tensors.values())

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray], dtype: str = 'F32',
                    metadata: Optional[Dict[str, str]] = None) -> 'TensorStore':
        """
        Constrói um store a partir de arrays numéricos.

        Args:
            arrays: Mapa nome → array
            dtype: Dtype de armazenamento de todos os tensores
            metadata: Metadados opcionais

        Returns:
            TensorStore
        """
        store = cls(metadata=dict(metadata or {}))
        for name, arr in arrays.items():
            store.add(Tensor.from_array(name, arr, dtype))
        return store


# ---------------------------------------------------------------------------
# Conversão de dtypes
# ---------------------------------------------------------------------------

def _f32_to_bf16_bits(values: np.ndarray) -> np.ndarray:
    """Converte float32 para bits BF16 com arredondamento ao par mais próximo."""
    bits = values.astype('<f4').view(np.uint32).astype(np.uint64)
    lsb = (bits >> 16) & 1
    rounded = ((bits + 0x7FFF + lsb) >> 16).astype(np.uint16)
    # NaN continua NaN (quiet bit ligado)
    nan_mask = np.isnan(values)
    if nan_mask.any():
        rounded[nan_mask] = ((bits[nan_mask] >> 16) | 0x0040).astype(np.uint16)
    return rounded


def cast_tensor(t: Tensor, target: str) -> Tensor:
    """
    Converte um tensor elemento a elemento para outro dtype.

    F32→BF16/F16 usa arredondamento ao par mais próximo; upcasts são exatos.
    Overflow (valor finito que vira ±inf) satura e é contado em overflow_count.

    Args:
        t: Tensor de origem
        target: Dtype de destino ('F32', 'F16' ou 'BF16')

    Returns:
        Novo tensor no dtype de destino
    """
    if target not in DTYPE_CONFIG:
        raise UnknownDtype(f"Dtype de destino não suportado: {target}")
    t.validate()
    if t.dtype == target:
        return Tensor(t.name, t.dtype, t.shape, t.data)

    src = t.to_array().ravel()

    if target == 'F32':
        out_bytes = src.astype('<f4').tobytes()
        overflow = 0
    elif target == 'F16':
        with np.errstate(over='ignore'):
            out = src.astype('<f2')
        overflow = int(np.count_nonzero(np.isinf(out) & np.isfinite(src)))
        out_bytes = out.tobytes()
    else:
        out = _f32_to_bf16_bits(src)
        as_f32 = (out.astype(np.uint32) << 16).view(np.float32)
        overflow = int(np.count_nonzero(np.isinf(as_f32) & np.isfinite(src)))
        out_bytes = out.astype('<u2').tobytes()

    return Tensor(t.name, target, t.shape, out_bytes, overflow_count=overflow)


# ---------------------------------------------------------------------------
# Serialização
# ---------------------------------------------------------------------------

def serialize_store(store: TensorStore) -> bytes:
    """
    Serializa o store na forma canônica (nomes em ordem lexicográfica).

    Args:
        store: Store válido

    Returns:
        Bytes completos do arquivo
    """
    header: Dict[str, object] = {}
    chunks: List[bytes] = []
    offset = 0

    for name in store.names():
        tensor = store.tensors[name]
        tensor.validate()
        if tensor.name != name:
            raise InvalidTensor(f"Chave '{name}' não corresponde ao tensor '{tensor.name}'")
        end = offset + tensor.nbytes
        header[name] = {
            'dtype': tensor.dtype,
            'shape': list(tensor.shape),
            'data_offsets': [offset, end],
        }
        chunks.append(tensor.data)
        offset = end

    if store.metadata:
        meta = store.metadata
        if not all(isinstance(k, str) and isinstance(v, str) for k, v in meta.items()):
            raise InvalidTensor("Metadados devem ser um mapa string → string")
        header[HEADER_CONFIG['metadata_key']] = dict(sorted(meta.items()))

    header_bytes = json.dumps(header, sort_keys=True, separators=(',', ':'),
                              ensure_ascii=False).encode('utf-8')
    # Cabeçalho alinhado com espaços (compatível com leitores existentes)
    pad = (-len(header_bytes)) % HEADER_CONFIG['alignment']
    header_bytes += b' ' * pad

    return struct.pack('<Q', len(header_bytes)) + header_bytes + b''.join(chunks)


def write_store(store: TensorStore, path: PathLike) -> None:
    """
    Grava o store em disco na forma canônica.

    Args:
        store: Store válido
        path: Arquivo de destino

    Raises:
        InvalidTensor: store viola os invariantes
        IoFailure: falha ao gravar
    """
    payload = serialize_store(store)
    try:
        Path(path).write_bytes(payload)
    except OSError as e:
        raise IoFailure(f"Falha ao gravar {path}: {e}") from e


def _parse_header(raw: bytes) -> Tuple[dict, int]:
    length_bytes = HEADER_CONFIG['length_bytes']
    if len(raw) < length_bytes:
        raise MalformedHeader(f"Arquivo com {len(raw)} bytes, menor que o prefixo de tamanho")

    (header_len,) = struct.unpack('<Q', raw[:length_bytes])
    if header_len > HEADER_CONFIG['max_header_bytes'] or length_bytes + header_len > len(raw):
        raise MalformedHeader(f"Prefixo de tamanho inválido: {header_len}")

    try:
        header = json.loads(raw[length_bytes:length_bytes + header_len].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedHeader(f"Cabeçalho não é JSON válido: {e}") from e

    if not isinstance(header, dict):
        raise MalformedHeader("Cabeçalho JSON deve ser um objeto")

    return header, length_bytes + header_len


def _parse_entry(name: str, entry: object) -> Tuple[str, Tuple[int, ...], int, int]:
    if not isinstance(entry, dict):
        raise MalformedHeader(f"Entrada '{name}' não é um objeto")
    dtype = entry.get('dtype')
    if dtype not in DTYPE_CONFIG:
        raise UnknownDtype(f"Dtype não suportado em '{name}': {dtype}")

    shape = entry.get('shape')
    if not isinstance(shape, list) or not all(
        isinstance(d, int) and not isinstance(d, bool) and d >= 0 for d in shape
    ):
        raise MalformedHeader(f"Shape inválido em '{name}': {shape}")

    offsets = entry.get('data_offsets')
    if (not isinstance(offsets, list) or len(offsets) != 2
            or not all(isinstance(o, int) and not isinstance(o, bool) for o in offsets)
            or offsets[0] < 0 or offsets[1] < offsets[0]):
        raise MalformedHeader(f"data_offsets inválido em '{name}': {offsets}")

    return dtype, tuple(shape), offsets[0], offsets[1]


def parse_store(raw: bytes) -> TensorStore:
    """
    Decodifica os bytes completos de um contêiner.

    Args:
        raw: Conteúdo do arquivo

    Returns:
        TensorStore materializado
    """
    header, data_start = _parse_header(raw)
    data = raw[data_start:]

    metadata = header.pop(HEADER_CONFIG['metadata_key'], None) or {}
    if not isinstance(metadata, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in metadata.items()
    ):
        raise MalformedHeader("__metadata__ deve ser um mapa string → string")

    entries = []
    for name, entry in header.items():
        if not name or '\x00' in name:
            raise MalformedHeader(f"Nome de tensor inválido: {name!r}")
        dtype, shape, begin, end = _parse_entry(name, entry)
        entries.append((begin, end, name, dtype, shape))

    # Regiões não sobrepostas e contíguas na ordem do arquivo
    entries.sort(key=lambda e: (e[0], e[1], e[2]))
    cursor = 0
    previous = None
    for begin, end, name, _, _ in entries:
        if begin < cursor:
            raise OverlappingOffsets(f"'{name}' [{begin}, {end}) sobrepõe '{previous}'")
        if begin > cursor:
            raise MalformedHeader(f"Lacuna antes de '{name}' (offset {begin}, esperado {cursor})")
        cursor = end
        previous = name

    if cursor > len(data):
        raise TruncatedData(f"Dados terminam em {len(data)} bytes, cabeçalho declara {cursor}")
    if cursor < len(data):
        raise MalformedHeader(f"{len(data) - cursor} bytes sobrando após o último tensor")

    store = TensorStore(metadata=dict(metadata))
    for begin, end, name, dtype, shape in entries:
        tensor = Tensor(name=name, dtype=dtype, shape=shape, data=bytes(data[begin:end]))
        try:
            tensor.validate()
        except InvalidTensor as e:
            raise MalformedHeader(str(e)) from e
        store.add(tensor)

    return store


def read_store(path: PathLike) -> TensorStore:
    """
    Lê um contêiner de tensores do disco.

    Args:
        path: Arquivo de origem

    Returns:
        TensorStore com todos os tensores materializados

    Raises:
        IoFailure: arquivo inexistente ou ilegível
        MalformedHeader, OverlappingOffsets, TruncatedData, UnknownDtype
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise IoFailure(f"Falha ao ler {path}: {e}") from e
    return parse_store(raw)


def stores_equal(a: TensorStore, b: TensorStore, names: Optional[Iterable[str]] = None) -> bool:
    """Compara dois stores bit a bit (dtype, shape e bytes)."""
    keys = list(names) if names is not None else None
    if keys is None:
        return a.tensors == b.tensors and a.metadata == b.metadata
    return all(k in a and k in b and a[k] == b[k] for k in keys)
