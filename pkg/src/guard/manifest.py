"""
Manifesto de execução gravado ao lado de cada exportação
"""

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

from config import DEFAULT_DECODING, FINGERPRINT_ALGORITHM, MANIFEST_NAME
from src import __version__
from src.errors import InvalidManifest, IoFailure
from src.guard.fingerprint import Fingerprint, fingerprint
from src.store.tensor_store import TensorStore
from src.utils.console import Console
from src.utils.date_utils import DateUtils

PathLike = Union[str, Path]


@dataclass
class RunManifest:
    """Proveniência de uma exportação: entradas, pesos, template e decodificação."""

    base_fp: Fingerprint
    adapter_fps: Dict[str, Fingerprint]
    merge_weights: Dict[str, float]
    template_id: str
    decoding: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_DECODING))
    created_at: str = ''
    tool_version: str = __version__

    def __post_init__(self):
        if set(self.adapter_fps) != set(self.merge_weights):
            raise InvalidManifest(
                f"Adaptadores {sorted(self.adapter_fps)} não batem com os pesos {sorted(self.merge_weights)}"
            )
        for name, w in self.merge_weights.items():
            if not math.isfinite(float(w)):
                raise InvalidManifest(f"Peso não finito para '{name}': {w}")

    def to_dict(self, include_created_at: bool = True) -> Dict[str, object]:
        data = {
            'base_fp': self.base_fp.to_dict(),
            'adapter_fps': {k: v.to_dict() for k, v in sorted(self.adapter_fps.items())},
            'merge_weights': {k: float(v) for k, v in sorted(self.merge_weights.items())},
            'template_id': self.template_id,
            'decoding': {k: float(v) for k, v in sorted(self.decoding.items())},
            'tool_version': self.tool_version,
        }
        if include_created_at:
            data['created_at'] = self.created_at
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + '\n'

    @property
    def digest(self) -> str:
        """Digest do JSON canônico sem created_at; entradas idênticas geram o mesmo valor."""
        canonical = json.dumps(self.to_dict(include_created_at=False), sort_keys=True,
                               separators=(',', ':'), ensure_ascii=False)
        return hashlib.new(FINGERPRINT_ALGORITHM, canonical.encode('utf-8')).hexdigest()

    @property
    def algorithms(self) -> set:
        return {self.base_fp.algorithm} | {fp.algorithm for fp in self.adapter_fps.values()}

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> 'RunManifest':
        try:
            return cls(
                base_fp=Fingerprint.from_dict(data['base_fp']),
                adapter_fps={k: Fingerprint.from_dict(v) for k, v in data['adapter_fps'].items()},
                merge_weights={k: float(v) for k, v in data['merge_weights'].items()},
                template_id=str(data['template_id']),
                decoding={k: float(v) for k, v in data.get('decoding', {}).items()},
                created_at=str(data.get('created_at', '')),
                tool_version=str(data.get('tool_version', '')),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            raise InvalidManifest(f"Manifesto incompleto ou inválido: {e}") from e


def build_manifest(base: TensorStore, adapters: Mapping[str, TensorStore],
                   weights: Mapping[str, float], template_id: str,
                   decoding: Optional[Mapping[str, float]] = None,
                   created_at: Optional[str] = None) -> RunManifest:
    """
    Monta o manifesto de uma mescla a partir dos stores de entrada.

    Args:
        base: Checkpoint base
        adapters: Nome → store serializado de cada adaptador
        weights: Nome → peso de mescla
        template_id: Template de chat usado na avaliação
        decoding: Preset de decodificação (temperature, top_p)
        created_at: Instante ISO 8601; padrão é o relógio (ou SOURCE_DATE_EPOCH)

    Returns:
        RunManifest
    """
    return RunManifest(
        base_fp=fingerprint(base),
        adapter_fps={name: fingerprint(store) for name, store in adapters.items()},
        merge_weights={name: float(w) for name, w in weights.items()},
        template_id=str(template_id),
        decoding=dict(DEFAULT_DECODING if decoding is None else decoding),
        created_at=created_at or DateUtils.utc_now(),
    )


def manifest_path(directory: PathLike) -> Path:
    return Path(directory) / MANIFEST_NAME


def read_manifest(directory: PathLike) -> Optional[RunManifest]:
    """
    Lê o manifesto de um diretório de exportação.

    Args:
        directory: Diretório da exportação

    Returns:
        RunManifest ou None se o arquivo não existe
    """
    path = manifest_path(directory)
    if not path.exists():
        return None
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise InvalidManifest(f"{path} não é JSON válido: {e}") from e
    except OSError as e:
        raise IoFailure(f"Falha ao ler {path}: {e}") from e
    if not isinstance(data, dict):
        raise InvalidManifest(f"{path} deve conter um objeto JSON")
    return RunManifest.from_dict(data)


def write_manifest(directory: PathLike, manifest: RunManifest) -> Path:
    """
    Grava o manifesto em JSON canônico (chaves ordenadas, indentação 2).

    Args:
        directory: Diretório da exportação
        manifest: Manifesto

    Returns:
        Caminho do arquivo gravado
    """
    path = manifest_path(directory)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(manifest.to_json())
    except OSError as e:
        raise IoFailure(f"Falha ao gravar {path}: {e}") from e
    Console.ok(f"Manifesto salvo: {path}")
    return path
