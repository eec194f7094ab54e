"""
Impressão digital de conteúdo para stores de tensores
"""

import hashlib
from dataclasses import asdict, dataclass
from typing import Dict

from config import FINGERPRINT_ALGORITHM
from src.store.tensor_store import TensorStore, serialize_store


@dataclass(frozen=True)
class Fingerprint:
    """Digest da forma canônica serializada de um store."""

    digest: str
    name_count: int
    total_bytes: int
    algorithm: str = FINGERPRINT_ALGORITHM

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> 'Fingerprint':
        return cls(
            digest=str(data['digest']),
            name_count=int(data['name_count']),
            total_bytes=int(data['total_bytes']),
            algorithm=str(data.get('algorithm', FINGERPRINT_ALGORITHM)),
        )


def fingerprint(store: TensorStore) -> Fingerprint:
    """
    Calcula a impressão digital determinística de um store.

    Stores iguais (independente da ordem de inserção) geram o mesmo digest,
    pois o hash é feito sobre os bytes canônicos.

    Args:
        store: Store válido

    Returns:
        Fingerprint com digest hexadecimal de 32 bytes
    """
    payload = serialize_store(store)
    digest = hashlib.new(FINGERPRINT_ALGORITHM, payload).hexdigest()
    return Fingerprint(
        digest=digest,
        name_count=len(store),
        total_bytes=store.total_bytes,
    )
