"""Módulo do contêiner binário de tensores."""

from .tensor_store import (
    Tensor,
    TensorStore,
    cast_tensor,
    parse_store,
    read_store,
    serialize_store,
    stores_equal,
    write_store,
)

__all__ = [
    'Tensor',
    'TensorStore',
    'cast_tensor',
    'parse_store',
    'read_store',
    'serialize_store',
    'stores_equal',
    'write_store',
]
