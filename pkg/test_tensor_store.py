#!/usr/bin/env python3
"""
Testes do contêiner binário de tensores
"""

import json
import os
import struct
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

# Adicionar diretório raiz ao path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.errors import (
    InvalidTensor,
    IoFailure,
    MalformedHeader,
    OverlappingOffsets,
    TruncatedData,
    UnknownDtype,
)
from src.store import (
    Tensor,
    TensorStore,
    cast_tensor,
    parse_store,
    read_store,
    serialize_store,
    stores_equal,
    write_store,
)


def _container(header: dict, data: bytes) -> bytes:
    body = json.dumps(header).encode('utf-8')
    return struct.pack('<Q', len(body)) + body + data


# ============================================================================
# Leitura de arquivos montados byte a byte
# ============================================================================

def test_hand_authored_fixture():
    header = b'{"w":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}}'
    raw = (len(header).to_bytes(8, 'little') + header
           + bytes.fromhex('0000803F00000040'))

    store = parse_store(raw)

    assert store.names() == ['w']
    assert store['w'].shape == (2,)
    assert store['w'].dtype == 'F32'
    assert store['w'].data == bytes.fromhex('0000803F00000040')
    assert store.array('w').tolist() == [1.0, 2.0]


def test_overlapping_offsets():
    raw = _container({
        'a': {'dtype': 'F32', 'shape': [2], 'data_offsets': [0, 8]},
        'b': {'dtype': 'F32', 'shape': [2], 'data_offsets': [4, 12]},
    }, b'\x00' * 12)
    with pytest.raises(OverlappingOffsets):
        parse_store(raw)


def test_truncated_data():
    raw = _container({'a': {'dtype': 'F32', 'shape': [4], 'data_offsets': [0, 16]}}, b'\x00' * 10)
    with pytest.raises(TruncatedData):
        parse_store(raw)


def test_bad_length_prefix():
    with pytest.raises(MalformedHeader):
        parse_store(b'\x01\x02')
    with pytest.raises(MalformedHeader):
        parse_store(struct.pack('<Q', 10_000) + b'{}')


def test_header_not_json():
    body = b'not json'
    with pytest.raises(MalformedHeader):
        parse_store(struct.pack('<Q', len(body)) + body)


def test_unknown_dtype():
    raw = _container({'a': {'dtype': 'I32', 'shape': [1], 'data_offsets': [0, 4]}}, b'\x00' * 4)
    with pytest.raises(UnknownDtype):
        parse_store(raw)


def test_metadata_preserved(tmp_path):
    store = TensorStore.from_arrays({'x': np.ones((2, 2), dtype=np.float32)},
                                    metadata={'format': 'pt', 'nota': 'ção'})
    path = tmp_path / 'm.safetensors'
    write_store(store, path)
    assert read_store(path).metadata == {'format': 'pt', 'nota': 'ção'}


def test_read_missing_file(tmp_path):
    with pytest.raises(IoFailure):
        read_store(tmp_path / 'nao_existe.safetensors')


# ============================================================================
# Escrita canônica
# ============================================================================

def test_empty_store_bytes():
    raw = serialize_store(TensorStore())
    assert raw == struct.pack('<Q', 8) + b'{}      '
    assert len(parse_store(raw)) == 0


def test_names_written_in_order():
    store = TensorStore()
    store.add(Tensor.from_array('b', np.array([2.0], dtype=np.float32)))
    store.add(Tensor.from_array('a', np.array([1.0], dtype=np.float32)))

    raw = serialize_store(store)
    (n,) = struct.unpack('<Q', raw[:8])
    header = raw[8:8 + n].decode('utf-8')

    assert header.index('"a"') < header.index('"b"')
    assert raw[8 + n:] == np.array([1.0, 2.0], dtype='<f4').tobytes()


def test_write_twice_identical(tmp_path, synthetic):
    p1, p2 = tmp_path / 'a.safetensors', tmp_path / 'b.safetensors'
    write_store(synthetic.base, p1)
    write_store(synthetic.base, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_invalid_tensor_rejected():
    store = TensorStore()
    store.add(Tensor(name='x', dtype='F32', shape=(3,), data=b'\x00' * 8))
    with pytest.raises(InvalidTensor):
        serialize_store(store)


# ============================================================================
# Conversão de dtypes
# ============================================================================

def _bf16_oracle(value: float) -> float:
    """Arredonda a mantissa para 7 bits com empate ao par, bit a bit."""
    bits = struct.unpack('<I', struct.pack('<f', value))[0]
    upper, lower = bits >> 16, bits & 0xFFFF
    if lower > 0x8000 or (lower == 0x8000 and upper & 1):
        upper += 1
    return struct.unpack('<f', struct.pack('<I', upper << 16))[0]


@pytest.mark.parametrize('value, expected', [
    (1.0, 1.0),
    (0.0, 0.0),
    (1.00390625, 1.0),        # 1 + 2⁻⁸: empate, fica no par
    (1.01171875, 1.015625),   # 1 + 3·2⁻⁸: empate, sobe para o par
    (-2.5, -2.5),
])
def test_bf16_rounding(value, expected):
    t = Tensor.from_array('x', np.array([value], dtype=np.float32))
    bf16 = cast_tensor(t, 'BF16')
    assert bf16.to_array()[0] == expected == _bf16_oracle(value)
    assert cast_tensor(bf16, 'F32').to_array()[0] == expected


def test_bf16_matches_oracle_on_random_values(rng):
    values = rng.standard_normal(500).astype(np.float32)
    bf16 = cast_tensor(Tensor.from_array('x', values), 'BF16').to_array()
    assert bf16.tolist() == [_bf16_oracle(float(v)) for v in values]


def test_f16_overflow_counted():
    t = Tensor.from_array('x', np.array([1.0, 1e6, -1e6], dtype=np.float32))
    f16 = cast_tensor(t, 'F16')
    assert f16.overflow_count == 2
    assert np.isinf(f16.to_array()[1:]).all()


def test_upcast_then_back_is_identity(rng):
    values = rng.standard_normal(64).astype(np.float32)
    for narrow in ('F16', 'BF16'):
        t = cast_tensor(Tensor.from_array('x', values), narrow)
        assert cast_tensor(cast_tensor(t, 'F32'), narrow) == t


# ============================================================================
# Propriedades
# ============================================================================

_names = st.text(alphabet='abcdefghij._0123456789', min_size=1, max_size=12)
_shapes = st.lists(st.integers(min_value=0, max_value=4), min_size=0, max_size=3)


@st.composite
def stores(draw):
    entries = draw(st.dictionaries(_names, st.tuples(st.sampled_from(['F32', 'F16', 'BF16']), _shapes),
                                   max_size=5))
    store = TensorStore()
    for name, (dtype, shape) in entries.items():
        count = int(np.prod(shape)) if shape else 1
        values = draw(st.lists(st.floats(width=32, allow_nan=False, allow_infinity=False,
                                         min_value=-1e4, max_value=1e4),
                               min_size=count, max_size=count))
        arr = np.array(values, dtype=np.float32).reshape(shape)
        store.add(Tensor.from_array(name, arr, dtype))
    text = st.text(alphabet=st.characters(blacklist_categories=('Cs',)), max_size=8)
    meta = draw(st.dictionaries(text.filter(bool), text, max_size=2))
    store.metadata.update(meta)
    return store


@settings(max_examples=50, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(stores())
def test_round_trip_bitwise(store):
    raw = serialize_store(store)
    back = parse_store(raw)
    assert stores_equal(back, store)
    assert serialize_store(back) == raw


@settings(max_examples=50, deadline=None)
@given(stores(), st.randoms())
def test_insertion_order_does_not_matter(store, rnd):
    names = store.names()
    rnd.shuffle(names)
    shuffled = TensorStore(metadata=dict(store.metadata))
    for name in names:
        shuffled.add(store[name])
    assert serialize_store(shuffled) == serialize_store(store)


if __name__ == '__main__':
    sys.exit(pytest.main([__file__, '-v']))
