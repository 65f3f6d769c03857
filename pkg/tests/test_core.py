import numpy as np
import pytest

from smcibm.core import (
    CapacityError,
    ConvergenceError,
    RegionError,
    SmciError,
    chain_generators,
    check_capacity,
    derive_seed,
    encode_rows,
    iter_spin_chunks,
    parse_index_list,
    spin_states,
)


def test_spin_states_order():
    states = spin_states(2)
    assert states.tolist() == [[-1, -1], [-1, 1], [1, -1], [1, 1]]
    assert states.dtype == np.int8


def test_spin_states_empty():
    assert spin_states(0).shape == (1, 0)


def test_chunks_concatenate_to_full_enumeration():
    chunks = list(iter_spin_chunks(7, chunk_bits=3))
    assert len(chunks) == 16
    assert np.array_equal(np.concatenate(chunks), spin_states(7))


def test_encode_rows_inverts_enumeration():
    states = spin_states(6)
    assert np.array_equal(encode_rows(states), np.arange(64))


def test_capacity_error():
    check_capacity("region", 20, 20)
    with pytest.raises(CapacityError) as info:
        check_capacity("region", 21, 20)
    assert info.value.size == 21
    assert info.value.cap == 20
    assert "21" in str(info.value) and "20" in str(info.value)
    assert isinstance(info.value, ValueError)
    assert isinstance(info.value, SmciError)


def test_error_hierarchy():
    assert issubclass(RegionError, ValueError)
    err = ConvergenceError("stalled", 0.5)
    assert isinstance(err, RuntimeError)
    assert err.grad_norm == 0.5


def test_derive_seed_depends_only_on_keys():
    assert derive_seed(0, 3, "model") == derive_seed(0, 3, "model")
    assert derive_seed(0, 3, "model") != derive_seed(0, 4, "model")
    assert derive_seed(0, 3, "model") != derive_seed(1, 3, "model")
    assert 0 <= derive_seed(7, "x") < 2 ** 63


def test_chain_streams_do_not_depend_on_count():
    few = chain_generators(11, 3)
    many = chain_generators(11, 10)
    for a, b in zip(few, many):
        assert np.array_equal(a.random(5), b.random(5))
    tail = chain_generators(11, 2, first=3)
    assert np.array_equal(tail[0].random(4), chain_generators(11, 4)[3].random(4))


def test_parse_index_list():
    assert parse_index_list("1,4, 7") == [1, 4, 7]
    assert parse_index_list("3") == [3]
    with pytest.raises(ValueError):
        parse_index_list("1,a")
