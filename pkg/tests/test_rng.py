import numpy as np
import pytest
from hypothesis import given, strategies as st

from maxineq.rng import BLOCK_SIZE, blocks, substream


def test_same_key_same_stream():
    a = substream(7, "x", 3).standard_normal(5)
    b = substream(7, "x", 3).standard_normal(5)
    np.testing.assert_array_equal(a, b)


def test_different_keys_differ():
    a = substream(7, "x", 3).standard_normal(5)
    assert not np.array_equal(a, substream(7, "x", 4).standard_normal(5))
    assert not np.array_equal(a, substream(7, "y", 3).standard_normal(5))
    assert not np.array_equal(a, substream(8, "x", 3).standard_normal(5))


@pytest.mark.parametrize("bad", [-1, 1.5, "a"])
def test_bad_seed(bad):
    with pytest.raises(ValueError):
        substream(bad)


def test_bad_key():
    with pytest.raises(TypeError):
        substream(1, 1.5)


@given(st.integers(min_value=0, max_value=10 * BLOCK_SIZE + 7))
def test_blocks_partition(n):
    parts = blocks(n)
    assert sum(s for _, s in parts) == n
    assert [k for k, _ in parts] == list(range(len(parts)))
    assert all(0 < s <= BLOCK_SIZE for _, s in parts)
