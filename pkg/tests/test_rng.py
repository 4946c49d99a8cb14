import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rcising.rng import LANE_INIT, LANE_SWEEP, SeedError, check_seed, derive_seed, stream


def test_stream_is_reproducible():
    a = stream(7, 3, 11).random(16)
    b = stream(7, 3, 11).random(16)
    np.testing.assert_array_equal(a, b)


@given(st.integers(0, 2**64 - 1), st.integers(0, 50), st.integers(0, 50))
def test_cells_are_distinct(seed, chain, seg):
    base = stream(seed, chain, seg).integers(0, 2**63, 4)
    for other in (stream(seed, chain + 1, seg), stream(seed, chain, seg + 1),
                  stream(seed, chain, seg, LANE_INIT)):
        assert not np.array_equal(base, other.integers(0, 2**63, 4))


@pytest.mark.parametrize("bad", [None, -1, 2**64, 1.5, True, "3"])
def test_bad_seeds(bad):
    with pytest.raises(SeedError):
        check_seed(bad)


def test_derive_seed():
    assert derive_seed(1, "beta", 0.3) == derive_seed(1, "beta", 0.3)
    assert derive_seed(1, "beta", 0.3) != derive_seed(1, "beta", 0.31)
    assert derive_seed(1, "ab") != derive_seed(1, "a", "b")
    assert 0 <= derive_seed(2**64 - 1, "x") < 2**64
    assert LANE_SWEEP != LANE_INIT
