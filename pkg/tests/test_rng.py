"""Generator correctness: frozen reference vectors and draw properties."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fmx.errors import ParameterRangeError
from fmx.rng import Xoshiro256StarStar, _splitmix64_next, derive_seed

# First outputs of the reference C splitmix64 for state 0 (published vector).
SPLITMIX64_SEED0 = [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]

# First six outputs of the reference C xoshiro256** (Blackman & Vigna),
# seeded with four consecutive splitmix64 outputs, frozen from a compiled
# run of the published implementation.
XOSHIRO_VECTORS = {
    0: [
        0x99EC5F36CB75F2B4, 0xBF6E1F784956452A, 0x1A5F849D4933E6E0,
        0x6AA594F1262D2D2C, 0xBBA5AD4A1F842E59, 0xFFEF8375D9EBCACA,
    ],
    42: [
        0x15780B2E0C2EC716, 0x6104D9866D113A7E, 0xAE17533239E499A1,
        0xECB8AD4703B360A1, 0xFDE6DC7FE2EC5E64, 0xC50DA53101795238,
    ],
    0xDEADBEEFCAFEF00D: [
        0x9E32CFB5BB93EEBB, 0x16006BD9D4AC0014, 0x8ADA5D6D34B6538E,
        0x7C327CA32346A238, 0xC43A6D6A3492CED2, 0xDB639ECB036A9C04,
    ],
}


def test_splitmix64_reference_vector():
    state = 0
    for expected in SPLITMIX64_SEED0:
        state, value = _splitmix64_next(state)
        assert value == expected


@pytest.mark.parametrize("seed,expected", XOSHIRO_VECTORS.items())
def test_xoshiro_reference_vectors(seed, expected):
    gen = Xoshiro256StarStar(seed)
    assert [gen.next64() for _ in range(6)] == expected


def test_determinism_across_instances():
    a = Xoshiro256StarStar(777)
    b = Xoshiro256StarStar(777)
    assert [a.next64() for _ in range(100)] == [b.next64() for _ in range(100)]


def test_below_range_and_rejection():
    gen = Xoshiro256StarStar(5)
    draws = [gen.below(7) for _ in range(2000)]
    assert min(draws) == 0 and max(draws) == 6
    counts = np.bincount(draws, minlength=7)
    assert counts.min() > 0


def test_below_rejects_nonpositive():
    with pytest.raises(ParameterRangeError):
        Xoshiro256StarStar(1).below(0)


def test_sample_without_replacement_distinct():
    gen = Xoshiro256StarStar(9)
    out = gen.sample_without_replacement(list(range(10)), 6)
    assert len(out) == 6 and len(set(out)) == 6
    assert set(out) <= set(range(10))


def test_shuffle_is_permutation():
    gen = Xoshiro256StarStar(11)
    items = list(range(50))
    shuffled = list(items)
    gen.shuffle(shuffled)
    assert sorted(shuffled) == items and shuffled != items


@given(st.integers(min_value=0, max_value=2**64 - 1), st.integers(min_value=0, max_value=2**32))
def test_derive_seed_deterministic_and_path_sensitive(seed, component):
    assert derive_seed(seed, component) == derive_seed(seed, component)
    assert derive_seed(seed, component) != derive_seed(seed, component, component)


def test_derive_seed_distinguishes_order():
    assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)
    assert derive_seed(1, 0) != derive_seed(1, 1)
