"""Counter-based generator: known-answer vectors, stream independence, range."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from echoed_walks.rng import RandomTape, philox4x32, uniform2, uniforms

U32 = np.uint32

# Random123 philox4x32-10 known-answer vectors: (counter, key, output).
KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    (
        (0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344),
        (0xA4093822, 0x299F31D0),
        (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1),
    ),
]


@pytest.mark.parametrize("ctr,key,expected", KAT)
def test_philox_known_answers(ctr, key, expected):
    out = philox4x32(*(U32(c) for c in ctr), *(U32(k) for k in key))
    assert tuple(int(x) for x in out) == expected


def test_same_address_same_draw(tape):
    a = uniforms(tape, 3, 1000)
    b = uniforms(RandomTape(tape.master_seed, tape.stream_index), 3, 1000)
    assert np.array_equal(a, b)


def test_slots_and_streams_differ(tape):
    a = uniforms(tape, 0, 1000)
    assert not np.array_equal(a, uniforms(tape, 1, 1000))
    assert not np.array_equal(a, uniforms(tape.stream(1), 0, 1000))
    assert not np.array_equal(a, uniforms(tape.derive("x"), 0, 1000))


def test_derive_is_deterministic(tape):
    assert tape.derive("a") == tape.derive("a")
    assert tape.derive("a") != tape.derive("b")


def test_uniform_moments(tape):
    u = uniforms(tape, 0, 200_000)
    assert abs(u.mean() - 0.5) < 4 * np.sqrt(1 / 12 / len(u))
    assert abs(u.var() - 1 / 12) < 0.002
    counts, _ = np.histogram(u, bins=20, range=(0, 1))
    chi2 = ((counts - len(u) / 20) ** 2 / (len(u) / 20)).sum()
    assert chi2 < 43.8  # 0.999 quantile, 19 dof


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1), st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_uniforms_open_interval(seed, stream, counter, slot):
    t = RandomTape(seed, stream)
    u, v = uniform2(*t.words(), counter, slot)
    assert 0.0 < u < 1.0 and 0.0 < v < 1.0


def test_bad_seed_rejected():
    with pytest.raises(ValueError):
        RandomTape(-1)
    with pytest.raises(ValueError):
        RandomTape(2**64)
