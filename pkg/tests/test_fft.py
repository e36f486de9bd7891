import numpy as np
import pytest

from spark.errors import InvalidInputError
from spark.fft import dft, idft


def dft_direct(x):
    """O(n^2) summation straight from the definition; the oracle."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.size
    j = np.arange(n)
    out = np.zeros(n, dtype=np.complex128)
    for k in range(n):
        out[k] = np.sum(x * np.exp(-2j * np.pi * j * k / n))
    return out


def test_delta_is_flat():
    x = np.zeros(8, dtype=np.complex128)
    x[0] = 1.0
    assert np.allclose(dft(x), np.ones(8), atol=1e-12)


def test_constant_is_dc_only():
    X = dft(np.ones(8, dtype=np.complex128))
    assert abs(X[0] - 8.0) < 1e-12
    assert np.max(np.abs(X[1:])) < 1e-12


def test_matches_direct_oracle_n12():
    rng = np.random.default_rng(0)
    x = rng.normal(size=12) + 1j * rng.normal(size=12)
    got = dft(x)
    want = dft_direct(x)
    assert np.max(np.abs(got - want)) / np.max(np.abs(want)) <= 1e-10


@pytest.mark.parametrize("n", [4, 6, 8, 12, 768])
def test_matches_direct_oracle_random(n):
    rng = np.random.default_rng(n)
    reps = 5 if n == 768 else 20
    for _ in range(reps):
        x = rng.normal(size=n) + 1j * rng.normal(size=n)
        got = dft(x)
        want = dft_direct(x)
        assert np.max(np.abs(got - want)) / np.max(np.abs(want)) <= 1e-10


def test_roundtrip_all_small_n_and_768():
    rng = np.random.default_rng(1)
    for n in list(range(4, 65)) + [768]:
        x = rng.normal(size=n) + 1j * rng.normal(size=n)
        back = idft(dft(x))
        assert np.max(np.abs(back - x)) / np.max(np.abs(x)) <= 1e-9


def test_parseval():
    rng = np.random.default_rng(2)
    for n in [4, 6, 12, 100, 768]:
        x = rng.normal(size=n) + 1j * rng.normal(size=n)
        X = dft(x)
        lhs = np.sum(np.abs(x) ** 2)
        rhs = np.sum(np.abs(X) ** 2) / n
        assert abs(lhs - rhs) / lhs <= 1e-9


def test_short_input_rejected():
    with pytest.raises(InvalidInputError):
        dft(np.ones(3, dtype=np.complex128))
