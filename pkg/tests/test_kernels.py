import numpy as np
import pytest

from mpsexc import kernels

BACKENDS = ["numpy", "numba"] if kernels.HAVE_NUMBA else ["numpy"]


def _brute_words(T, J):
    N, d = T.shape[:2]
    out = np.empty(d**N, complex)
    for idx in range(d**N):
        digits = np.unravel_index(idx, (d,) * N)
        M = np.eye(T.shape[-1], dtype=complex)
        for n, i in enumerate(digits):
            M = M @ T[n, i]
        out[idx] = np.trace(M if J is None else M @ J)
    return out


@pytest.mark.parametrize("backend", BACKENDS)
def test_word_amplitudes_match_brute_force(rng, backend):
    T = rng.standard_normal((5, 3, 2, 2)) + 1j * rng.standard_normal((5, 3, 2, 2))
    J = rng.standard_normal((2, 2))
    np.testing.assert_allclose(kernels.word_amplitudes(T, None, backend), _brute_words(T, None), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(kernels.word_amplitudes(T, J, backend), _brute_words(T, J), rtol=1e-12, atol=1e-12)


def _dense_local_sum(h, N, d):
    w = int(round(np.log(h.shape[0]) / np.log(d)))
    H = np.zeros((d**N, d**N), complex)
    for j in range(N):
        for s in range(d**N):
            dig = list(np.unravel_index(s, (d,) * N))
            row = 0
            for r in range(w):
                row = row * d + dig[(j + r) % N]
            for c in range(d**w):
                new = dig.copy()
                cc = np.unravel_index(c, (d,) * w)
                for r in range(w):
                    new[(j + r) % N] = cc[r]
                H[np.ravel_multi_index(new, (d,) * N), s] += h[c, row]
    return H


@pytest.mark.parametrize("backend", BACKENDS)
def test_local_sum_matches_dense_ring(rng, backend):
    N, d = 5, 2
    h = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    H = _dense_local_sum(h, N, d)
    v = rng.standard_normal((d**N, 3)) + 1j * rng.standard_normal((d**N, 3))
    np.testing.assert_allclose(kernels.local_sum(v, h, N, d, backend), H @ v, atol=1e-12)
    np.testing.assert_allclose(kernels.local_sum(v[:, 0], h, N, d, backend), H @ v[:, 0], atol=1e-12)


def test_local_sum_rejects_oversized_window(rng):
    with pytest.raises(ValueError):
        kernels.local_sum(np.ones(8), np.eye(16), 3, 2)


@pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba unavailable")
def test_gillespie_backends_identical(rng):
    M, N = 50, 12
    occ = (rng.random((M, N)) < 0.3).astype(np.uint8)
    rates = np.zeros((2, 2, 2, 2))
    rates[:, :, 1, 0] = 0.3
    rates[:, :, 0, 1] = 0.3
    rates[1, :, 0, 0] += 0.1
    u = rng.random((M, 600))
    snaps = np.linspace(0.2, 3.0, 6)
    a = kernels.gillespie(occ, rates, 3.0, snaps, u, True, "numpy")
    b = kernels.gillespie(occ, rates, 3.0, snaps, u, True, "numba")
    for x, y in zip(a, b):
        if np.issubdtype(np.asarray(x).dtype, np.floating):
            # event times may differ by an ulp (fused multiply-add)
            np.testing.assert_allclose(x, y, rtol=1e-13, atol=1e-15)
        else:
            np.testing.assert_array_equal(x, y)


def test_backend_env_selection(monkeypatch):
    monkeypatch.setenv("MPSEXC_BACKEND", "numpy")
    assert kernels.default_backend() == "numpy"
    with pytest.raises(ValueError):
        kernels._resolve("fortran")
