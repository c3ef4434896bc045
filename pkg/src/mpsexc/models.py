"""Reference tensors and channels used throughout the tests and the CLI."""

from __future__ import annotations

import numpy as np

from .channel import QuantumChannel, vec
from .errors import ValidationError
from .mps import MpsTensor, canonicalize

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SP = np.array([[0, 1], [0, 0]], dtype=complex)
SM = SP.T.copy()
PAULI = np.array([I2, SX, SY, SZ])
PAULI_P = (0.7, 0.1, 0.1, 0.1)


def pauli_tensor(p=PAULI_P) -> MpsTensor:
    """``A^i = sqrt(p_i) sigma_i``; a unital canonical tensor with ``d = 4``."""
    p = np.asarray(p, float)
    if p.shape != (4,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
        raise ValidationError("p must be four nonnegative weights summing to 1")
    return MpsTensor(np.sqrt(p)[:, None, None] * PAULI)


def pauli_eigenvalues(p=PAULI_P) -> np.ndarray:
    """Channel eigenvalues on ``(1, sx, sy, sz)``."""
    p0, px, py, pz = p
    return np.array([1.0, p0 + px - py - pz, p0 - px + py - pz, p0 - px - py + pz])


def aklt_family(lam: float) -> MpsTensor:
    """``(sqrt(1-lam) s+, sqrt(1-lam) s-, sqrt(lam) sz)``; ``lam = 2/3`` is AKLT."""
    if not 0 <= lam <= 1:
        raise ValidationError("lambda must lie in [0, 1]")
    return MpsTensor([np.sqrt(1 - lam) * SP, np.sqrt(1 - lam) * SM, np.sqrt(lam) * SZ])


def ghz_tensor() -> MpsTensor:
    return MpsTensor([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])


def random_tensor(rng: np.random.Generator, d: int, D: int) -> MpsTensor:
    A = rng.standard_normal((d, D, D)) + 1j * rng.standard_normal((d, D, D))
    return MpsTensor(A)


def random_canonical(rng: np.random.Generator, d: int, D: int) -> tuple[MpsTensor, np.ndarray]:
    return canonicalize(random_tensor(rng, d, D))


def normal_channel(basis: np.ndarray, eigenvalues) -> QuantumChannel:
    """``sum_a lambda_a |X_a)(X_a|`` for an orthonormal basis ``X_a``."""
    B = np.array([vec(X) for X in basis])
    M = (B.T * np.asarray(eigenvalues)) @ B.conj()
    return QuantumChannel(basis.shape[1], M, "direct")


PM_BASIS = np.array([I2 / np.sqrt(2), SP, SM, SZ / np.sqrt(2)])


def pm_channel(lam: float, phi: float = 0.0) -> QuantumChannel:
    """Normal unital qubit channel with modes ``(1, s+, s-, sz)`` and
    eigenvalues ``(1, lam e^{i phi}, lam e^{-i phi}, lam^2)``."""
    ev = [1.0, lam * np.exp(1j * phi), lam * np.exp(-1j * phi), lam**2]
    return normal_channel(PM_BASIS, ev)


def identity_channel(D: int) -> QuantumChannel:
    return QuantumChannel(D, np.eye(D * D, dtype=complex), "direct")


def transpose_channel(D: int) -> QuantumChannel:
    M = np.zeros((D * D, D * D), dtype=complex)
    for a in range(D):
        for b in range(D):
            M[b * D + a, a * D + b] = 1
    return QuantumChannel(D, M, "direct")


def dephasing_channel(lam: float) -> QuantumChannel:
    """``X -> (1 Tr X + lam sz Tr(sz X)) / 2``."""
    M = (np.outer(vec(I2), vec(I2).conj()) + lam * np.outer(vec(SZ), vec(SZ).conj())) / 2
    return QuantumChannel(2, M, "direct")


def mixing_channel(rho: np.ndarray) -> QuantumChannel:
    """``X -> rho Tr X`` (every non-leading eigenvalue zero)."""
    D = rho.shape[0]
    return QuantumChannel(D, np.outer(vec(rho), vec(np.eye(D)).conj()), "direct")
