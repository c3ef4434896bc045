"""Translation-invariant MPS tensors, canonical gauge and explicit state vectors."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from . import kernels
from .channel import QuantumChannel, transfer_matrix
from .errors import (
    CapacityError,
    NonFiniteError,
    NonInjectiveError,
    NormalizationError,
    NumericalError,
    ShapeMismatchError,
    ValidationError,
)

DEFAULT_CAP = 2**24


@dataclass(frozen=True, eq=False)
class MpsTensor:
    """A family of ``d`` complex ``D x D`` matrices ``A^(i)``."""

    matrices: np.ndarray

    def __post_init__(self):
        A = np.array(self.matrices, dtype=np.complex128)
        if A.ndim != 3 or A.shape[1] != A.shape[2] or A.shape[0] < 1 or A.shape[1] < 1:
            raise ShapeMismatchError(f"MPS tensor must have shape (d, D, D), got {A.shape}")
        if not np.all(np.isfinite(A)):
            raise NonFiniteError("MPS tensor has non-finite entries")
        A.setflags(write=False)
        object.__setattr__(self, "matrices", A)

    @property
    def d(self) -> int:
        return self.matrices.shape[0]

    @property
    def D(self) -> int:
        return self.matrices.shape[1]

    def __getitem__(self, i: int) -> np.ndarray:
        return self.matrices[i]

    def channel(self) -> QuantumChannel:
        return transfer_matrix(self)

    def gauge(self, S: np.ndarray) -> "MpsTensor":
        """Tensor ``S A^(i) S^{-1}``."""
        Sinv = np.linalg.inv(S)
        return MpsTensor(np.einsum("ab,ibc,cd->iad", S, self.matrices, Sinv))


def load_mps(raw, d: int, D: int) -> MpsTensor:
    """Validate raw matrix data as an MPS tensor (no gauge applied).

    ``raw`` may be a flat sequence of ``d*D*D`` complex numbers or a nested
    sequence of ``d`` matrices.
    """
    if d < 1 or D < 1:
        raise ValidationError("d and D must be positive")
    if isinstance(raw, np.ndarray):
        arr = raw.astype(np.complex128)
    else:
        try:
            arr = np.array(raw, dtype=np.complex128)
        except (ValueError, TypeError) as exc:
            raise ShapeMismatchError(f"matrices do not share a common shape: {exc}") from None
    if arr.ndim == 1:
        if arr.size != d * D * D:
            raise ShapeMismatchError(f"expected {d * D * D} entries, got {arr.size}")
        arr = arr.reshape(d, D, D)
    if arr.shape != (d, D, D):
        raise ShapeMismatchError(f"expected shape {(d, D, D)}, got {arr.shape}")
    return MpsTensor(arr)


def _herm_sqrt(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, U = np.linalg.eigh((M + M.conj().T) / 2)
    if w[0] <= 1e-13 * max(1.0, w[-1]):
        raise NonInjectiveError("fixed point is not positive definite")
    s = np.sqrt(w)
    return (U * s) @ U.conj().T, (U / s) @ U.conj().T


def canonicalize(mps: MpsTensor, tol: float = 1e-10) -> tuple[MpsTensor, np.ndarray]:
    """Bring an injective tensor to the canonical gauge.

    The returned tensor satisfies ``sum_i A_i^dag A_i = 1`` and its channel
    has a diagonal positive fixed point ``rho`` (descending, unit trace).

    Raises
    ------
    NonInjectiveError
        Degenerate leading eigenvalue or singular fixed point.
    NormalizationError
        Leading eigenvalue is not real positive after rescaling.
    """
    A = mps.matrices
    E = transfer_matrix(mps).matrix
    D = mps.D
    w, vl, vr = sla.eig(E, left=True, right=True)
    i0 = int(np.argmax(np.abs(w)))
    radius = abs(w[i0])
    if radius == 0:
        raise NonInjectiveError("transfer channel is nilpotent")
    if np.sum(np.abs(w - w[i0]) <= 1e-9 * radius) > 1:
        raise NonInjectiveError("leading transfer eigenvalue is degenerate")
    if abs(w[i0] / radius - 1) > 1e-8:
        raise NormalizationError(f"leading eigenvalue {w[i0]} is not real positive")
    A = A / np.sqrt(radius)
    l = vl[:, i0].reshape(D, D)
    l = l / (np.trace(l) / abs(np.trace(l)))
    S, Sinv = _herm_sqrt(l)
    r = vr[:, i0].reshape(D, D)
    r = S @ r @ S
    r = r / np.trace(r)
    rho_vals, U = np.linalg.eigh((r + r.conj().T) / 2)
    order = np.argsort(rho_vals)[::-1]
    rho_vals, U = rho_vals[order], U[:, order]
    if rho_vals[-1] <= 0:
        raise NonInjectiveError("right fixed point is not positive definite")
    G = U.conj().T @ S
    Ginv = Sinv @ U
    B = np.einsum("ab,ibc,cd->iad", G, A, Ginv)
    out = MpsTensor(B)
    rho = np.diag(rho_vals).astype(np.complex128)
    ch = out.channel()
    res_tp = np.linalg.norm(ch.adjoint_apply(np.eye(D)) - np.eye(D))
    res_fp = np.linalg.norm(ch.apply(rho) - rho)
    if res_tp > tol or res_fp > tol:
        raise NumericalError(f"canonical gauge residuals too large ({res_tp:.2e}, {res_fp:.2e})")
    return out, rho


def word_matrix(mps: MpsTensor, L: int) -> np.ndarray:
    """Rows ``(A^{i_1} ... A^{i_L})`` flattened, shape ``(d**L, D*D)``."""
    if L < 1:
        raise ValidationError("word length must be >= 1")
    A = mps.matrices
    W = A.copy()
    for _ in range(L - 1):
        W = np.einsum("wab,ibc->wiac", W, A).reshape(-1, mps.D, mps.D)
    return W.reshape(W.shape[0], -1)


def injectivity_rank(mps: MpsTensor, L: int) -> tuple[int, bool]:
    """Rank of ``X -> (Tr(X A^{i_1}...A^{i_L}))_{i}`` and whether it equals D^2."""
    V = word_matrix(mps, L)
    rank = int(np.linalg.matrix_rank(V))
    return rank, rank == mps.D**2


# ---------------------------------------------------------------------------
# state vectors
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StateVector:
    """Explicit amplitudes of an N-site state (site 0 most significant)."""

    N: int
    d: int
    amplitudes: np.ndarray
    norm_sq: float = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=np.complex128)
        if a.shape != (self.d**self.N,):
            raise ShapeMismatchError(f"expected {self.d**self.N} amplitudes, got {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "norm_sq", float(np.vdot(a, a).real))

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.norm_sq))

    def normalized(self) -> np.ndarray:
        if self.norm_sq == 0:
            raise NumericalError("cannot normalize the zero vector")
        return self.amplitudes / self.norm

    def overlap(self, other: "StateVector") -> complex:
        """``<self|other>``."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def translated(self, shift: int = 1) -> np.ndarray:
        """Amplitudes of ``psi(c_shift, ..., c_{N-1}, c_0, ...)``."""
        return translate(self.amplitudes, self.N, self.d, shift)


def translate(amps: np.ndarray, N: int, d: int, shift: int = 1) -> np.ndarray:
    """Cyclic relabelling ``(T psi)(c_0..c_{N-1}) = psi(c_1, ..., c_{N-1}, c_0)``, applied ``shift`` times."""
    t = np.asarray(amps).reshape((d,) * N)
    return np.moveaxis(t, list(range(N)), [(q + shift) % N for q in range(N)]).reshape(-1)


def _check_cap(d: int, N: int, cap: int):
    if N < 1:
        raise ValidationError("N must be >= 1")
    if d**N > cap:
        raise CapacityError(f"d**N = {d**N} exceeds the amplitude cap {cap}")


def state_vector(mps: MpsTensor, N: int, cap: int = DEFAULT_CAP, backend: str | None = None) -> StateVector:
    """Periodic MPS ``sum_i Tr(A^{i_1}...A^{i_N}) |i>``."""
    _check_cap(mps.d, N, cap)
    T = np.broadcast_to(mps.matrices, (N,) + mps.matrices.shape)
    return StateVector(N, mps.d, kernels.word_amplitudes(T, None, backend))


SYMMETRIZATIONS = ("symmetric", "antisymmetric", "none")
GAUGES = ("plain", "B")


@dataclass(frozen=True, eq=False)
class ParticleInsertionSpec:
    """Particles ``(X, k)`` to insert, with permutation and gauge options.

    ``gauge="plain"`` inserts ``A^(i) X`` at a site; ``gauge="B"`` inserts the
    tensor family returned by :func:`mpsexc.excitations.gauge_particle_tensor`.
    """

    insertions: Sequence[tuple[np.ndarray, float]]
    symmetrization: str = "symmetric"
    gauge: str = "plain"

    def __post_init__(self):
        if self.symmetrization not in SYMMETRIZATIONS:
            raise ValidationError(f"symmetrization must be one of {SYMMETRIZATIONS}")
        if self.gauge not in GAUGES:
            raise ValidationError(f"gauge must be one of {GAUGES}")
        ins = []
        for X, k in self.insertions:
            k = float(np.mod(k, 2 * np.pi))
            ins.append((np.asarray(X, dtype=np.complex128), k))
        object.__setattr__(self, "insertions", tuple(ins))

    @property
    def m(self) -> int:
        return len(self.insertions)


def _insertion_tensors(mps: MpsTensor, spec: ParticleInsertionSpec) -> list[np.ndarray]:
    out = []
    for X, k in spec.insertions:
        if X.shape != (mps.D, mps.D):
            raise ShapeMismatchError("insertion matrix must be D x D")
        if spec.gauge == "plain":
            out.append(np.einsum("iab,bc->iac", mps.matrices, X))
        else:
            from .excitations import gauge_particle_tensor

            out.append(gauge_particle_tensor(mps, X, k).B)
    return out


def insertion_chain(mps: MpsTensor, N: int, spec: ParticleInsertionSpec) -> tuple[np.ndarray, np.ndarray]:
    """Enlarged site tensors and boundary realizing the insertion sum.

    The virtual space is ``C^{states} (x) C^D`` where the states track which
    insertions have been placed (subsets for the permutation-summed states,
    a counter for ``"none"``).  Summing over all paths from the empty to the
    full state reproduces ``sum_P A(P) sum_{n_1<...<n_m} exp(i k_P . n) word``.
    """
    m = spec.m
    D, d = mps.D, mps.d
    B = _insertion_tensors(mps, spec)
    ks = [k for _, k in spec.insertions]
    if spec.symmetrization == "none":
        nst = m + 1
        edges = [(c, c + 1, c, 1.0) for c in range(m)]
        start, end = 0, m
    else:
        nst = 2**m
        edges = []
        for S in range(nst):
            for a in range(m):
                if S & (1 << a):
                    continue
                sign = 1.0
                if spec.symmetrization == "antisymmetric":
                    above = sum(1 for b in range(a + 1, m) if S & (1 << b))
                    sign = (-1.0) ** above
                edges.append((S, S | (1 << a), a, sign))
        start, end = 0, nst - 1
    Dv = nst * D
    T = np.zeros((N, d, Dv, Dv), dtype=np.complex128)
    for s in range(nst):
        T[:, :, s * D:(s + 1) * D, s * D:(s + 1) * D] = mps.matrices
    for n in range(N):
        for (s, t, a, sign) in edges:
            T[n, :, s * D:(s + 1) * D, t * D:(t + 1) * D] = sign * np.exp(1j * ks[a] * n) * B[a]
    J = np.zeros((Dv, Dv), dtype=np.complex128)
    J[end * D:(end + 1) * D, start * D:(start + 1) * D] = np.eye(D)
    return T, J


def excited_state_vector(
    mps: MpsTensor,
    N: int,
    spec: ParticleInsertionSpec,
    cap: int = DEFAULT_CAP,
    backend: str | None = None,
) -> StateVector:
    """State with ``m`` inserted particles summed over positions with phases.

    ``m = 0`` reproduces :func:`state_vector`.  Site ``n`` (0-based) carries
    the phase ``exp(i k n)`` of the particle placed on it.
    """
    m = spec.m
    if m == 0:
        return state_vector(mps, N, cap, backend)
    if m >= N:
        raise ValidationError(f"{m} insertions do not fit on {N} sites")
    _check_cap(mps.d, N, cap)
    T, J = insertion_chain(mps, N, spec)
    return StateVector(N, mps.d, kernels.word_amplitudes(T, J, backend))


def excited_state_vector_bruteforce(mps: MpsTensor, N: int, spec: ParticleInsertionSpec) -> np.ndarray:
    """Direct sum over positions and permutations (slow; used as an oracle)."""
    from itertools import combinations

    B = _insertion_tensors(mps, spec)
    m = spec.m
    ks = [k for _, k in spec.insertions]
    out = np.zeros(mps.d**N, dtype=np.complex128)
    perms = [tuple(range(m))] if spec.symmetrization == "none" else list(permutations(range(m)))
    for P in perms:
        inv = sum(1 for x in range(m) for y in range(x + 1, m) if P[x] > P[y])
        sign = (-1.0) ** inv if spec.symmetrization == "antisymmetric" else 1.0
        for pos in combinations(range(N), m):
            T = np.broadcast_to(mps.matrices, (N,) + mps.matrices.shape).copy()
            phase = 1.0 + 0j
            for slot, n in enumerate(pos):
                T[n] = B[P[slot]]
                phase *= np.exp(1j * ks[P[slot]] * n)
            out += sign * phase * kernels.word_amplitudes(T, None, "numpy")
    return out
