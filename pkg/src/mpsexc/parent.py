"""Parent Hamiltonians of injective MPS and the exact-diagonalization oracle.

A range-``L`` term acts on ``w = L + 1`` consecutive sites.  With the word
matrix ``V[alpha, (a, b)] = (A^{i_1} ... A^{i_w})_{ab}`` the local term is
``h = V C V^dag`` where ``C`` inverts the Gram matrix ``V^dag V``; the Gram
matrix is a reshuffle of the ``w``-th channel power, so ``h`` is the orthogonal
projector onto the span of MPS words.  ``H = sum_j (1 - h_j)`` on a ring.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from . import kernels
from .channel import transfer_matrix
from .errors import CapacityError, ConvergenceError, NonInjectiveError, ShapeMismatchError, ValidationError
from .mps import DEFAULT_CAP, MpsTensor, ParticleInsertionSpec, excited_state_vector, state_vector, translate, word_matrix

PINV_CUTOFF = 1e-12
DENSE_LIMIT = 4096
# dense matrices above this size are still solved iteratively for a few levels
FULL_SOLVE_LIMIT = 1024


def window(L: int) -> int:
    """Number of sites a range-``L`` term acts on."""
    return L + 1


def exact_offset(L: int) -> float:
    """Per-particle energy offset of an isolated insertion under the parent
    Hamiltonian: the ``L + 1`` windows covering the particle's bond plus the
    one-step hop normalization give ``L + 2``."""
    return float(L + 2)


def gram_reshuffle(mps: MpsTensor, L: int) -> np.ndarray:
    """``G[(a,b),(c,d)] = sum_words conj(W_ab) W_cd`` from the channel power."""
    D = mps.D
    E = np.linalg.matrix_power(transfer_matrix(mps).matrix, window(L))
    return E.reshape(D, D, D, D).transpose(1, 3, 0, 2).reshape(D * D, D * D)


def correction_matrix(mps: MpsTensor, L: int) -> np.ndarray:
    """Pseudo-inverse (relative cutoff 1e-12) of the reshuffled channel power.

    Raises
    ------
    NonInjectiveError
        When the reshuffled matrix is rank deficient, i.e. words of length
        ``L + 1`` do not span all D x D matrices.
    """
    if L < 1:
        raise ValidationError("L must be >= 1")
    G = gram_reshuffle(mps, L)
    G = (G + G.conj().T) / 2
    s = np.linalg.svd(G, compute_uv=False)
    if s[-1] <= PINV_CUTOFF * s[0]:
        raise NonInjectiveError(f"tensor is not injective on {window(L)} sites (smallest singular value {s[-1]:.3g})")
    C = np.linalg.pinv(G, rcond=PINV_CUTOFF, hermitian=True)
    return (C + C.conj().T) / 2


@dataclass(frozen=True, eq=False)
class LocalTerm:
    """Local term with its diagnostics.

    Attributes
    ----------
    h : ndarray
        ``d^(L+1) x d^(L+1)`` Hermitian matrix.
    hermiticity_defect : float
        ``||h - h^dag||_F`` before symmetrization.
    projector_defect : float
        ``||h^2 - h||_F``.
    word_residual : tuple of float
        Largest relative residual ``||h v - v|| / ||v||`` over MPS word vectors
        before and after symmetrization.
    """

    h: np.ndarray
    hermiticity_defect: float
    projector_defect: float
    word_residual: tuple[float, float]


def _word_residual(h: np.ndarray, V: np.ndarray) -> float:
    # columns of V span the MPS words (up to an invertible change of basis)
    Q, _ = np.linalg.qr(V)
    R = h @ Q - Q
    return float(np.max(np.linalg.norm(R, axis=0)))


def local_term(mps: MpsTensor, L: int, C: np.ndarray | None = None) -> LocalTerm:
    if C is None:
        C = correction_matrix(mps, L)
    D = mps.D
    if C.shape != (D * D, D * D):
        raise ShapeMismatchError("correction matrix must be D^2 x D^2")
    V = word_matrix(mps, window(L))
    h0 = V @ C @ V.conj().T
    herm = float(np.linalg.norm(h0 - h0.conj().T))
    h = (h0 + h0.conj().T) / 2
    pre, post = _word_residual(h0, V), _word_residual(h, V)
    proj = float(np.linalg.norm(h @ h - h))
    return LocalTerm(h, herm, proj, (pre, post))


# ---------------------------------------------------------------------------
# Hamiltonian handles
# ---------------------------------------------------------------------------

class HamiltonianHandle:
    """``H = sum_j (1 - h_j)`` on a ring, dense when ``d^N <= dense_limit``.

    The handle is immutable after construction; ``matvec`` works on vectors
    and on column blocks.
    """

    def __init__(self, N: int, h: np.ndarray, d: int, *, dense_limit: int = DENSE_LIMIT,
                 cap: int = DEFAULT_CAP, backend: str | None = None):
        h = np.asarray(h, dtype=np.complex128)
        w = int(round(np.log(h.shape[0]) / np.log(d)))
        if d**w != h.shape[0] or h.shape[0] != h.shape[1]:
            raise ShapeMismatchError("local term must be d^w x d^w")
        if w - 1 >= N:
            raise ValidationError("range L must be smaller than N")
        if d**N > cap:
            raise CapacityError(f"d**N = {d**N} exceeds cap {cap}")
        self.N, self.d, self.L, self.h = N, d, w - 1, h
        self.dim = d**N
        self.backend = backend
        self.dense: np.ndarray | None = None
        if self.dim <= dense_limit:
            self.dense = self._matvec_free(np.eye(self.dim, dtype=np.complex128))
            self.dense = (self.dense + self.dense.conj().T) / 2

    @property
    def is_dense(self) -> bool:
        return self.dense is not None

    def _matvec_free(self, v: np.ndarray) -> np.ndarray:
        return self.N * v - kernels.local_sum(v, self.h, self.N, self.d, self.backend)

    def matvec(self, v: np.ndarray, matrix_free: bool = False) -> np.ndarray:
        v = np.asarray(v, dtype=np.complex128)
        if self.dense is not None and not matrix_free:
            return self.dense @ v
        return self._matvec_free(v)

    def linear_operator(self) -> LinearOperator:
        return LinearOperator((self.dim, self.dim), matvec=self.matvec, matmat=self.matvec, dtype=np.complex128)

    def translate(self, v: np.ndarray, shift: int = 1) -> np.ndarray:
        return translate(v, self.N, self.d, shift)

    def expectation(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=np.complex128)
        return float(np.vdot(v, self.matvec(v)).real / np.vdot(v, v).real)


def assemble_or_apply(N: int, L: int, h: np.ndarray, d: int, **kwargs) -> HamiltonianHandle:
    """Handle for the parent Hamiltonian of range ``L`` on ``N`` sites."""
    if L < 1 or L >= N:
        raise ValidationError("need 1 <= L < N")
    if h.shape[0] != d ** window(L):
        raise ShapeMismatchError(f"local term must act on {window(L)} sites")
    return HamiltonianHandle(N, h, d, **kwargs)


@dataclass(frozen=True, eq=False)
class ParentHamiltonian:
    N: int
    L: int
    d: int
    term: LocalTerm
    C: np.ndarray
    handle: HamiltonianHandle

    @property
    def h(self) -> np.ndarray:
        return self.term.h


def parent_hamiltonian(mps: MpsTensor, N: int, L: int, **kwargs) -> ParentHamiltonian:
    C = correction_matrix(mps, L)
    term = local_term(mps, L, C)
    return ParentHamiltonian(N, L, mps.d, term, C, assemble_or_apply(N, L, term.h, mps.d, **kwargs))


# ---------------------------------------------------------------------------
# ED reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EdReport:
    """Lowest levels and trial-state diagnostics.

    Attributes
    ----------
    eigenvalues : ndarray
        Ascending.
    residuals : ndarray
        ``||H v - E v|| / ||v||`` of the returned eigenvectors.
    momenta : ndarray
        Momentum of each eigenvector (``T v = e^{-ik} v``); NaN when the
        vector is not a translation eigenvector within 1e-6.
    rayleigh : ndarray
        Rayleigh quotients of the trial states.
    trial_residuals : ndarray
        ``||H v - R v|| / ||v||`` with ``R`` the Rayleigh quotient.
    trial_variance : ndarray
        Squared trial residuals.
    """

    eigenvalues: np.ndarray
    residuals: np.ndarray
    momenta: np.ndarray
    rayleigh: np.ndarray
    trial_residuals: np.ndarray
    trial_variance: np.ndarray
    eigenvectors: np.ndarray | None = None


def momentum_label(handle: HamiltonianHandle, v: np.ndarray, tol: float = 1e-6) -> float:
    v = np.asarray(v, dtype=np.complex128)
    nv = np.vdot(v, v).real
    t = np.vdot(v, handle.translate(v)) / nv
    if abs(abs(t) - 1) > tol:
        return float("nan")
    return float(np.mod(-np.angle(t), 2 * np.pi))


def _lowest(handle: HamiltonianHandle, num_levels: int, maxiter: int, tol: float, seed: int):
    n = handle.dim
    if handle.is_dense and (n <= FULL_SOLVE_LIMIT or num_levels >= n // 4):
        k = min(num_levels, n)
        w, V = sla.eigh(handle.dense, subset_by_index=[0, k - 1])
        return w, V
    if num_levels >= n - 1:
        raise CapacityError("iterative solver needs num_levels < dim - 1")
    v0 = np.random.default_rng(seed).standard_normal(n).astype(np.complex128)
    # a few spare Ritz values keep Lanczos from settling on a degenerate excited pair
    k = min(n - 2, max(2 * num_levels, num_levels + 4))
    try:
        w, V = eigsh(handle.linear_operator(), k=k, which="SA", v0=v0, maxiter=maxiter, tol=tol)
    except ArpackNoConvergence as exc:
        raise ConvergenceError(f"eigensolver did not converge after {maxiter} iterations") from exc
    order = np.argsort(w)[:num_levels]
    return w[order], V[:, order]


def ed_report(
    handle: HamiltonianHandle,
    trials: Sequence[np.ndarray] = (),
    num_levels: int = 4,
    *,
    maxiter: int = 5000,
    tol: float = 1e-12,
    seed: int = 0,
    keep_vectors: bool = False,
) -> EdReport:
    """Lowest ``num_levels`` levels and Rayleigh diagnostics of trial states."""
    if num_levels < 0:
        raise ValidationError("num_levels must be >= 0")
    if num_levels:
        w, V = _lowest(handle, num_levels, maxiter, tol, seed)
        HV = handle.matvec(V)
        res = np.linalg.norm(HV - V * w, axis=0) / np.linalg.norm(V, axis=0)
        mom = np.array([momentum_label(handle, V[:, i]) for i in range(V.shape[1])])
    else:
        w, V = np.zeros(0), np.zeros((handle.dim, 0))
        res, mom = np.zeros(0), np.zeros(0)
    rq, tr = [], []
    for v in trials:
        v = np.asarray(getattr(v, "amplitudes", v), dtype=np.complex128)
        if v.shape != (handle.dim,):
            raise ShapeMismatchError("trial state does not match the Hamiltonian's (N, d)")
        nv = np.vdot(v, v).real
        Hv = handle.matvec(v)
        r = np.vdot(v, Hv).real / nv
        rq.append(r)
        tr.append(np.linalg.norm(Hv - r * v) / np.sqrt(nv))
    tr = np.array(tr)
    return EdReport(np.asarray(w, float), res, mom, np.array(rq), tr, tr**2, V if keep_vectors else None)


@dataclass(frozen=True)
class OneParticleEd:
    rayleigh: float
    variance: float
    norm_per_site: float


def one_particle_ed(mps: MpsTensor, X: np.ndarray, k: float, N: int, L: int, backend: str | None = None) -> OneParticleEd:
    """Energy and squared residual of ``sum_n e^{ikn} |X at n>`` on an ``N``-site ring."""
    ph = parent_hamiltonian(mps, N, L, backend=backend)
    psi = excited_state_vector(mps, N, ParticleInsertionSpec([(X, k)], "none"), backend=backend)
    rep = ed_report(ph.handle, [psi.amplitudes], num_levels=0)
    return OneParticleEd(float(rep.rayleigh[0]), float(rep.trial_variance[0]), psi.norm_sq / N)


def ground_residual(ph: ParentHamiltonian, mps: MpsTensor) -> float:
    psi = state_vector(mps, ph.N).amplitudes
    return float(np.linalg.norm(ph.handle.matvec(psi)) / np.linalg.norm(psi))
