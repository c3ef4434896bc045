"""Superoperator algebra for transfer channels.

Vectorization convention (the only place it is fixed): a D x D matrix ``X`` is
flattened row-major, ``vec(X) = X.reshape(-1)``.  With this choice
``vec(A X B) = (A kron B.T) vec(X)``, so the channel
``X -> sum_i A_i X A_i^dagger`` has matrix ``sum_i A_i kron conj(A_i)`` and
its Hilbert-Schmidt adjoint is the conjugate transpose of that matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .errors import PreconditionError, ShapeMismatchError, ValidationError

DEGENERACY_TOL = 1e-9
NORMALITY_TOL = 1e-9
CP_TOL = 1e-10
DEFECTIVE_COND = 1e12


# ---------------------------------------------------------------------------
# vectorization helpers
# ---------------------------------------------------------------------------

def vec(X: np.ndarray) -> np.ndarray:
    return np.asarray(X).reshape(-1)


def unvec(v: np.ndarray, D: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if D is None:
        D = int(round(np.sqrt(v.size)))
    return v.reshape(D, D)


def left_mult(A: np.ndarray) -> np.ndarray:
    """Matrix of ``X -> A X``."""
    return np.kron(A, np.eye(A.shape[0]))


def right_mult(B: np.ndarray) -> np.ndarray:
    """Matrix of ``X -> X B``."""
    return np.kron(np.eye(B.shape[0]), B.T)


def hs_inner(X: np.ndarray, Y: np.ndarray) -> complex:
    """Hilbert-Schmidt inner product ``Tr(X^dagger Y)``."""
    return complex(np.vdot(X, Y))


# ---------------------------------------------------------------------------
# QuantumChannel
# ---------------------------------------------------------------------------

PROVENANCES = ("from-mps", "direct", "disorder-averaged")


@dataclass(frozen=True, eq=False)
class QuantumChannel:
    """A linear map on D x D matrices stored as its D^2 x D^2 matrix.

    Attributes
    ----------
    dim : int
        Virtual dimension D.
    matrix : ndarray
        Matrix of the map in the row-major vectorization.
    provenance : str
        One of ``"from-mps"``, ``"direct"``, ``"disorder-averaged"``.
    kraus : ndarray or None
        Kraus family ``(n, D, D)`` when the channel was built from one.
    """

    dim: int
    matrix: np.ndarray
    provenance: str = "direct"
    kraus: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        M = np.array(self.matrix, dtype=np.complex128)
        n = self.dim * self.dim
        if M.shape != (n, n):
            raise ShapeMismatchError(f"channel matrix must be {n}x{n}, got {M.shape}")
        if not np.all(np.isfinite(M)):
            raise ValidationError("channel matrix has non-finite entries")
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)
        if self.kraus is not None:
            K = np.array(self.kraus, dtype=np.complex128)
            K.setflags(write=False)
            object.__setattr__(self, "kraus", K)

    @classmethod
    def from_kraus(cls, kraus: Sequence[np.ndarray], provenance: str = "direct") -> "QuantumChannel":
        K = np.asarray(kraus, dtype=np.complex128)
        if K.ndim != 3 or K.shape[1] != K.shape[2]:
            raise ShapeMismatchError("Kraus family must have shape (n, D, D)")
        M = np.einsum("iab,icd->acbd", K, K.conj()).reshape(K.shape[1] ** 2, -1)
        return cls(K.shape[1], M, provenance, K)

    @property
    def adjoint_matrix(self) -> np.ndarray:
        return self.matrix.conj().T

    def apply(self, X: np.ndarray) -> np.ndarray:
        return unvec(self.matrix @ vec(X), self.dim)

    def adjoint_apply(self, X: np.ndarray) -> np.ndarray:
        return unvec(self.adjoint_matrix @ vec(X), self.dim)

    def power(self, n: int) -> np.ndarray:
        return np.linalg.matrix_power(self.matrix, n)

    def adjoint(self) -> "QuantumChannel":
        return QuantumChannel(self.dim, self.adjoint_matrix, self.provenance)

    def conjugated(self, U: np.ndarray) -> "QuantumChannel":
        """Channel ``X -> U^dag Gamma[U X U^dag] U`` (unitary change of virtual basis)."""
        S = left_mult(U.conj().T) @ right_mult(U)
        Sinv = left_mult(U) @ right_mult(U.conj().T)
        K = None if self.kraus is None else np.einsum("ab,ibc,cd->iad", U.conj().T, self.kraus, U)
        return QuantumChannel(self.dim, S @ self.matrix @ Sinv, self.provenance, K)


def transfer_matrix(mps) -> QuantumChannel:
    """Transfer channel ``X -> sum_i A_i X A_i^dagger`` of an MPS tensor."""
    return QuantumChannel.from_kraus(mps.matrices, provenance="from-mps")


def normality_defect(channel: QuantumChannel) -> float:
    """``||G G* - G* G||_F / ||G||_F^2``."""
    E = channel.matrix
    nrm = np.linalg.norm(E) ** 2
    if nrm == 0:
        return 0.0
    return float(np.linalg.norm(E @ E.conj().T - E.conj().T @ E) / nrm)


def is_normal(channel: QuantumChannel, tol: float = NORMALITY_TOL) -> bool:
    return normality_defect(channel) <= tol


def unitality_defect(channel: QuantumChannel) -> float:
    eye = np.eye(channel.dim)
    return float(np.linalg.norm(channel.apply(eye) - eye))


def trace_preservation_defect(channel: QuantumChannel) -> float:
    eye = np.eye(channel.dim)
    return float(np.linalg.norm(channel.adjoint_apply(eye) - eye))


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpectralData:
    """Eigen-decomposition of a channel.

    Attributes
    ----------
    eigenvalues : ndarray
        Sorted by modulus (descending), ties broken by phase.
    right : ndarray, shape (n, D, D)
        Right eigenmatrices, unit Hilbert-Schmidt norm, largest-modulus entry
        real positive.  Degenerate eigenspaces get a deterministic basis.
    left : ndarray, shape (n, D, D)
        Dual basis: ``Tr(left[a]^dag right[b]) = delta_ab``.
    fixed_point : ndarray
        Leading right eigenmatrix rescaled to unit trace (when the trace is nonzero).
    projector : ndarray
        Leading spectral projector as a D^2 x D^2 matrix.
    injective : bool
        False when the leading eigenvalue is degenerate within 1e-9.
    defective : bool
        True when the eigenvector matrix is numerically singular; ``schur`` then
        carries ``(T, Z)`` of the complex Schur form.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    fixed_point: np.ndarray
    projector: np.ndarray
    injective: bool
    defective: bool
    channel: QuantumChannel = field(repr=False)
    schur: tuple | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.channel.dim

    @property
    def moduli(self) -> np.ndarray:
        return np.abs(self.eigenvalues)

    @property
    def phases(self) -> np.ndarray:
        """Rest momenta ``phi_a`` defined by ``lambda_a = |lambda_a| exp(-i phi_a)``."""
        return np.mod(-np.angle(self.eigenvalues), 2 * np.pi)

    @property
    def second_modulus(self) -> float:
        return float(self.moduli[1]) if self.eigenvalues.size > 1 else 0.0


def _fix_phase(X: np.ndarray) -> np.ndarray:
    flat = X.reshape(-1)
    mags = np.round(np.abs(flat), 10)
    i = int(np.argmax(mags))
    if abs(flat[i]) == 0:
        return X
    return X * (abs(flat[i]) / flat[i])


def reference_basis(D: int) -> np.ndarray:
    """Orthonormal Hermitian basis of D x D matrices (identity first, then
    generalized Gell-Mann matrices); used to pick bases inside degenerate
    eigenspaces so that, e.g., the Pauli channel returns Pauli matrices."""
    mats = [np.eye(D, dtype=complex) / np.sqrt(D)]
    for a in range(D):
        for b in range(a + 1, D):
            S = np.zeros((D, D), complex)
            S[a, b] = S[b, a] = 1 / np.sqrt(2)
            mats.append(S)
            A = np.zeros((D, D), complex)
            A[a, b] = -1j / np.sqrt(2)
            A[b, a] = 1j / np.sqrt(2)
            mats.append(A)
    for l in range(1, D):
        Z = np.zeros((D, D), complex)
        Z[np.arange(l), np.arange(l)] = 1
        Z[l, l] = -l
        mats.append(Z / np.sqrt(l * (l + 1)))
    return np.array(mats)


def canonical_block_basis(Q: np.ndarray, metric: np.ndarray | None = None) -> np.ndarray:
    """Deterministic basis of the column span of ``Q``.

    Projects the reference matrices onto the span and orthonormalizes them in
    order (Gram-Schmidt in the given metric, Hilbert-Schmidt by default).
    """
    n, m = Q.shape
    D = int(round(np.sqrt(n)))
    G = np.eye(n) if metric is None else metric
    # metric-orthonormal basis of span(Q)
    S = Q.conj().T @ G @ Q
    w, V = np.linalg.eigh((S + S.conj().T) / 2)
    Qo = Q @ V / np.sqrt(w)
    picks: list[np.ndarray] = []
    for r in reference_basis(D):
        v = Qo @ (Qo.conj().T @ G @ vec(r))
        for p in picks:
            v = v - p * (p.conj() @ G @ v)
        nv = np.sqrt(abs(v.conj() @ G @ v))
        if nv > 1e-6:
            picks.append(v / nv)
        if len(picks) == m:
            break
    if len(picks) < m:  # pragma: no cover - reference basis spans everything
        return Qo
    return np.array(picks).T


def _clusters(values: np.ndarray, tol: float) -> list[list[int]]:
    groups: list[list[int]] = []
    for i, v in enumerate(values):
        for g in groups:
            if abs(values[g[0]] - v) <= tol * max(1.0, abs(v)):
                g.append(i)
                break
        else:
            groups.append([i])
    return groups


def channel_spectrum(channel: QuantumChannel) -> SpectralData:
    """Complete eigen-decomposition with fixed point and leading projector."""
    E = channel.matrix
    D = channel.dim
    n = D * D
    normal = is_normal(channel)
    if normal:
        T, Z = sla.schur(E, output="complex")
        w = np.diag(T).copy()
        V = Z
    else:
        w, V = np.linalg.eig(E)
    order = np.lexsort((np.round(np.mod(np.angle(w), 2 * np.pi), 9), -np.round(np.abs(w), 9)))
    w = w[order]
    V = V[:, order]
    V = V / np.linalg.norm(V, axis=0)
    metric = None
    for g in _clusters(w, DEGENERACY_TOL):
        if len(g) > 1:
            V[:, g] = canonical_block_basis(V[:, g], metric)
    for a in range(n):
        V[:, a] = vec(_fix_phase(unvec(V[:, a], D)))
    cond = np.linalg.cond(V)
    defective = not np.isfinite(cond) or cond > DEFECTIVE_COND
    schur = None
    if defective:
        schur = sla.schur(E, output="complex")
        Vinv = np.linalg.pinv(V)
    else:
        Vinv = np.linalg.inv(V)
    right = np.array([unvec(V[:, a], D) for a in range(n)])
    left = np.array([unvec(Vinv[a].conj(), D) for a in range(n)])
    lead = w[0]
    injective = bool(np.sum(np.abs(w - lead) <= DEGENERACY_TOL * max(1.0, abs(lead))) == 1)
    fp = right[0].copy()
    tr = np.trace(fp)
    if abs(tr) > 1e-12:
        fp = fp / tr
        if np.linalg.norm(fp - fp.conj().T) < 1e-8:
            fp = (fp + fp.conj().T) / 2
    projector = np.outer(V[:, 0], Vinv[0])
    return SpectralData(w, right, left, fp, projector, injective, defective, channel, schur)


def fixed_point(channel: QuantumChannel) -> np.ndarray:
    """Unit-trace Hermitian fixed point of a channel with spectral radius 1."""
    return channel_spectrum(channel).fixed_point


def leading_projector(channel: QuantumChannel) -> np.ndarray:
    return channel_spectrum(channel).projector


# ---------------------------------------------------------------------------
# complete positivity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChoiReport:
    min_eigenvalue: float
    is_cp: bool
    hermitian: bool


def choi_matrix(channel: QuantumChannel) -> np.ndarray:
    """``C = sum_{ab} |a><b| (x) Gamma[|a><b|]`` (no 1/D prefactor)."""
    D = channel.dim
    E4 = channel.matrix.reshape(D, D, D, D)  # [i, j, a, b] = Gamma[|a><b|]_{ij}
    return E4.transpose(2, 0, 3, 1).reshape(D * D, D * D)


def choi_cp_check(channel: QuantumChannel, tol: float = CP_TOL) -> ChoiReport:
    """Complete-positivity test through the smallest Choi eigenvalue.

    A Choi matrix that is not Hermitian (the map does not preserve Hermiticity)
    is reported as not completely positive.
    """
    C = choi_matrix(channel)
    herm = bool(np.linalg.norm(C - C.conj().T) <= tol * max(1.0, np.linalg.norm(C)))
    mn = float(np.linalg.eigvalsh((C + C.conj().T) / 2)[0])
    return ChoiReport(mn, bool(herm and mn >= -tol), herm)


# ---------------------------------------------------------------------------
# structure constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StructureTensor:
    """``coefficients[c, a, b] = f^c_{ab} = Tr(X_c^dag X_a X_b)``."""

    coefficients: np.ndarray
    basis: np.ndarray
    max_residual: float

    def __call__(self, c: int, a: int, b: int) -> complex:
        return complex(self.coefficients[c, a, b])


def structure_constants(source, tol: float = NORMALITY_TOL) -> StructureTensor:
    """Expansion coefficients of products of an orthonormal eigenbasis.

    Parameters
    ----------
    source : SpectralData or sequence of D x D matrices
        Spectral data of a normal unital channel, or an explicit orthonormal basis.
    """
    if isinstance(source, SpectralData):
        ch = source.channel
        if normality_defect(ch) > tol:
            raise PreconditionError("structure constants need a normal channel")
        if unitality_defect(ch) > tol:
            raise PreconditionError("structure constants need a unital channel")
        basis = np.asarray(source.right)
    else:
        basis = np.asarray(source, dtype=complex)
    n = basis.shape[0]
    B = basis.reshape(n, -1)
    gram = B.conj() @ B.T
    if np.linalg.norm(gram - np.eye(n)) > 1e-8:
        raise PreconditionError("basis is not Hilbert-Schmidt orthonormal")
    prods = np.einsum("aij,bjk->abik", basis, basis)
    f = np.einsum("cij,abij->cab", basis.conj(), prods)
    recon = np.einsum("cab,cij->abij", f, basis)
    res = float(np.max(np.linalg.norm((recon - prods).reshape(n, n, -1), axis=-1)))
    return StructureTensor(f, basis, res)


# ---------------------------------------------------------------------------
# phase-spectrum feasibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FeasibilityReport:
    feasible: bool
    worst_alpha: int
    margin: float
    margins: np.ndarray
    active_alphas: tuple
    choi: ChoiReport
    agrees: bool
    channel: QuantumChannel = field(repr=False)


def clock_unitaries(D: int) -> np.ndarray:
    """``U_g = diag(exp(2 pi i j g / D))`` for g = 0..D-1."""
    j = np.arange(D)
    return np.array([np.diag(np.exp(2j * np.pi * j * g / D)) for g in range(D)])


def diagonal_clock_channel(moduli, kappas, D: int) -> QuantumChannel:
    """``Gamma[X] = sum_g lambda_g U_g Tr(U_g^dag X) / D`` with
    ``lambda_g = |lambda_g| exp(2 pi i kappa_g / D)``."""
    lam = np.asarray(moduli, float) * np.exp(2j * np.pi * np.asarray(kappas, float) / D)
    U = clock_unitaries(D)
    M = sum(lam[g] * np.outer(vec(U[g]), vec(U[g]).conj()) for g in range(D)) / D
    return QuantumChannel(D, M, "direct")


def spectrum_feasibility(moduli, kappas, D: int, tol: float = 1e-12) -> FeasibilityReport:
    """Cosine constraints on a clock-diagonal spectrum, cross-checked with Choi.

    The constraints ``sum_g |lambda_g| cos(2 pi (kappa_g - g alpha)/D) >= 0`` are
    evaluated for alpha = 1..2D.  They are the Choi eigenvalues (times D) of
    the explicit channel when it preserves Hermiticity; otherwise the Choi test
    fails regardless and ``agrees`` may be False.
    """
    moduli = np.asarray(moduli, float)
    kappas = np.asarray(kappas, float)
    if moduli.shape != (D,) or kappas.shape != (D,):
        raise ValidationError(f"need exactly D={D} moduli and phase indices")
    if np.any(moduli < 0):
        raise ValidationError("moduli must be nonnegative")
    g = np.arange(D)
    alphas = np.arange(1, 2 * D + 1)
    margins = np.array([np.sum(moduli * np.cos(2 * np.pi * (kappas - g * a) / D)) for a in alphas])
    i = int(np.argmin(margins))
    margin = float(margins[i])
    feasible = margin >= -tol
    active = tuple(int(a) for a in alphas[np.abs(margins - margin) <= 1e-12 * max(1.0, np.abs(margins).max())])
    ch = diagonal_clock_channel(moduli, kappas, D)
    choi = choi_cp_check(ch)
    return FeasibilityReport(feasible, int(alphas[i]), margin, margins, active, choi, feasible == choi.is_cp, ch)


def random_phase_spectrum(rng: np.random.Generator, D: int, max_modulus: float = 1.0):
    """Random Hermiticity-preserving clock spectrum (``lambda_{-g} = conj(lambda_g)``).

    ``g = 0`` is pinned to ``lambda_0 = 1`` (trace preservation).  Returns
    ``(moduli, kappas)``.
    """
    moduli = np.zeros(D)
    kappas = np.zeros(D)
    moduli[0] = 1.0
    for gg in range(1, D // 2 + 1):
        partner = (D - gg) % D
        r = rng.uniform(0, max_modulus)
        if partner == gg:
            moduli[gg] = r
            kappas[gg] = rng.choice([0.0, D / 2])
        else:
            kap = rng.uniform(0, D)
            moduli[gg] = moduli[partner] = r
            kappas[gg] = kap
            kappas[partner] = (-kap) % D
    return moduli, kappas
