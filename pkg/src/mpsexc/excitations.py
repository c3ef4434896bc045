"""One-particle spectral machinery of a transfer channel.

Conventions
-----------
* ``T_k`` (:func:`fourier_transfer`) is ``R_rho + 1/2 sum_n (e^{ikn} G^n R_rho + e^{-ikn} R_rho G*^n)``
  with ``R_rho[X] = X rho``.  It is Hermitian for any channel with a Hermitian
  fixed point, because ``(G^n R_rho)^dag = R_rho G*^n``.
* Mode energies are ``E = offset + eps`` with ``eps = -2 mu`` and ``mu`` an
  eigenvalue of ``R_rho^{-1} T_k``.  The default offset is ``2L`` per
  particle; :func:`mpsexc.parent.exact_offset` gives the value measured on the
  parent Hamiltonian.
* A channel eigenvalue is written ``lambda = |lambda| exp(-i phi)``; ``phi`` is
  the rest momentum where the normal-channel dispersion is minimal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.linalg import null_space

from .channel import (
    QuantumChannel,
    SpectralData,
    StructureTensor,
    canonical_block_basis,
    channel_spectrum,
    is_normal,
    normality_defect,
    right_mult,
    trace_preservation_defect,
    transfer_matrix,
    unitality_defect,
    unvec,
    vec,
)
from .errors import NearPoleError, NonInjectiveError, PreconditionError, SingularGaugeError, ValidationError

POLE_COND = 1e12
ZERO_K = 1e-12


def _wrap(k: float) -> float:
    return float(np.mod(k, 2 * np.pi))


def _is_zero_momentum(k: float) -> bool:
    kw = _wrap(k)
    return min(kw, 2 * np.pi - kw) < ZERO_K


# ---------------------------------------------------------------------------
# Fourier transfer
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FourierTransfer:
    """Momentum-resolved transfer superoperator.

    Attributes
    ----------
    k : float
    L : int or None
        Truncation (``None`` for the closed resolvent form).
    matrix : ndarray
        D^2 x D^2 matrix in the row-major vectorization.
    vacuum_projected : bool
        True when the fixed-point sector was removed from the channel powers;
        the matrix is then meaningful on ``{X : Tr(rho X) = 0}`` only.
    rho : ndarray
    """

    k: float
    L: int | None
    matrix: np.ndarray
    vacuum_projected: bool
    rho: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return unvec(self.matrix @ vec(X))

    def hermiticity_defect(self) -> float:
        return float(np.linalg.norm(self.matrix - self.matrix.conj().T))


def vacuum_basis(rho: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) of ``{X : Tr(rho X) = 0}``."""
    return null_space(vec(np.asarray(rho).T)[None, :])


def fourier_transfer(
    channel: QuantumChannel,
    k: float,
    L: int | None = None,
    *,
    rho: np.ndarray | None = None,
    vacuum_projection: bool | None = None,
) -> FourierTransfer:
    """Finite (``L`` given) or closed-form (``L=None``) Fourier transfer.

    The closed form inverts ``1 - e^{ik} G`` and raises :class:`NearPoleError`
    when its condition number exceeds 1e12.  ``vacuum_projection`` defaults to
    True at zero momentum; with it the leading spectral projector is removed
    from the channel before summing.
    """
    if L is not None and L < 1:
        raise ValidationError("truncation L must be >= 1")
    spec = channel_spectrum(channel)
    if rho is None:
        rho = spec.fixed_point
    rho = np.asarray(rho, complex)
    D = channel.dim
    n = D * D
    if vacuum_projection is None:
        vacuum_projection = _is_zero_momentum(k)
    E = channel.matrix - spec.projector if vacuum_projection else channel.matrix
    R = right_mult(rho)
    z = np.exp(1j * k)
    if L is None:
        Mz = np.eye(n) - z * E
        cond = np.linalg.cond(Mz)
        if not np.isfinite(cond) or cond > POLE_COND:
            ev = np.linalg.eigvals(E)
            bad = ev[int(np.argmin(np.abs(1 - z * ev)))]
            raise NearPoleError(f"resolvent at k={k} is singular (eigenvalue {bad:.6g})", complex(bad))
        S = z * E @ np.linalg.inv(Mz)
        T = R + 0.5 * (S @ R + R @ S.conj().T)
    else:
        T = R.astype(complex).copy()
        P = np.eye(n, dtype=complex)
        for m in range(1, L):
            P = P @ E
            T += 0.5 * (z**m * P @ R + np.conj(z) ** m * R @ P.conj().T)
    return FourierTransfer(float(k), L, T, bool(vacuum_projection), rho)


def transfer_tail_bound(spec: SpectralData, L: int) -> float:
    """``|lambda_2|^L / (1 - |lambda_2|) * ||R_rho||`` (operator 2-norm)."""
    lam = spec.second_modulus
    return lam**L / (1 - lam) * float(np.linalg.norm(right_mult(spec.fixed_point), 2))


# ---------------------------------------------------------------------------
# modes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ParticleMode:
    """One-particle mode.

    Attributes
    ----------
    X : ndarray
        Unit Hilbert-Schmidt norm D x D matrix.
    k : float
    eigenvalue : complex or None
        Channel eigenvalue when ``X`` is a channel eigenmatrix.
    mu : float
        Eigenvalue of ``R_rho^{-1} T_k`` on the mode.
    epsilon : float
        ``-2 mu``.
    energy : float
        ``offset + epsilon``.
    offset : float
    stability : dict
        Filled by :func:`stability_diagnostics` callers (eps1, delta).
    """

    X: np.ndarray
    k: float
    eigenvalue: complex | None
    mu: float
    epsilon: float
    energy: float
    offset: float
    stability: dict = field(default_factory=dict)

    @property
    def phase(self) -> float | None:
        if self.eigenvalue is None:
            return None
        return float(np.mod(-np.angle(self.eigenvalue), 2 * np.pi))


def _require_canonical(channel: QuantumChannel, spec: SpectralData):
    if not spec.injective:
        raise NonInjectiveError("channel has a degenerate leading eigenvalue")
    if trace_preservation_defect(channel) > 1e-8:
        raise PreconditionError("channel is not trace preserving; canonicalize the tensor first")


def _channel_eigenbasis(E: np.ndarray, V: np.ndarray, metric: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Rotate a metric-orthonormal degenerate block ``V`` onto channel eigenvectors.

    Applies only when ``span(V)`` is invariant under ``E`` and the eigenvectors
    stay metric-orthonormal (normal channels); otherwise ``V`` is returned.
    """
    M = V.conj().T @ metric @ E @ V
    if np.linalg.norm(E @ V - V @ M) > tol * max(1.0, np.linalg.norm(E @ V)):
        return V
    w, U = np.linalg.eig(M)
    order = np.lexsort((-np.abs(w), np.round(np.mod(np.angle(w), 2 * np.pi), 9)))
    W = V @ U[:, order]
    W = W / np.sqrt(np.abs(np.einsum("ia,ij,ja->a", W.conj(), metric, W)))
    if np.linalg.norm(W.conj().T @ metric @ W - np.eye(W.shape[1])) > tol:
        return V
    return W


def one_particle_modes(
    channel: QuantumChannel,
    k: float,
    L: int,
    *,
    truncation: int | None = None,
    offset: float | None = None,
) -> list[ParticleMode]:
    """Solve ``T_k X = mu R_rho X`` (on the vacuum complement at k = 0).

    Parameters
    ----------
    channel : QuantumChannel
        Transfer channel of a canonical injective tensor.
    k : float
    L : int
        Range of the parent Hamiltonian; fixes the default energy offset ``2L``.
    truncation : int, optional
        Use the finite ``T_k^{(truncation)}`` instead of the closed form.
    offset : float, optional
        Per-particle energy offset (default ``2L``).

    Returns
    -------
    list of ParticleMode
        Sorted ascending in ``epsilon``; ``D^2`` modes (``D^2 - 1`` at k = 0).
        Modes are orthonormal with respect to ``Tr(X_a^dag X_b rho)``, which is the
        Hilbert-Schmidt product for unital channels.
    """
    if L < 1:
        raise ValidationError("L must be >= 1")
    spec = channel_spectrum(channel)
    _require_canonical(channel, spec)
    rho = spec.fixed_point
    D = channel.dim
    if offset is None:
        offset = 2.0 * L
    zero = _is_zero_momentum(k)
    ft = fourier_transfer(channel, k, truncation, rho=rho, vacuum_projection=zero)
    B = vacuum_basis(rho) if zero else np.eye(D * D, dtype=complex)
    if B.shape[1] == 0:
        return []
    R = right_mult(rho)
    Ts = B.conj().T @ ft.matrix @ B
    Rs = B.conj().T @ R @ B
    Ts = (Ts + Ts.conj().T) / 2
    Rs = (Rs + Rs.conj().T) / 2
    mu, Y = sla.eigh(Ts, Rs)
    order = np.argsort(-mu)
    mu, Y = mu[order], Y[:, order]
    # deterministic basis inside degenerate levels
    i = 0
    while i < len(mu):
        j = i + 1
        while j < len(mu) and abs(mu[j] - mu[i]) <= 1e-9 * max(1.0, abs(mu[i])):
            j += 1
        if j - i > 1:
            V = B @ Y[:, i:j]
            V = _channel_eigenbasis(channel.matrix, canonical_block_basis(V, metric=R), R)
            Y[:, i:j] = B.conj().T @ V
        i = j
    E = channel.matrix
    modes = []
    for a in range(len(mu)):
        x = B @ Y[:, a]
        x = x / np.linalg.norm(x)
        X = unvec(x, D)
        flat = X.reshape(-1)
        p = int(np.argmax(np.round(np.abs(flat), 10)))
        X = X * (abs(flat[p]) / flat[p])
        x = vec(X)
        lam = complex(np.vdot(x, E @ x))
        eig = lam if np.linalg.norm(E @ x - lam * x) <= 1e-8 else None
        eps = -2.0 * float(mu[a])
        modes.append(ParticleMode(X, _wrap(k), eig, float(mu[a]), eps, offset + eps, float(offset)))
    return modes


def gram_matrix(channel: QuantumChannel, Xs: Sequence[np.ndarray], k: float, N: int, exact: bool = True) -> np.ndarray:
    """One-particle Gram matrix per site, ``<psi_a|psi_b> / N``.

    With ``exact=True`` the periodic ring of ``N`` sites is contracted exactly;
    otherwise ``Tr(X_a^dag T_k^{(N)}[X_b])`` is returned.
    """
    Xs = [np.asarray(X, complex) for X in Xs]
    if not exact:
        T = fourier_transfer(channel, k, N, vacuum_projection=False).matrix
        return np.array([[np.vdot(vec(Xa), T @ vec(Xb)) for Xb in Xs] for Xa in Xs])
    D = channel.dim
    Eadj = channel.matrix.conj().T
    # environment superoperators acting on M[bra, ket] (vectorized row-major)
    powers = [np.eye(D * D, dtype=complex)]
    for _ in range(N):
        powers.append(powers[-1] @ Eadj)
    G = np.zeros((len(Xs), len(Xs)), dtype=complex)
    for a, Xa in enumerate(Xs):
        bra = np.kron(Xa.conj().T, np.eye(D))
        for b, Xb in enumerate(Xs):
            ket = np.kron(np.eye(D), Xb.T)
            tot = 0j
            for r in range(N):
                # bra at bond 0, ket at bond r, both after their site
                tot += np.exp(1j * k * r) * np.trace(powers[N - r] @ ket @ powers[r] @ bra)
            G[a, b] = tot
    return G


# ---------------------------------------------------------------------------
# dispersion of normal channels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dispersion:
    energy: np.ndarray | float
    k_star: float
    e_min: float


def normal_dispersion(abs_lambda: float, phi: float, k, L: int) -> Dispersion:
    """``E = 2L - 2 Re 1/(1 - exp(i(k - phi)) |lambda|)`` with its minimum."""
    if not (0 <= abs_lambda < 1):
        raise ValidationError("normal dispersion needs 0 <= |lambda| < 1")
    k = np.asarray(k, dtype=float)
    E = 2.0 * L - 2.0 * np.real(1.0 / (1.0 - np.exp(1j * (k - phi)) * abs_lambda))
    if E.ndim == 0:
        E = float(E)
    return Dispersion(E, _wrap(phi), 2.0 * L - 2.0 / (1.0 - abs_lambda))


def sigma_factor(abs_lambda: float, phi: float, k: float) -> float:
    """``Re 1/(1 - exp(i(k - phi)) |lambda|)``."""
    return float(np.real(1.0 / (1.0 - np.exp(1j * (k - phi)) * abs_lambda)))


# ---------------------------------------------------------------------------
# gauge tensor
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GaugeTensor:
    """``B^(i) = A^(i) X + e^{-ik} Y A^(i) - A^(i) Y`` and the solved ``Y``."""

    B: np.ndarray
    Y: np.ndarray
    k: float
    annihilation_residual: float


def gauge_particle_tensor(mps, X: np.ndarray, k: float, guard: float = 1e-8) -> GaugeTensor:
    """Particle tensor in the gauge where ``sum_i A_i^dag B_i = 0``.

    ``Y = (1 - e^{-ik} G*)^{-1}[X]``; the guard rejects inputs for which ``X``
    overlaps an adjoint eigenvector whose resolvent denominator is below ``guard``
    (for example ``X = 1`` at ``k = 0``).
    """
    X = np.asarray(X, complex)
    A = mps.matrices
    D = mps.D
    ch = transfer_matrix(mps)
    if trace_preservation_defect(ch) > 1e-8:
        raise PreconditionError("gauge tensor needs a canonical (trace-preserving) tensor")
    Ead = ch.adjoint_matrix
    zc = np.exp(-1j * k)
    nu, V = np.linalg.eig(Ead)
    coef = np.linalg.lstsq(V, vec(X), rcond=None)[0]
    scale = max(np.linalg.norm(X), 1e-300)
    for c, v in zip(coef, nu):
        if abs(c) > 1e-10 * scale and abs(1 - zc * v) <= guard:
            raise SingularGaugeError(f"resolvent pole: adjoint eigenvalue {v:.6g} at k={k:.6g}")
    Mz = np.eye(D * D) - zc * Ead
    y, *_ = np.linalg.lstsq(Mz, vec(X), rcond=None)
    if np.linalg.norm(Mz @ y - vec(X)) > 1e-9 * scale:
        raise SingularGaugeError("gauge equation has no solution")
    Y = unvec(y, D)
    B = np.einsum("iab,bc->iac", A, X) + zc * np.einsum("ab,ibc->iac", Y, A) - np.einsum("iab,bc->iac", A, Y)
    res = float(np.linalg.norm(np.einsum("iba,ibc->ac", A.conj(), B)))
    return GaugeTensor(B, Y, _wrap(k), res)


# ---------------------------------------------------------------------------
# stability diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StabilityReport:
    """Bound-state diagnostics of one mode.

    Attributes
    ----------
    eps1 : float
        Measured normalized residual ``||(H - E) psi||^2 / <psi|psi>`` at the
        best energy ``E`` (method given by ``eps1_method``).
    eps1_leakage : float or None
        Analytic estimate from the two-insertion leakage superoperator.
    rayleigh : float
        Measured energy of the mode.
    delta : float
        Bound-state shift ``Delta_a``.
    sigma : float
    fusion : list
        ``(alpha, beta, f^a_{alpha beta})`` with ``|f| > 1e-12``.
    eigenvalues : ndarray
        Spectrum used (after the optional range renormalization).
    """

    eps1: float
    eps1_leakage: float | None
    rayleigh: float
    delta: float
    sigma: float
    fusion: list
    eigenvalues: np.ndarray
    eps1_method: str


def renormalized_eigenvalues(eigenvalues: np.ndarray, gamma: float, L: int) -> np.ndarray:
    """Rescale every non-unit modulus by a common power so that the largest
    becomes ``exp(-gamma ln L / L)``; phases and modulus ratios of logarithms
    are preserved (``|lambda|^2`` stays the square of ``|lambda|``)."""
    lam = np.asarray(eigenvalues, complex)
    mod = np.abs(lam)
    mask = np.abs(lam - 1) > 1e-12
    if not mask.any():
        return lam.copy()
    top = mod[mask].max()
    if top <= 0:
        return lam.copy()
    target = np.exp(-gamma * np.log(L) / L)
    s = np.log(target) / np.log(top)
    out = lam.copy()
    out[mask] = np.where(mod[mask] > 0, mod[mask] ** s, 0) * np.exp(1j * np.angle(lam[mask]))
    return out


def normal_channel_from_spectrum(basis: np.ndarray, eigenvalues: np.ndarray) -> QuantumChannel:
    """``sum_a lambda_a |X_a)(X_a|`` for an orthonormal basis ``X_a``."""
    D = basis.shape[1]
    B = basis.reshape(len(basis), -1)
    M = (B.T * eigenvalues) @ B.conj()
    return QuantumChannel(D, M, "direct")


def bound_state_shift(f: np.ndarray, eigenvalues: np.ndarray, a: int, k: float, L: int, exclude=(0,)) -> tuple[float, float]:
    """``Delta_a`` and ``sigma_{a,k}`` for structure constants ``f[c, a, b]``."""
    lam = np.asarray(eigenvalues, complex)
    mod = np.abs(lam)
    phi = -np.angle(lam)
    sig = sigma_factor(mod[a], phi[a], k)
    j = np.arange(1, L + 1)
    total = 0.0
    n = len(lam)
    for al in range(n):
        if al in exclude:
            continue
        for be in range(n):
            if be in exclude:
                continue
            c = f[al, a, be]
            if abs(c) < 1e-14:
                continue
            s = np.sum(mod[al] ** j * mod[be] ** (L - j) * np.exp(1j * (k - phi[al] + phi[be]) * j))
            total += abs(c) ** 2 * abs(s) ** 2
    return float(total / sig), sig


def stability_diagnostics(
    spectral: SpectralData,
    structure: StructureTensor,
    a: int,
    k: float,
    L: int,
    gamma: float | None = None,
    *,
    method: str = "infinite",
    mps=None,
    N: int | None = None,
    leakage: bool = True,
) -> StabilityReport:
    """Residual, bound-state shift and fusion channels of mode ``a``.

    Parameters
    ----------
    spectral, structure
        Spectral data and structure constants of a normal unital channel; the
        basis of ``structure`` indexes the modes.
    a : int
        Mode index into ``structure.basis``.
    gamma : float, optional
        Range renormalization of the decaying spectrum (see
        :func:`renormalized_eigenvalues`).
    method : {"infinite", "ed"}
        ``"infinite"`` measures the residual exactly on the infinite chain;
        ``"ed"`` builds the ring of ``N`` sites for ``mps`` and uses
        exact diagonalization machinery.
    """
    ch = spectral.channel
    if normality_defect(ch) > 1e-9 or unitality_defect(ch) > 1e-9:
        raise PreconditionError("stability diagnostics need a normal unital channel")
    basis = structure.basis
    B = basis.reshape(len(basis), -1)
    lam = np.einsum("ai,ij,aj->a", B.conj(), ch.matrix, B)
    if gamma is not None:
        lam = renormalized_eigenvalues(lam, gamma, L)
    lead = int(np.argmin(np.abs(lam - 1)))
    delta, sig = bound_state_shift(structure.coefficients, lam, a, k, L, exclude=(lead,))
    fusion = []
    n = len(lam)
    for al in range(n):
        for be in range(n):
            c = structure.coefficients[a, al, be]
            if abs(c) > 1e-12:
                fusion.append((al, be, complex(c)))
    X = basis[a]
    work = normal_channel_from_spectrum(basis, lam) if gamma is not None else ch
    if method == "infinite":
        from .chain import one_particle_residual

        res = one_particle_residual(work, X, k, L)
        eps1, rq = res.variance, res.rayleigh
    elif method == "ed":
        if mps is None or N is None:
            raise ValidationError("method='ed' needs mps and N")
        if gamma is not None:
            raise ValidationError("method='ed' does not support range renormalization")
        from .parent import one_particle_ed

        res = one_particle_ed(mps, X, k, N, L)
        eps1, rq = res.variance, res.rayleigh
    else:
        raise ValidationError(f"unknown method {method!r}")
    eps_c = None
    if leakage:
        from .chain import leakage_error

        eps_c = leakage_error(work, X, k, L)
    return StabilityReport(float(eps1), eps_c, float(rq), delta, sig, fusion, lam, method)


# ---------------------------------------------------------------------------
# low-density regime
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegimeReport:
    """Error magnitudes controlling the multi-particle picture.

    ``leakage`` = D^2 |lambda_2|^L (one-particle leakage), ``asymptotic`` =
    sum_n (m-n+1) C(L,n) N^-n D^{2(n+1)} (particle proximity), ``orthogonality``
    = m!/N^m, ``identity_action`` = m D^{2m} L^{m+1} / N^m.  ``additivity`` is
    ``asymptotic + identity_action`` and ``envelope`` the total including
    ``m`` copies of the leakage term.
    """

    D: int
    lam2: float
    L: int
    N: int
    m: int
    leakage: float
    asymptotic: float
    orthogonality: float
    identity_action: float
    additivity: float
    envelope: float


def regime_validity(D: int, lam2: float, L: int, N: int, m: int) -> RegimeReport:
    if D < 1 or L < 1 or N < 1 or m < 0 or lam2 < 0:
        raise ValidationError("need D, L, N >= 1, m >= 0, |lambda_2| >= 0")
    if m == 0:
        return RegimeReport(D, lam2, L, N, m, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    leak = D**2 * lam2**L
    asym = sum((m - n + 1) * comb(L, n) * float(N) ** (-n) * D ** (2 * (n + 1)) for n in range(1, m + 1))
    orth = factorial(m) / float(N) ** m
    ident = m * D ** (2 * m) * float(L) ** (m + 1) / float(N) ** m
    additivity = asym + ident
    env = m * leak + additivity + orth
    return RegimeReport(D, lam2, L, N, m, leak, asym, orth, ident, additivity, env)


def multiparticle_energy(modes: Sequence[ParticleMode]) -> tuple[float, float]:
    """``(sum E_j, sum eps_j)``."""
    return float(sum(m.energy for m in modes)), float(sum(m.epsilon for m in modes))
