"""Exact one-particle diagnostics on the infinite chain.

Overlaps of states built from local insertions into a uniform MPS only depend
on the transfer channel.  They are evaluated by a left-to-right contraction of
a D x D "environment" matrix ``M[bra, ket]``: the left boundary is the
identity, every site applies the adjoint channel, a ket insertion ``X`` maps
``M -> M X``, a bra insertion ``Y`` maps ``M -> Y^dag M`` and the right
boundary is ``Tr(M rho)``.

Two-bond insertions (the image of a local parent-Hamiltonian term acting on a
one-particle word) carry a four-index tensor ``K[e, a, b, f]``: at the left
bond the running ket index ``e`` enters as ``a`` and ``(b, f)`` are left
dangling until the right bond, where the running ket index must equal ``b``
and continues as ``f``.

Momentum sums are taken over the connected parts (disconnected products
subtracted) and truncated once the subleading channel power has decayed
below a tolerance.  All results are per lattice site.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import QuantumChannel, channel_spectrum, left_mult, right_mult, vec


class ChainContraction:
    """Contraction engine for one channel and fixed point."""

    def __init__(self, channel: QuantumChannel, rho: np.ndarray | None = None):
        self.channel = channel
        self.D = channel.dim
        self.E = channel.matrix
        self.rho = channel_spectrum(channel).fixed_point if rho is None else np.asarray(rho, complex)
        self._powers: dict[int, np.ndarray] = {0: np.eye(self.D**2, dtype=complex)}

    def _adj_power_T(self, n: int) -> np.ndarray:
        P = self._powers.get(n)
        if P is None:
            P = np.linalg.matrix_power(self.E.conj().T, n).T
            self._powers[n] = P
        return P

    def step(self, M: np.ndarray, n: int) -> np.ndarray:
        if n == 0:
            return M
        sh = M.shape
        return (M.reshape(-1, self.D**2) @ self._adj_power_T(n)).reshape(sh)

    def overlap(self, events) -> complex:
        """Contract a list of ``(bond, layer, kind, tensor)`` events.

        ``layer`` is ``"b"`` (bra) or ``"k"`` (ket); ``kind`` is ``"s"`` (single
        matrix), ``"L"`` (open a two-bond tensor) or ``"R"`` (close it).
        """
        D = self.D
        events = sorted(events, key=lambda e: (e[0], 0 if e[2] == "R" else 1))
        M = np.broadcast_to(np.eye(D, dtype=complex), (1, 1, 1, 1, D, D)).copy()
        pos = events[0][0] if events else 0
        for b, layer, kind, T in events:
            if b > pos:
                M = self.step(M, b - pos)
                pos = b
            if layer == "k":
                if kind == "s":
                    M = M @ T
                elif kind == "L":
                    M = np.einsum("pqxe,eabf->pqbfxa", M[:, :, 0, 0], T)
                else:
                    M = np.einsum("pqbfxb->pqxf", M)[:, :, None, None]
            else:
                if kind == "s":
                    M = np.einsum("ea,pqrsex->pqrsax", T.conj(), M)
                elif kind == "L":
                    M = np.einsum("eabf,rsex->bfrsax", T.conj(), M[0, 0])
                else:
                    M = np.einsum("bfrsbx->rsfx", M)[None, None]
        return complex(np.trace(M[0, 0, 0, 0] @ self.rho))

    def subleading_modulus(self) -> float:
        w = np.sort(np.abs(np.linalg.eigvals(self.E)))[::-1]
        return float(w[1]) if w.size > 1 else 0.0

    def cutoff(self, span: int, tol: float = 1e-15) -> int:
        lam = self.subleading_modulus()
        if lam < 1e-300:
            return span + 2
        return span + 2 + int(np.ceil(np.log(tol) / np.log(lam)))


def projector_pair_tensor(channel: QuantumChannel, X: np.ndarray, L: int, k: float) -> np.ndarray:
    """Two-bond tensor of ``sum_j exp(ikn) h_j`` acting on a single insertion.

    A range-``L`` term acts on ``w = L + 1`` sites; when the insertion sits on
    one of the ``L`` internal bonds of the window, the projector returns an
    MPS word with a boundary matrix on the window's outer bonds.  The result
    sums these over the ``L`` relative positions with their momentum phases.
    """
    D = channel.dim
    E = channel.matrix
    w = L + 1
    Ew = np.linalg.matrix_power(E, w)
    G = Ew.reshape(D, D, D, D).transpose(1, 3, 0, 2).reshape(D * D, D * D)
    Gi4 = np.linalg.inv(G).reshape(D, D, D, D)
    XI = left_mult(X)
    K = np.zeros((D, D, D, D), dtype=complex)
    for p in range(1, L + 1):
        F = np.linalg.matrix_power(E, p) @ XI @ np.linalg.matrix_power(E, w - p)
        K += np.exp(1j * k * p) * np.einsum("abcd,ecfd->eabf", Gi4, F.reshape(D, D, D, D))
    return K


@dataclass(frozen=True)
class ChainOneParticle:
    """Per-site connected quantities of a one-particle state on the infinite chain.

    Attributes
    ----------
    norm : complex
        ``<psi|psi>`` per site.
    rayleigh : float
        ``<psi|H|psi> / <psi|psi>``.
    variance : float
        ``(||H psi||^2 - |<psi|H psi>|^2 / <psi|psi>) / <psi|psi>``, the squared
        residual of the best energy.
    cutoff : int
        Number of bonds kept on either side in the momentum sums.
    """

    norm: complex
    rayleigh: float
    variance: float
    cutoff: int


def _momentum_sums(cc: ChainContraction, bra, ket, k: float, R: int, disc: complex) -> complex:
    total = 0j
    for r in range(-R, R + 1):
        total += np.exp(1j * k * r) * (cc.overlap(bra(0) + ket(r)) - disc)
    return total


def one_particle_residual(
    channel: QuantumChannel,
    X: np.ndarray,
    k: float,
    L: int,
    rho: np.ndarray | None = None,
    cutoff: int | None = None,
) -> ChainOneParticle:
    """Exact energy and residual of ``sum_n exp(ikn) |X at bond n>`` under the
    range-``L`` parent Hamiltonian of the infinite chain."""
    cc = ChainContraction(channel, rho)
    X = np.asarray(X, complex)
    K = projector_pair_tensor(channel, X, L, k)
    w = L + 1
    R = cc.cutoff(w) if cutoff is None else cutoff

    def single(layer):
        return lambda r: [(r, layer, "s", X)]

    def pair(layer):
        return lambda r: [(r, layer, "L", K), (r + w, layer, "R", None)]

    ex = complex(np.trace(X @ cc.rho))
    ep = cc.overlap(pair("k")(0))
    nn = _momentum_sums(cc, single("b"), single("k"), k, R, np.conj(ex) * ex)
    psP = _momentum_sums(cc, single("b"), pair("k"), k, R, np.conj(ex) * ep)
    PP = _momentum_sums(cc, pair("b"), pair("k"), k, R, np.conj(ep) * ep)
    rq = L - psP / nn
    var = (PP - abs(psP) ** 2 / nn) / nn
    return ChainOneParticle(nn, float(rq.real), float(var.real), R)


def leakage_superoperator(channel: QuantumChannel, X: np.ndarray, k: float, L: int, rho: np.ndarray) -> np.ndarray:
    """``sum_{j=1}^{L-1} e^{ikj} R_{rho^-1} G^j Qt_X G^{L-j}`` as a D^2 x D^2 matrix,
    where ``Qt_X[.] = Q[X Q[.]]`` and ``Q[Y] = Y - rho Tr Y``."""
    D = channel.dim
    E = channel.matrix
    Q = np.eye(D * D) - np.outer(vec(rho), vec(np.eye(D)).conj())
    Lt = Q @ left_mult(X) @ Q
    Rinv = right_mult(np.linalg.inv(rho))
    C = np.zeros((D * D, D * D), dtype=complex)
    for j in range(1, L):
        C += np.exp(1j * k * j) * Rinv @ np.linalg.matrix_power(E, j) @ Lt @ np.linalg.matrix_power(E, L - j)
    return C


def leakage_error(
    channel: QuantumChannel, X: np.ndarray, k: float, L: int, rho: np.ndarray | None = None, cutoff: int | None = None
) -> float:
    """Normalized norm of the two-insertion leakage state built from
    :func:`leakage_superoperator` (analytic estimate of the one-particle error)."""
    cc = ChainContraction(channel, rho)
    X = np.asarray(X, complex)
    D = channel.dim
    Kc = leakage_superoperator(channel, X, k, L, cc.rho).reshape(D, D, D, D)
    R = cc.cutoff(L) if cutoff is None else cutoff

    def single(layer):
        return lambda r: [(r, layer, "s", X)]

    def pair(layer):
        return lambda r: [(r, layer, "L", Kc), (r + L, layer, "R", None)]

    ex = complex(np.trace(X @ cc.rho))
    ep = cc.overlap(pair("k")(0))
    nn = _momentum_sums(cc, single("b"), single("k"), k, R, np.conj(ex) * ex)
    zz = _momentum_sums(cc, pair("b"), pair("k"), k, R, np.conj(ep) * ep)
    return float((zz / nn).real)
