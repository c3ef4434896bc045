"""Disordered MPS families and the localization metric ``Xi``.

``Xi(Gamma, N) = sum_n n ||Gamma^n - Gamma^inf||_1 / sum_n ||Gamma^n - Gamma^inf||_1``
(``n = 1..N``, trace norm of the D^2 x D^2 matrix) is the first moment of the
decay profile of the channel powers.  It grows like a diffusion length when the
subleading spectrum approaches the unit circle and saturates otherwise.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .channel import QuantumChannel, channel_spectrum
from .errors import NonInjectiveError, ValidationError
from .models import SM, SP, SZ

MODES = ("analytic", "monte-carlo")


def _aklt_clean(lam: float) -> np.ndarray:
    return np.array([np.sqrt(1 - lam) * SP, np.sqrt(1 - lam) * SM, np.sqrt(lam) * SZ])


def aklt_disordered(lam: float, w: np.ndarray) -> np.ndarray:
    """Disordered AKLT-family tensors for noise ``w`` of shape (..., 4).

    ``w[..., 0:3]`` multiply the amplitude noise of ``(s+, s-, sz)`` and
    ``w[..., 3]`` the identity admixture of the ``sz`` tensor.  With shared
    noise the first three columns are equal.
    """
    w = np.asarray(w, float)
    a = np.sqrt(1 - lam)
    b = np.sqrt(lam)
    I2 = np.eye(2)
    Bp = (a + w[..., 0] / np.sqrt(2))[..., None, None] * SP
    Bm = (a + w[..., 1] / np.sqrt(2))[..., None, None] * SM
    Bz = (b + w[..., 2] / 2)[..., None, None] * SZ + (w[..., 3] / 2)[..., None, None] * I2
    return np.stack([Bp, Bm, Bz], axis=-3)


def _kraus_channel_matrix(B: np.ndarray) -> np.ndarray:
    # B: (..., d, D, D) -> sum_i B_i (x) conj(B_i), averaged over leading axes
    D = B.shape[-1]
    M = np.einsum("...iab,...icd->...acbd", B, B.conj()).reshape(B.shape[:-3] + (D * D, D * D))
    return M


@dataclass(frozen=True)
class DisorderFamily:
    """One-parameter tensor family with Gaussian tensor noise of variance ``W``.

    Parameters
    ----------
    name : str
        ``"aklt"`` or a label for ``tensors``.
    W : float
    mode : {"analytic", "monte-carlo"}
        ``"analytic"`` is only available for the built-in family.
    samples : int
        Monte-Carlo draws.
    seed : int
    shared_noise : bool
        Whether the amplitude noise ``w_1`` is shared by the three tensors of
        a site (default) or drawn independently for each.
    tensors : callable, optional
        ``(lam, w) -> (..., d, D, D)`` for user families; ``w`` has shape
        ``(..., n_noise)``.
    n_noise : int
    domain : tuple
    """

    name: str = "aklt"
    W: float = 0.0
    mode: str = "analytic"
    samples: int = 10_000
    seed: int = 0
    shared_noise: bool = True
    tensors: Callable | None = field(default=None, compare=False)
    n_noise: int = 4
    domain: tuple[float, float] = (0.5, 1.0)

    def __post_init__(self):
        if self.W < 0:
            raise ValidationError("disorder variance W must be >= 0")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        if self.name != "aklt" and self.tensors is None:
            raise ValidationError(f"unknown family {self.name!r}")
        if self.mode == "analytic" and self.tensors is not None:
            raise ValidationError("analytic averaging is only implemented for the built-in family")
        if self.samples < 1:
            raise ValidationError("samples must be >= 1")

    def build(self, lam: float, w: np.ndarray) -> np.ndarray:
        if self.tensors is not None:
            return np.asarray(self.tensors(lam, w), dtype=complex)
        return aklt_disordered(lam, w)

    def draw(self, rng: np.random.Generator, shape: tuple) -> np.ndarray:
        sd = np.sqrt(self.W)
        if self.tensors is not None:
            return sd * rng.standard_normal(shape + (self.n_noise,))
        if self.shared_noise:
            w1 = sd * rng.standard_normal(shape)
            w2 = sd * rng.standard_normal(shape)
            return np.stack([w1, w1, w1, w2], axis=-1)
        return sd * rng.standard_normal(shape + (4,))


def _check_domain(family: DisorderFamily, lam: float):
    lo, hi = family.domain
    if not (lo <= lam <= hi):
        raise ValidationError(f"lambda={lam} outside the family domain [{lo}, {hi}]")


def averaged_matrix(family: DisorderFamily, lam: float) -> np.ndarray:
    """Unnormalized ``E[sum_i B^i (x) conj(B^i)]``."""
    _check_domain(family, lam)
    if family.mode == "analytic":
        W = family.W
        clean = _kraus_channel_matrix(_aklt_clean(lam))
        # second moments: E[(a + w/sqrt2)^2] = a^2 + W/2 on s+-, E[(b + w/2)^2] = b^2 + W/4 on sz,
        # E[(w2/2)^2] = W/4 on the identity; cross terms have zero mean
        extra = (W / 2) * (_kraus_channel_matrix(np.array([SP, SM])))
        extra = extra + (W / 4) * _kraus_channel_matrix(np.array([SZ, np.eye(2, dtype=complex)]))
        return clean + extra
    rng = np.random.default_rng(family.seed)
    w = family.draw(rng, (family.samples,))
    return _kraus_channel_matrix(family.build(lam, w)).mean(axis=0)


def family_channel(family: DisorderFamily, lam: float) -> QuantumChannel:
    """Disorder-averaged channel renormalized to spectral radius one."""
    M = averaged_matrix(family, lam)
    r = np.max(np.abs(np.linalg.eigvals(M)))
    D = int(round(np.sqrt(M.shape[0])))
    return QuantumChannel(D, M / r, "disorder-averaged")


def monte_carlo_standard_error(family: DisorderFamily, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and entrywise standard error of the unnormalized average."""
    rng = np.random.default_rng(family.seed)
    w = family.draw(rng, (family.samples,))
    S = _kraus_channel_matrix(family.build(lam, w))
    mean = S.mean(axis=0)
    se = np.sqrt(S.real.var(axis=0, ddof=1) / family.samples) + 1j * np.sqrt(S.imag.var(axis=0, ddof=1) / family.samples)
    return mean, se


# ---------------------------------------------------------------------------
# Xi
# ---------------------------------------------------------------------------

def decay_profile(channel: QuantumChannel, N: int) -> np.ndarray:
    """``||Gamma^n - Gamma^inf||_1`` for ``n = 1..N``."""
    if N < 1:
        raise ValidationError("N must be >= 1")
    spec = channel_spectrum(channel)
    if not spec.injective:
        raise NonInjectiveError("Xi needs a unique leading eigenvalue")
    # Gamma^n - Gamma^inf = (Gamma - Gamma^inf)^n for n >= 1
    R = channel.matrix - spec.projector
    out = np.empty(N)
    P = np.eye(R.shape[0], dtype=complex)
    for n in range(N):
        P = P @ R
        out[n] = np.linalg.norm(P, "nuc")
    return out


def xi_from_profile(profile: np.ndarray, floor: float = 0.0) -> float:
    """First moment over mass; 0 when the mass does not exceed ``floor``."""
    n = np.arange(1, len(profile) + 1)
    tot = math.fsum(profile)
    if tot <= max(floor, 1e-300):
        return 0.0
    return float(math.fsum(n * profile) / tot)


def xi_metric(channel: QuantumChannel, N: int = 100) -> float:
    # round-off of a perfectly mixing channel counts as zero mass
    floor = 64 * np.finfo(float).eps * N * np.linalg.norm(channel.matrix, "nuc")
    return xi_from_profile(decay_profile(channel, N), floor)


def lambda_schedule(t):
    """``sqrt(t) / (1 + sqrt(t))`` for ``t >= 1``."""
    t = np.asarray(t, float)
    if np.any(t < 1):
        raise ValidationError("schedule is defined for t >= 1")
    s = np.sqrt(t)
    out = s / (1 + s)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# quenched variant
# ---------------------------------------------------------------------------

def quenched_xi(family: DisorderFamily, lam: float, N: int, seed: int) -> float:
    """``Xi`` of one disorder realization.

    Site channels ``G_j`` are drawn independently and normalized by their
    spectral radius; the decay profile uses the trace norm of the product
    ``G_n ... G_1`` with its leading singular component removed, which
    coincides with ``||Gamma^n - Gamma^inf||_1`` for a clean normal channel.
    """
    _check_domain(family, lam)
    rng = np.random.default_rng(seed)
    w = family.draw(rng, (N,))
    mats = _kraus_channel_matrix(family.build(lam, w))
    prof = np.empty(N)
    P = np.eye(mats.shape[-1], dtype=complex)
    for n in range(N):
        G = mats[n] / np.max(np.abs(np.linalg.eigvals(mats[n])))
        P = G @ P
        s = np.linalg.svd(P, compute_uv=False)
        prof[n] = s[1:].sum()
    return xi_from_profile(prof)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class XiCurve:
    t: np.ndarray
    lam: np.ndarray
    xi: np.ndarray
    N: int
    W: float
    seeds: tuple[int, ...]
    quenched: bool = False
    xi_se: np.ndarray | None = None

    def rows(self):
        for t, l, x in zip(self.t, self.lam, self.xi):
            yield float(t), float(l), float(self.W), float(x)


def _cell(args):
    family, lam, N, seeds, quenched = args
    if quenched:
        vals = np.array([quenched_xi(family, lam, N, s) for s in seeds])
        se = vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0
        return float(vals.mean()), float(se)
    return xi_metric(family_channel(family, lam), N), 0.0


def sweep(
    family: DisorderFamily,
    t_grid: Sequence[float],
    N: int = 100,
    W_list: Sequence[float] = (0.0, 1.0),
    seeds: Sequence[int] = (0,),
    *,
    quenched: bool = False,
    workers: int = 1,
) -> list[XiCurve]:
    """One :class:`XiCurve` per ``W``; cells are independent and may run on a
    process pool, results are merged in grid order."""
    t = np.asarray(t_grid, float)
    if t.size == 0 or len(W_list) == 0:
        raise ValidationError("sweep needs nonempty t and W grids")
    if len(seeds) == 0:
        raise ValidationError("sweep needs at least one seed")
    lam = np.atleast_1d(lambda_schedule(t))
    seeds = tuple(int(s) for s in seeds)
    fams = []
    for W in W_list:
        f = DisorderFamily(family.name, float(W), family.mode, family.samples, seeds[0], family.shared_noise,
                           family.tensors, family.n_noise, family.domain)
        fams.append(f)
    cells = [(f, float(l), N, seeds, quenched) for f in fams for l in lam]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            res = list(ex.map(_cell, cells))
    else:
        res = [_cell(c) for c in cells]
    out = []
    for i, f in enumerate(fams):
        chunk = res[i * len(lam):(i + 1) * len(lam)]
        xi = np.array([c[0] for c in chunk])
        se = np.array([c[1] for c in chunk]) if quenched else None
        out.append(XiCurve(t, lam, xi, N, f.W, seeds, quenched, se))
    return out
