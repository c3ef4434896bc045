"""Ising MPS and the virtual-particle picture of Glauber dynamics.

Occupations ``a_j in {0, 1}`` mark a ``sigma_z`` insertion on bond ``j`` of the
Ising MPS.  The coefficients

    tau^{a_l a a_r}_{b_l b_r} = 1/4 Tr(A^T Z^a A^T Z^{a_l + b_l} C Z^{a_r + b_r}),

with ``C`` the Hadamard inverse of ``A A``, are the amplitudes with which the
local generator moves an occupied bond: the particle leaves bond ``j`` and the
neighbours become ``(b_l, b_r)``.  The nonzero ones are ``tanh(2 beta) / 2``
for a hop to either side (annihilating if the target is occupied); the
remaining ``1 - tanh(2 beta)`` of the unit exit rate has no image and is
simulated as killing (the evolution is sub-stochastic).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.linalg import expm

from . import kernels
from .channel import QuantumChannel, transfer_matrix
from .errors import InsufficientStatisticsError, NegativeRateError, NumericalError, ValidationError
from .mps import MpsTensor

Z = np.diag([1.0, -1.0])
NEG_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class IsingMps:
    """Ising weights ``A = [[e^b, e^-b], [e^-b, e^b]] / (e^b + e^-b)``.

    ``mps`` has ``A^(i)_{ab} = delta_{ia} A_{ab}`` so that its periodic words
    are the Boltzmann weights ``prod_k A_{i_k i_(k+1)}``; ``born_mps`` uses the
    entrywise square root, whose state has the Gibbs distribution as Born
    probabilities.
    """

    beta: float
    A: np.ndarray

    @property
    def mps(self) -> MpsTensor:
        return MpsTensor(np.array([np.diag(np.eye(2)[i]) @ self.A for i in range(2)]))

    @property
    def born_mps(self) -> MpsTensor:
        R = np.sqrt(self.A)
        return MpsTensor(np.array([np.diag(np.eye(2)[i]) @ R for i in range(2)]))

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([1.0, np.tanh(self.beta)])

    def channel(self, born: bool = False) -> QuantumChannel:
        return transfer_matrix(self.born_mps if born else self.mps)


def ising_mps(beta: float) -> IsingMps:
    if not np.isfinite(beta):
        raise ValidationError("beta must be finite")
    # logistic form avoids overflow at large |beta|
    p = 1.0 / (1.0 + np.exp(-2.0 * beta))
    A = np.array([[p, 1 - p], [1 - p, p]])
    return IsingMps(float(beta), A)


@dataclass(frozen=True, eq=False)
class TauTable:
    """``tau[a_l, a, a_r, b_l, b_r]`` and the derived rate table.

    ``rates[a_l, a_r, b_l, b_r] = tau[a_l, 1, a_r, b_l, b_r]``; ``kill`` is the
    missing mass ``1 - sum rates`` per neighbour configuration.
    """

    beta: float
    tau: np.ndarray
    C: np.ndarray

    @property
    def rates(self) -> np.ndarray:
        return self.tau[:, 1]

    @property
    def kill(self) -> np.ndarray:
        return 1.0 - self.rates.sum(axis=(-2, -1))

    @property
    def hop_rate(self) -> float:
        return float(self.tau[0, 1, 0, 1, 0])

    def hopping_symmetry_defect(self) -> float:
        t = self.tau
        return max(abs(t[a, 1, b, (a + 1) % 2, b] - t[a, 1, b, a, (b + 1) % 2]) for a in (0, 1) for b in (0, 1))

    def creation_defect(self) -> float:
        """Largest |tau| on transitions from an empty centre that raise the particle number."""
        t = self.tau
        worst = 0.0
        for al, ar, bl, br in product((0, 1), repeat=4):
            if bl + br > al + ar:
                worst = max(worst, abs(t[al, 0, ar, bl, br]))
        return worst

    def validate(self) -> np.ndarray:
        """Rate table with round-off negatives clipped; raises on genuine negatives."""
        r = self.rates
        for idx in zip(*np.nonzero(r < -NEG_TOL)):
            al, ar, bl, br = (int(i) for i in idx)
            raise NegativeRateError(
                f"negative rate tau[{al},1,{ar},{bl},{br}] = {r[idx]:.6g} at beta={self.beta}",
                (al, 1, ar, bl, br), float(r[idx]))
        r = np.clip(r, 0.0, None)
        if np.any(r.sum(axis=(-2, -1)) > 1 + 1e-12):
            raise NegativeRateError("rates exceed the unit exit rate (negative kill rate)", None, float(r.sum(axis=(-2, -1)).max()))
        return r


def tau_table(beta: float) -> TauTable:
    im = ising_mps(beta)
    A = im.A
    A2 = A @ A
    if np.any(A2 == 0):
        raise NumericalError("A^2 has a vanishing entry")
    C = 1.0 / A2
    At = A.T
    Zp = [np.eye(2), Z]
    tau = np.zeros((2,) * 5)
    for al, a, ar, bl, br in product((0, 1), repeat=5):
        x, y = (al + bl) % 2, (ar + br) % 2
        tau[al, a, ar, bl, br] = 0.25 * np.trace(At @ Zp[a] @ At @ Zp[x] @ C @ Zp[y])
    return TauTable(float(beta), tau, C)


def correlation_coefficient(beta: float) -> float:
    """Recursion coefficient implied by the rate table, ``tanh(2 beta) / 2``."""
    return float(np.tanh(2 * beta) / 2)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OccupationState:
    occupations: tuple[int, ...]

    def __post_init__(self):
        occ = tuple(int(a) for a in self.occupations)
        if any(a not in (0, 1) for a in occ):
            raise ValidationError("occupations must be binary")
        if len(occ) < 3:
            raise ValidationError("the ring needs at least 3 sites")
        object.__setattr__(self, "occupations", occ)

    @property
    def N(self) -> int:
        return len(self.occupations)

    @classmethod
    def single(cls, N: int, site: int = 0) -> "OccupationState":
        a = [0] * N
        a[site % N] = 1
        return cls(tuple(a))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Event log and snapshots of one trajectory (``code``: 0..3 outcome
    ``2 b_l + b_r``, 4 killed)."""

    times: np.ndarray
    sites: np.ndarray
    codes: np.ndarray
    snap_times: np.ndarray
    snapshots: np.ndarray
    alive: np.ndarray
    initial: OccupationState

    def particle_numbers(self) -> np.ndarray:
        """Particle number after each event, starting with the initial state."""
        occ = np.array(self.initial.occupations, np.uint8)
        N = len(occ)
        out = [int(occ.sum())]
        for j, c in zip(self.sites, self.codes):
            if c == kernels.KILL:
                occ[:] = 0
            else:
                occ[j] = 0
                occ[(j - 1) % N] = c // 2
                occ[(j + 1) % N] = c % 2
            out.append(int(occ.sum()))
        return np.array(out)


def _event_budget(n0: int, horizon: float) -> int:
    mean = n0 * horizon
    return int(mean + 10 * np.sqrt(mean) + 50)


def simulate(
    table: TauTable,
    state: OccupationState,
    horizon: float,
    seed: int,
    snap_times=None,
    backend: str | None = None,
) -> Trajectory:
    """Exact event-driven trajectory; identical seeds give identical logs."""
    if horizon < 0:
        raise ValidationError("horizon must be >= 0")
    rates = table.validate()
    snap = np.asarray([] if snap_times is None else snap_times, float)
    n0 = sum(state.occupations)
    budget = _event_budget(n0, horizon)
    rng = np.random.default_rng(seed)
    u = rng.random((1, 3 * budget))
    occ0 = np.array([state.occupations], np.uint8)
    s, al, ne, st, lt, ls, lc = kernels.gillespie(occ0, rates, horizon, snap, u, True, backend)
    if st[0]:
        raise NumericalError("event budget exhausted")
    n = int(ne[0])
    return Trajectory(lt[0, :n].copy(), ls[0, :n].copy(), lc[0, :n].copy(), snap, s[0], al[0], state)


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Snapshots of ``M`` independent trajectories started from one state."""

    beta: float
    N: int
    snap_times: np.ndarray
    snapshots: np.ndarray
    alive: np.ndarray
    seed: int

    @property
    def M(self) -> int:
        return self.snapshots.shape[0]


def ensemble(
    table: TauTable,
    state: OccupationState,
    snap_times,
    trajectories: int,
    seed: int,
    *,
    batch: int = 20_000,
    backend: str | None = None,
) -> Ensemble:
    """Batched simulation; batch ``b`` draws from ``default_rng([seed, b])``."""
    rates = table.validate()
    snap = np.asarray(snap_times, float)
    if snap.size == 0 or np.any(np.diff(snap) <= 0) or snap[0] < 0:
        raise ValidationError("snapshot times must be increasing and nonnegative")
    horizon = float(snap[-1])
    n0 = sum(state.occupations)
    budget = _event_budget(n0, horizon)
    occ = np.array(state.occupations, np.uint8)
    snaps, alive = [], []
    for b, start in enumerate(range(0, trajectories, batch)):
        m = min(batch, trajectories - start)
        rng = np.random.default_rng([seed, b])
        u = rng.random((m, 3 * budget))
        s, al, _, st, *_ = kernels.gillespie(np.tile(occ, (m, 1)), rates, horizon, snap, u, False, backend)
        if st.any():
            raise NumericalError("event budget exhausted")
        snaps.append(s)
        alive.append(al)
    return Ensemble(table.beta, state.N, snap, np.concatenate(snaps), np.concatenate(alive), seed)


# ---------------------------------------------------------------------------
# correlation recursion
# ---------------------------------------------------------------------------

def recursion_generator(N: int, lam: float) -> np.ndarray:
    """``dC_n/dt = -C_n + lam (C_{n-1} + C_{n+1})`` on a ring."""
    G = -np.eye(N)
    for n in range(N):
        G[n, (n - 1) % N] += lam
        G[n, (n + 1) % N] += lam
    return G


def recursion_solution(N: int, lam: float, times, origin: int = 0) -> np.ndarray:
    G = recursion_generator(N, lam)
    e = np.zeros(N)
    e[origin] = 1.0
    return np.array([expm(G * t) @ e for t in np.atleast_1d(times)])


@dataclass(frozen=True)
class CorrelationReport:
    """Fit of the correlation recursion to a single-particle ensemble.

    Attributes
    ----------
    lambda_hat, lambda_se : float
        Estimate from the surviving mass ``M(t) = exp(-(1 - 2 lam) t)`` at the
        last snapshot, with its delta-method standard error.
    lambda_theory : float
    chi2, dof : float, int
        Multinomial goodness of fit of the occupation histograms (one disjoint
        trajectory subset per snapshot) against the recursion solved with
        ``lambda_hat``.
    envelope : float
        ``dof + 3 sqrt(2 dof)``; ``passed`` iff ``chi2 <= envelope``.
    derivative_residual : float
        RMS of ``(dC/dt)_emp - RHS(C_emp)`` in units of its standard error,
        central differences at interior snapshots.
    symmetry : float
        Largest ``|C_n - C_-n|`` over the standard error of the difference.
    C : ndarray
        Empirical ``C_n(t)`` (all trajectories), shape (K, N).
    """

    lambda_hat: float
    lambda_se: float
    lambda_theory: float
    chi2: float
    dof: int
    envelope: float
    passed: bool
    derivative_residual: float
    symmetry: float
    C: np.ndarray


def correlation_check(ens: Ensemble, *, origin: int = 0, min_trajectories: int = 10_000,
                      max_se: float = 0.05, min_expected: float = 5.0) -> CorrelationReport:
    M, K, N = ens.snapshots.shape
    if M < min_trajectories:
        raise InsufficientStatisticsError(f"{M} trajectories < required {min_trajectories}")
    t = ens.snap_times
    if t[-1] <= 0:
        raise ValidationError("need a positive snapshot time")
    C = ens.snapshots.mean(axis=0).astype(float)
    mass = ens.alive[:, -1].mean()
    if mass <= 0:
        raise InsufficientStatisticsError("no surviving trajectories at the last snapshot")
    lam_hat = 0.5 * (1.0 + np.log(mass) / t[-1])
    se = 0.5 * np.sqrt((1 - mass) / (M * mass)) / t[-1]
    if se > max_se:
        raise InsufficientStatisticsError(f"standard error {se:.3g} above {max_se}")
    # goodness of fit on disjoint subsets
    pred = recursion_solution(N, lam_hat, t, origin)
    chi2, dof = 0.0, 0
    parts = np.array_split(np.arange(M), K)
    for k in range(K):
        idx = parts[k]
        m = len(idx)
        counts = np.concatenate([ens.snapshots[idx, k].sum(axis=0), [m - ens.alive[idx, k].sum()]]).astype(float)
        p = np.concatenate([pred[k], [1 - pred[k].sum()]])
        exp_ = m * p
        big = exp_ >= min_expected
        o = list(counts[big])
        e = list(exp_[big])
        if (~big).any() and exp_[~big].sum() > 0:
            o.append(counts[~big].sum())
            e.append(exp_[~big].sum())
        o, e = np.array(o), np.array(e)
        if len(e) < 2:
            continue
        chi2 += float(((o - e) ** 2 / e).sum())
        dof += len(e) - 1
    dof = max(dof - 1, 1)  # lambda_hat was fitted
    env = dof + 3 * np.sqrt(2 * dof)
    # empirical derivative
    G = recursion_generator(N, lam_hat)
    res = []
    var = C * (1 - C) / M
    for k in range(1, K - 1):
        dt = t[k + 1] - t[k - 1]
        dC = (C[k + 1] - C[k - 1]) / dt
        rhs = G @ C[k]
        sd = np.sqrt((var[k + 1] + var[k - 1]) / dt**2 + (np.abs(G) ** 2) @ var[k])
        ok = sd > 0
        # central differences carry an O(dt^2) bias that is compared as well
        res.extend(((dC - rhs)[ok] / sd[ok]).tolist())
    dres = float(np.sqrt(np.mean(np.square(res)))) if res else 0.0
    refl = (2 * origin - np.arange(N)) % N
    dsym = np.abs(C - C[:, refl])
    sd = np.sqrt(var + var[:, refl])
    sym = float(np.max(np.where(sd > 0, dsym / np.where(sd > 0, sd, 1), 0)))
    return CorrelationReport(float(lam_hat), float(se), correlation_coefficient(ens.beta), chi2, dof, float(env),
                             bool(chi2 <= env), dres, sym, C)


# ---------------------------------------------------------------------------
# spin-level generator
# ---------------------------------------------------------------------------

def spin_generator(beta: float, N: int) -> np.ndarray:
    """Heat-bath single-flip generator on ``N`` periodic Ising spins.

    ``w_j = (1 - (gamma/2) s_j (s_{j-1} + s_{j+1})) / 2`` with
    ``gamma = tanh(2 beta)``; states are indexed by bit patterns (bit j set
    means spin down).
    """
    g = np.tanh(2 * beta)
    n = 2**N
    Q = np.zeros((n, n))
    for s in range(n):
        spins = [1 - 2 * ((s >> j) & 1) for j in range(N)]
        for j in range(N):
            w = 0.5 * (1 - 0.5 * g * spins[j] * (spins[j - 1] + spins[(j + 1) % N]))
            Q[s, s ^ (1 << j)] += w
            Q[s, s] -= w
    return Q


def gibbs_weights(beta: float, N: int) -> np.ndarray:
    n = 2**N
    out = np.empty(n)
    for s in range(n):
        spins = [1 - 2 * ((s >> j) & 1) for j in range(N)]
        out[s] = np.exp(beta * sum(spins[j] * spins[(j + 1) % N] for j in range(N)))
    return out / out.sum()


@dataclass(frozen=True)
class DetailedBalanceReport:
    cycle_defect: float
    gibbs_defect: float
    cycles: int


def detailed_balance_check(beta: float, N: int = 3) -> DetailedBalanceReport:
    """Kolmogorov criterion on the elementary cycles of the flip graph
    (``s -> s^j -> s^jk -> s^k -> s``) plus the direct comparison
    ``pi(s) q(s, s') = pi(s') q(s', s)``; defects are absolute log ratios."""
    Q = spin_generator(beta, N)
    pi = gibbs_weights(beta, N)
    n = Q.shape[0]
    worst_c, count = 0.0, 0
    for s in range(n):
        for j in range(N):
            for k in range(j + 1, N):
                a, b, c = s ^ (1 << j), s ^ (1 << j) ^ (1 << k), s ^ (1 << k)
                fw = Q[s, a] * Q[a, b] * Q[b, c] * Q[c, s]
                bw = Q[s, c] * Q[c, b] * Q[b, a] * Q[a, s]
                worst_c = max(worst_c, abs(np.log(fw / bw)) if fw > 0 and bw > 0 else (0.0 if fw == bw else np.inf))
                count += 1
    worst_g = 0.0
    for s in range(n):
        for j in range(N):
            t = s ^ (1 << j)
            worst_g = max(worst_g, abs(np.log(pi[s] * Q[s, t] / (pi[t] * Q[t, s]))))
    return DetailedBalanceReport(float(worst_c), float(worst_g), count)
