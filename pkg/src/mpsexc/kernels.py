"""Hot loops, each with a numba implementation and a pure-numpy fallback.

The default backend is numba when it can be imported.  Setting the environment
variable ``MPSEXC_BACKEND=numpy`` before import selects the fallback; every
public function here also takes an explicit ``backend`` argument so that both
paths can be exercised side by side (tests, benchmarks).

Three kernels live here:

* ``word_amplitudes`` -- traces of matrix words ``Tr(T_0^{i_0} ... T_{N-1}^{i_{N-1}} J)``
  for every configuration, the workhorse behind all explicit state vectors;
* ``local_sum`` -- ``sum_j h_j psi`` for a range-``w`` local matrix ``h`` on a
  periodic ring, i.e. the matrix-free Hamiltonian apply;
* ``gillespie`` -- event-driven simulation of a batch of particle trajectories
  driven by a local rate table.

Configuration index convention: site 0 is the most significant base-``d`` digit.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

_ENV = "MPSEXC_BACKEND"


def default_backend() -> str:
    """Backend chosen from the environment ("numba" or "numpy")."""
    want = os.environ.get(_ENV, "numba").strip().lower()
    if want not in ("numba", "numpy"):
        raise ValueError(f"{_ENV} must be 'numba' or 'numpy', got {want!r}")
    return "numba" if (want == "numba" and HAVE_NUMBA) else "numpy"


BACKEND = default_backend()


def _resolve(backend: str | None) -> str:
    if backend is None:
        return BACKEND
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        return "numpy"
    return backend


# ---------------------------------------------------------------------------
# word amplitudes
# ---------------------------------------------------------------------------

def _word_amplitudes_np(T: np.ndarray, boundary: np.ndarray, chunk: int = 1 << 22) -> np.ndarray:
    N, d, Dv, _ = T.shape
    if N == 1:
        return np.einsum("iab,ba->i", T[0], boundary)
    Q = np.einsum("iab,bc->iac", T[-1], boundary)
    # Enumerate a head of h sites in python so the vectorized tail stays under `chunk`.
    h = 0
    while d ** (N - 1 - h) * Dv * Dv > chunk and h < N - 1:
        h += 1
    out = np.empty(d**N, dtype=np.complex128)
    tail_sites = range(h, N - 1)
    block = d ** (N - h)
    for head in range(d**h):
        P = np.eye(Dv, dtype=np.complex128)
        rem = head
        digits = []
        for _ in range(h):
            digits.append(rem % d)
            rem //= d
        for q, i in enumerate(reversed(digits)):
            P = P @ T[q, i]
        P = P[None]
        for q in tail_sites:
            P = np.einsum("wab,ibc->wiac", P, T[q]).reshape(-1, Dv, Dv)
        out[head * block:(head + 1) * block] = np.einsum("wab,iba->wi", P, Q).reshape(-1)
    return out


if HAVE_NUMBA:

    @njit(cache=True)
    def _word_amplitudes_nb(T, boundary):  # pragma: no cover - compiled
        N, d, Dv, _ = T.shape
        total = d**N
        out = np.empty(total, dtype=np.complex128)
        Q = np.empty((d, Dv, Dv), dtype=np.complex128)
        for i in range(d):
            Q[i] = T[N - 1, i] @ boundary
        if N == 1:
            for i in range(d):
                acc = 0j
                for a in range(Dv):
                    acc += Q[i, a, a]
                out[i] = acc
            return out
        prefix = np.empty((N - 1, Dv, Dv), dtype=np.complex128)
        digits = np.zeros(N - 1, dtype=np.int64)
        prefix[0] = T[0, 0]
        for q in range(1, N - 1):
            prefix[q] = prefix[q - 1] @ T[q, 0]
        n_outer = total // d
        for outer in range(n_outer):
            P = prefix[N - 2]
            for i in range(d):
                acc = 0j
                for a in range(Dv):
                    for b in range(Dv):
                        acc += P[a, b] * Q[i, b, a]
                out[outer * d + i] = acc
            q = N - 2
            while q >= 0:
                digits[q] += 1
                if digits[q] < d:
                    break
                digits[q] = 0
                q -= 1
            if q < 0:
                break
            if q == 0:
                prefix[0] = T[0, digits[0]]
            else:
                prefix[q] = prefix[q - 1] @ T[q, digits[q]]
            for r in range(q + 1, N - 1):
                prefix[r] = prefix[r - 1] @ T[r, digits[r]]
        return out


def word_amplitudes(T: np.ndarray, boundary: np.ndarray | None = None, backend: str | None = None) -> np.ndarray:
    """Traces of all matrix words of an inhomogeneous periodic chain.

    Parameters
    ----------
    T : ndarray, shape (N, d, Dv, Dv)
        Site tensors; ``T[n, i]`` is the matrix for physical index ``i`` at site ``n``.
    boundary : ndarray, shape (Dv, Dv), optional
        Matrix closing the trace (identity by default).
    backend : {"numba", "numpy"}, optional

    Returns
    -------
    ndarray, shape (d**N,)
        ``Tr(T[0, i_0] ... T[N-1, i_{N-1}] boundary)`` with ``i_0`` most significant.
    """
    T = np.ascontiguousarray(T, dtype=np.complex128)
    Dv = T.shape[-1]
    if boundary is None:
        boundary = np.eye(Dv, dtype=np.complex128)
    boundary = np.ascontiguousarray(boundary, dtype=np.complex128)
    if _resolve(backend) == "numba":
        return _word_amplitudes_nb(T, boundary)
    return _word_amplitudes_np(T, boundary)


# ---------------------------------------------------------------------------
# periodic sum of local terms
# ---------------------------------------------------------------------------

def _local_sum_np(psi: np.ndarray, h: np.ndarray, N: int, d: int, w: int) -> np.ndarray:
    dim, ncol = psi.shape
    out = np.zeros_like(psi)
    dw = d**w
    for j in range(N):
        # rotate so that site j becomes the most significant digit
        v = psi.reshape(d**j, d ** (N - j), ncol).transpose(1, 0, 2).reshape(dw, -1)
        v = (h @ v).reshape(d ** (N - j), d**j, ncol).transpose(1, 0, 2).reshape(dim, ncol)
        out += v
    return out


if HAVE_NUMBA:

    @njit(cache=True, parallel=True)
    def _local_sum_nb(psi, h, N, d, w):  # pragma: no cover - compiled
        dim, ncol = psi.shape
        out = np.zeros_like(psi)
        dw = d**w
        nblk = dim // dw
        offs = np.empty(dw, dtype=np.int64)
        free = np.empty(N - w, dtype=np.int64)
        for j in range(N):
            # offsets of the window digits (first window site most significant)
            for q in range(dw):
                rem = q
                acc = 0
                for r in range(w - 1, -1, -1):
                    acc += (rem % d) * d ** (N - 1 - ((j + r) % N))
                    rem //= d
                offs[q] = acc
            # strides of the sites outside the window, least significant first
            n = 0
            for site in range(N - 1, -1, -1):
                if (site - j) % N >= w:
                    free[n] = d ** (N - 1 - site)
                    n += 1
            bases = np.empty(nblk, dtype=np.int64)
            for c in prange(nblk):
                base = 0
                left = np.int64(c)
                for r in range(N - w):
                    base += (left % d) * free[r]
                    left //= d
                bases[c] = base
            # gather every window block, apply h with one BLAS call, scatter back
            V = np.empty((dw, nblk), dtype=np.complex128)
            for col in range(ncol):
                for c in prange(nblk):
                    for q in range(dw):
                        V[q, c] = psi[bases[c] + offs[q], col]
                R = np.dot(h, V)
                for c in prange(nblk):
                    for q in range(dw):
                        out[bases[c] + offs[q], col] += R[q, c]
        return out


def local_sum(psi: np.ndarray, h: np.ndarray, N: int, d: int, backend: str | None = None) -> np.ndarray:
    """Apply ``sum_j h_{j..j+w-1}`` on a periodic ring of ``N`` sites.

    ``psi`` may be a vector of length ``d**N`` or a matrix whose columns are
    such vectors. ``h`` acts on ``w`` consecutive sites, ``h.shape == (d**w, d**w)``.
    """
    psi = np.asarray(psi, dtype=np.complex128)
    vec = psi.ndim == 1
    P = np.ascontiguousarray(psi.reshape(psi.shape[0], -1))
    h = np.ascontiguousarray(h, dtype=np.complex128)
    w = int(round(np.log(h.shape[0]) / np.log(d)))
    if d**w != h.shape[0] or w > N:
        raise ValueError("local matrix does not match d**w with w <= N")
    if _resolve(backend) == "numba":
        out = _local_sum_nb(P, h, N, d, w)
    else:
        out = _local_sum_np(P, h, N, d, w)
    return out[:, 0] if vec else out


# ---------------------------------------------------------------------------
# event-driven particle simulation
# ---------------------------------------------------------------------------
# rates[a_l, a_r, b_l, b_r]: rate at which an occupied site j with neighbour
# occupations (a_l, a_r) empties and leaves (b_l, b_r) on its neighbours.
# Whatever is missing from a unit total rate kills the trajectory
# (event code 4).  Each event consumes exactly three uniforms: waiting time,
# which particle fires, which outcome.

KILL = 4


def _gillespie_np(occ0, rates, horizon, snap_times, uniforms, log_events):
    M, N = occ0.shape
    K = snap_times.shape[0]
    U = uniforms.shape[1]
    emax = U // 3 if log_events else 0
    snaps = np.zeros((M, K, N), np.uint8)
    alive_out = np.zeros((M, K), np.bool_)
    n_events = np.zeros(M, np.int64)
    status = np.zeros(M, np.int8)
    log_t = np.zeros((M, emax))
    log_site = np.zeros((M, emax), np.int32)
    log_code = np.zeros((M, emax), np.int8)
    occ = occ0.astype(np.uint8).copy()
    t = np.zeros(M)
    ks = np.zeros(M, np.int64)
    alive = np.ones(M, np.bool_)
    active = np.ones(M, np.bool_)
    flat = rates.reshape(2, 2, 4)
    cum = np.cumsum(flat, axis=-1)
    rows = np.arange(M)
    e = 0
    while active.any():
        idx = rows[active]
        n_occ = occ[idx].sum(axis=1).astype(np.int64)
        still = (n_occ > 0) & alive[idx]
        exhausted = still & (3 * e + 3 > U)
        status[idx[exhausted]] = 1
        t_next = np.full(idx.shape[0], np.inf)
        go = still & ~exhausted
        if go.any():
            t_next[go] = t[idx[go]] - np.log1p(-uniforms[idx[go], 3 * e]) / n_occ[go]
        rec = ~exhausted
        # snapshots strictly before the next event
        while True:
            k = ks[idx]
            can = rec & (k < K)
            kk = np.minimum(k, K - 1)
            can &= (snap_times[kk] < t_next) & (snap_times[kk] <= horizon)
            if not can.any():
                break
            sel = idx[can]
            snaps[sel, ks[sel], :] = np.where(alive[sel, None], occ[sel], 0)
            alive_out[sel, ks[sel]] = alive[sel]
            ks[sel] += 1
        fire = go & (t_next <= horizon)
        done = ~fire
        active[idx[done]] = False
        if fire.any():
            sel = idx[fire]
            tn = t_next[fire]
            cnt = n_occ[fire]
            target = np.minimum((uniforms[sel, 3 * e + 1] * cnt).astype(np.int64), cnt - 1)
            csum = np.cumsum(occ[sel], axis=1)
            j = np.argmax(csum > target[:, None], axis=1)
            left = (j - 1) % N
            right = (j + 1) % N
            al = occ[sel, left]
            ar = occ[sel, right]
            u = uniforms[sel, 3 * e + 2]
            c = cum[al, ar]
            hit = u[:, None] < c
            code = np.where(hit.any(axis=1), np.argmax(hit, axis=1), KILL).astype(np.int8)
            killed = code == KILL
            alive[sel[killed]] = False
            occ[sel[killed]] = 0
            mv = ~killed
            s2 = sel[mv]
            occ[s2, j[mv]] = 0
            occ[s2, left[mv]] = (code[mv] // 2).astype(np.uint8)
            occ[s2, right[mv]] = (code[mv] % 2).astype(np.uint8)
            if log_events:
                log_t[sel, e] = tn
                log_site[sel, e] = j
                log_code[sel, e] = code
            t[sel] = tn
            n_events[sel] += 1
        e += 1
    return snaps, alive_out, n_events, status, log_t, log_site, log_code


if HAVE_NUMBA:

    @njit(cache=True)
    def _gillespie_nb(occ0, rates, horizon, snap_times, uniforms, log_events):  # pragma: no cover
        M, N = occ0.shape
        K = snap_times.shape[0]
        U = uniforms.shape[1]
        emax = U // 3 if log_events else 0
        snaps = np.zeros((M, K, N), np.uint8)
        alive_out = np.zeros((M, K), np.bool_)
        n_events = np.zeros(M, np.int64)
        status = np.zeros(M, np.int8)
        log_t = np.zeros((M, emax))
        log_site = np.zeros((M, emax), np.int32)
        log_code = np.zeros((M, emax), np.int8)
        occ = np.empty(N, np.uint8)
        for m in range(M):
            for q in range(N):
                occ[q] = occ0[m, q]
            t = 0.0
            ks = 0
            e = 0
            alive = True
            while True:
                n_occ = 0
                for q in range(N):
                    n_occ += occ[q]
                exhausted = False
                if n_occ == 0 or not alive:
                    t_next = np.inf
                elif 3 * e + 3 > U:
                    status[m] = 1
                    exhausted = True
                    t_next = np.inf
                else:
                    t_next = t - np.log1p(-uniforms[m, 3 * e]) / n_occ
                if exhausted:
                    break
                while ks < K and snap_times[ks] < t_next and snap_times[ks] <= horizon:
                    if alive:
                        for q in range(N):
                            snaps[m, ks, q] = occ[q]
                    alive_out[m, ks] = alive
                    ks += 1
                if t_next > horizon:
                    break
                target = int(uniforms[m, 3 * e + 1] * n_occ)
                if target > n_occ - 1:
                    target = n_occ - 1
                j = 0
                c = 0
                for q in range(N):
                    if occ[q]:
                        if c == target:
                            j = q
                            break
                        c += 1
                left = (j - 1) % N
                right = (j + 1) % N
                al = occ[left]
                ar = occ[right]
                u = uniforms[m, 3 * e + 2]
                acc = 0.0
                code = 4
                for o in range(4):
                    acc += rates[al, ar, o // 2, o % 2]
                    if u < acc:
                        code = o
                        break
                if code == 4:
                    alive = False
                    for q in range(N):
                        occ[q] = 0
                else:
                    occ[j] = 0
                    occ[left] = code // 2
                    occ[right] = code % 2
                if log_events:
                    log_t[m, e] = t_next
                    log_site[m, e] = j
                    log_code[m, e] = code
                t = t_next
                n_events[m] += 1
                e += 1
        return snaps, alive_out, n_events, status, log_t, log_site, log_code


def gillespie(occ0, rates, horizon, snap_times, uniforms, log_events=False, backend=None):
    """Simulate a batch of trajectories sharing one local rate table.

    Parameters
    ----------
    occ0 : ndarray of uint8, shape (M, N)
        Initial occupations (periodic ring, ``N >= 3``).
    rates : ndarray, shape (2, 2, 2, 2)
        ``rates[a_l, a_r, b_l, b_r]``; the unit total minus their sum is the kill rate.
    horizon : float
    snap_times : ndarray, shape (K,)
        Increasing times ``<= horizon`` at which the state is recorded.
    uniforms : ndarray, shape (M, U)
        Pre-drawn uniforms in [0, 1); three are consumed per event.
    log_events : bool
        Record (time, site, outcome code) of every event.

    Returns
    -------
    tuple
        ``(snaps, alive, n_events, status, log_t, log_site, log_code)``; ``status``
        is 1 for trajectories that ran out of uniforms before the horizon.
    """
    occ0 = np.ascontiguousarray(occ0, dtype=np.uint8)
    rates = np.ascontiguousarray(rates, dtype=np.float64)
    snap_times = np.ascontiguousarray(snap_times, dtype=np.float64)
    uniforms = np.ascontiguousarray(uniforms, dtype=np.float64)
    if _resolve(backend) == "numba":
        return _gillespie_nb(occ0, rates, float(horizon), snap_times, uniforms, bool(log_events))
    return _gillespie_np(occ0, rates, float(horizon), snap_times, uniforms, bool(log_events))
