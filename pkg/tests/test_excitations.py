import numpy as np
import pytest
from hypothesis import given, strategies as st

from mpsexc.channel import channel_spectrum, right_mult, structure_constants, vec
from mpsexc.errors import NearPoleError, NonInjectiveError, PreconditionError, SingularGaugeError, ValidationError
from mpsexc.excitations import (
    fourier_transfer,
    gauge_particle_tensor,
    gram_matrix,
    multiparticle_energy,
    normal_dispersion,
    one_particle_modes,
    regime_validity,
    renormalized_eigenvalues,
    stability_diagnostics,
    transfer_tail_bound,
)
from mpsexc.models import PM_BASIS, SX, SZ, ghz_tensor, mixing_channel, pauli_tensor, pm_channel, random_canonical
from mpsexc.mps import MpsTensor

seeds = st.integers(0, 2**31 - 1)


class TestFourierTransfer:
    @pytest.mark.parametrize("k", [0.0, 0.7, np.pi])
    @pytest.mark.parametrize("L", [None, 5])
    def test_completely_mixing(self, k, L):
        D = 3
        ch = mixing_channel(np.eye(D) / D)
        ft = fourier_transfer(ch, k, L)
        X = np.array([[1, 2j, 0], [0, -2, 1], [3, 0, 1]])
        np.testing.assert_allclose(ft.apply(X), X @ np.eye(D) / D, atol=1e-14)

    def test_pauli_tail_bound(self, pauli):
        ch = pauli.channel()
        sp = channel_spectrum(ch)
        # the unit-eigenvalue sector does not decay; the bound concerns its complement
        Tinf = fourier_transfer(ch, np.pi / 3, vacuum_projection=True).matrix
        for L in range(10, 51):
            diff = np.linalg.norm(fourier_transfer(ch, np.pi / 3, L, vacuum_projection=True).matrix - Tinf, 2)
            assert diff <= transfer_tail_bound(sp, L)

    def test_unprojected_tail_does_not_decay(self, pauli):
        ch = pauli.channel()
        Tinf = fourier_transfer(ch, np.pi / 3).matrix
        d = [np.linalg.norm(fourier_transfer(ch, np.pi / 3, L).matrix - Tinf, 2) for L in (40, 41, 42)]
        assert min(d) > 0.1

    def test_tail_rate(self, pauli):
        ch = pauli.channel()
        Tinf = fourier_transfer(ch, np.pi / 3, vacuum_projection=True).matrix
        Ls = np.arange(10, 51)
        d = [np.linalg.norm(fourier_transfer(ch, np.pi / 3, L, vacuum_projection=True).matrix - Tinf, 2) for L in Ls]
        slope = np.polyfit(Ls, np.log(d), 1)[0]
        assert abs(slope / np.log(0.6) - 1) <= 0.1

    def test_pole_at_zero_momentum(self, pauli):
        with pytest.raises(NearPoleError) as exc:
            fourier_transfer(pauli.channel(), 0.0, vacuum_projection=False)
        assert abs(exc.value.eigenvalue - 1) < 1e-9

    def test_zero_momentum_projects_by_default(self, pauli):
        ft = fourier_transfer(pauli.channel(), 0.0)
        assert ft.vacuum_projected

    @given(st.floats(0.05, 0.95), st.floats(0, 2 * np.pi), st.floats(0.01, 2 * np.pi - 0.01))
    def test_hermitian_for_normal_unital(self, lam, phi, k):
        ft = fourier_transfer(pm_channel(lam, phi), k)
        assert ft.hermiticity_defect() <= 1e-9

    def test_finite_sum_definition(self, rng):
        A, rho = random_canonical(rng, 2, 2)
        ch = A.channel()
        k, L = 1.1, 6
        R = right_mult(rho)
        E = ch.matrix
        ref = R.astype(complex)
        for n in range(1, L):
            En = np.linalg.matrix_power(E, n)
            ref = ref + 0.5 * (np.exp(1j * k * n) * En @ R + np.exp(-1j * k * n) * R @ En.conj().T)
        np.testing.assert_allclose(fourier_transfer(ch, k, L).matrix, ref, atol=1e-13)

    def test_rejects_L0(self, pauli):
        with pytest.raises(ValidationError):
            fourier_transfer(pauli.channel(), 1.0, 0)


class TestModes:
    def test_pauli_zero_momentum(self, pauli):
        modes = one_particle_modes(pauli.channel(), 0.0, 3)
        assert len(modes) == 3
        for m in modes:
            assert abs(m.epsilon + 5) < 1e-10
            assert abs(m.energy - (6 - 5)) < 1e-10
            assert abs(np.trace(m.X)) < 1e-10

    def test_scalar_empty(self):
        assert one_particle_modes(MpsTensor([[[1.0]]]).channel(), 0.0, 2) == []

    def test_non_injective(self):
        with pytest.raises(NonInjectiveError):
            one_particle_modes(ghz_tensor().channel(), 0.5, 2)

    def test_not_trace_preserving(self):
        with pytest.raises(PreconditionError):
            one_particle_modes(MpsTensor([2 * SZ, SX]).channel(), 0.5, 2)

    @given(st.floats(0.05, 0.9), st.floats(0, 2 * np.pi), st.integers(0, 31), st.integers(1, 6))
    def test_normal_channel_consistency(self, lam, phi, m, L):
        k = 2 * np.pi * m / 32
        ch = pm_channel(lam, phi)
        modes = one_particle_modes(ch, k, L)
        for md in modes:
            assert md.eigenvalue is not None
            if abs(md.eigenvalue - 1) < 1e-12:
                # unit mode: Re 1/(1 - e^{ik}) = 1/2 for every k != 0
                assert abs(md.epsilon + 1) <= 1e-9 or m == 0
                continue
            ref = normal_dispersion(abs(md.eigenvalue), md.phase, k, L).energy
            assert abs(md.energy - ref) <= 1e-9
        G = np.array([[np.vdot(a.X, b.X) for b in modes] for a in modes])
        np.testing.assert_allclose(G, np.eye(len(modes)), atol=1e-9)

    @pytest.mark.parametrize("k", [0.0, np.pi])
    def test_degenerate_pair_resolved_into_eigenmodes(self, k):
        # s+ and s- share mu at k = 0 and pi; the modes must still be channel eigenmatrices
        modes = one_particle_modes(pm_channel(0.5, 1.0), k, 1)
        lams = [md.eigenvalue for md in modes if md.eigenvalue is not None]
        assert len(lams) == len(modes)
        assert any(abs(l - 0.5 * np.exp(1j)) < 1e-12 for l in lams)
        assert any(abs(l - 0.5 * np.exp(-1j)) < 1e-12 for l in lams)

    def test_rest_momentum_is_minimum(self):
        phi = 2 * np.pi * 37 / 256
        ks = 2 * np.pi * np.arange(256) / 256
        E = normal_dispersion(0.7, phi, ks, 4)
        assert abs(ks[np.argmin(E.energy)] - phi) < 1e-12
        assert abs(E.energy.min() - E.e_min) < 1e-12
        # same minimum from the modes of the corresponding channel (sigma+ mode)
        ch = pm_channel(0.7, -phi)
        sp = np.array([[0, 1], [0, 0]])
        eps = [next(m.epsilon for m in one_particle_modes(ch, k, 4) if abs(np.vdot(m.X, sp)) ** 2 > 0.4) for k in ks]
        assert abs(ks[int(np.argmin(eps))] - phi) < 1e-12

    @given(seeds, st.floats(0.1, 6.2))
    def test_unitary_invariance(self, seed, k):
        rng = np.random.default_rng(seed)
        A, _ = random_canonical(rng, 3, 2)
        U, _ = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
        a = [m.epsilon for m in one_particle_modes(A.channel(), k, 3)]
        b = [m.epsilon for m in one_particle_modes(A.gauge(U.conj().T).channel(), k, 3)]
        np.testing.assert_allclose(a, b, atol=1e-9)

    @given(seeds)
    def test_zero_momentum_orthogonal_to_vacuum(self, seed):
        rng = np.random.default_rng(seed)
        A, rho = random_canonical(rng, 3, 2)
        for m in one_particle_modes(A.channel(), 0.0, 2):
            assert abs(np.trace(rho @ m.X)) <= 1e-10

    def test_sorted_and_offset(self, pauli):
        modes = one_particle_modes(pauli.channel(), 1.0, 4, offset=6.0)
        eps = [m.epsilon for m in modes]
        assert eps == sorted(eps)
        assert all(m.offset == 6.0 and abs(m.energy - 6.0 - m.epsilon) < 1e-14 for m in modes)

    def test_truncated_modes_converge(self, pauli):
        # traceless modes converge geometrically; the unit mode oscillates with the cutoff
        def eps(trunc):
            return [m.epsilon for m in one_particle_modes(pauli.channel(), 1.0, 3, truncation=trunc) if abs(np.trace(m.X)) < 1e-9]

        np.testing.assert_allclose(eps(None), eps(80), atol=1e-12)


class TestGram:
    @given(seeds, st.integers(0, 7))
    def test_positive(self, seed, m):
        rng = np.random.default_rng(seed)
        A, _ = random_canonical(rng, 2, 2)
        Xs = [rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)) for _ in range(3)]
        for exact in (True, False):
            G = gram_matrix(A.channel(), Xs, 2 * np.pi * m / 8, 8, exact=exact)
            assert np.linalg.norm(G - G.conj().T) <= 1e-9 * np.linalg.norm(G)
            assert np.linalg.eigvalsh((G + G.conj().T) / 2).min() >= -1e-9


class TestDispersion:
    def test_examples(self):
        assert normal_dispersion(0.5, 0.0, 0.0, 10).energy == pytest.approx(16)
        assert normal_dispersion(0.0, 0.3, 1.7, 4).energy == pytest.approx(6)
        assert normal_dispersion(0.5, 0.2, 0.2 + np.pi, 10).energy == pytest.approx(20 - 4 / 3)
        d = normal_dispersion(0.5, 0.2, 0.0, 10)
        assert d.k_star == pytest.approx(0.2) and d.e_min == pytest.approx(16)

    @pytest.mark.parametrize("lam", [1.0, 1.3, -0.1])
    def test_domain(self, lam):
        with pytest.raises(ValidationError):
            normal_dispersion(lam, 0.0, 0.0, 3)


class TestGauge:
    def test_identity_at_zero_momentum(self, pauli):
        with pytest.raises(SingularGaugeError):
            gauge_particle_tensor(pauli, np.eye(2), 0.0)

    def test_pauli_scalar_resolvent(self, pauli):
        X = SZ / np.sqrt(2)
        g = gauge_particle_tensor(pauli, X, np.pi / 2)
        np.testing.assert_allclose(g.Y, X / (1 - np.exp(-1j * np.pi / 2) * 0.6), atol=1e-14)
        assert g.annihilation_residual <= 1e-12

    @given(seeds, st.floats(0.05, 6.2))
    def test_annihilation_identity(self, seed, k):
        rng = np.random.default_rng(seed)
        A, _ = random_canonical(rng, 3, 2)
        X = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        g = gauge_particle_tensor(A, X, k)
        assert g.annihilation_residual <= 1e-10 * max(1, np.linalg.norm(g.B))
        # both mixed transfer matrices vanish
        M = np.einsum("iab,icd->acbd", A.matrices.conj(), g.B)
        assert np.abs(np.einsum("iab,ibc->ac", A.matrices.conj().transpose(0, 2, 1), g.B)).max() <= 1e-10 * max(1, np.abs(M).max())

    def test_needs_canonical(self):
        with pytest.raises(PreconditionError):
            gauge_particle_tensor(MpsTensor([2 * SZ, SX]), SX, 1.0)


class TestStability:
    @given(st.floats(0.05, 0.95), st.floats(0, 2 * np.pi), st.sampled_from([None, 0.2, 0.5, 0.8]),
           st.integers(2, 40), st.integers(0, 3), st.floats(0, 2 * np.pi))
    def test_delta_nonnegative(self, lam, phi, gamma, L, a, k):
        sp = channel_spectrum(pm_channel(lam, phi))
        st_ = structure_constants(PM_BASIS)
        rep = stability_diagnostics(sp, st_, a, k, L, gamma, leakage=False)
        assert rep.delta >= 0
        assert rep.sigma > 0

    def test_fusion_table(self):
        sp = channel_spectrum(pm_channel(0.5))
        rep = stability_diagnostics(sp, structure_constants(PM_BASIS), 3, 0.0, 4)
        # sigma_z / sqrt2 arises from s+ s- and s- s+ (plus the identity channels)
        pairs = {(al, be) for al, be, _ in rep.fusion}
        assert {(1, 2), (2, 1)} <= pairs

    def test_renormalization_common_power(self):
        ev = np.array([1, 0.5j, -0.5j, 0.25])
        out = renormalized_eigenvalues(ev, 0.4, 16)
        top = np.exp(-0.4 * np.log(16) / 16)
        np.testing.assert_allclose(np.abs(out), [1, top, top, top**2])
        np.testing.assert_allclose(np.angle(out[1:3]), np.angle(ev[1:3]))

    def test_sigma_pm_modes_are_exact(self):
        # s+ s+ = 0: the s+ insertion has no fusion channel and no residual
        sp = channel_spectrum(pm_channel(0.8, 0.3))
        rep = stability_diagnostics(sp, structure_constants(PM_BASIS), 1, 0.5, 6, 0.6)
        assert rep.eps1 <= 1e-12

    def test_ed_matches_infinite_chain(self, pauli):
        sp = channel_spectrum(pauli.channel())
        f = structure_constants(np.array([np.eye(2), SX, 1j * np.array([[0, -1j], [1j, 0]]), SZ]) / np.sqrt(2))
        inf = stability_diagnostics(sp, f, 3, np.pi, 2, leakage=False)
        ed = stability_diagnostics(sp, f, 3, np.pi, 2, method="ed", mps=pauli, N=8, leakage=False)
        assert abs(inf.rayleigh - ed.rayleigh) < 1e-8
        assert abs(inf.eps1 - ed.eps1) < 1e-8

    def test_rejects_non_normal(self, rng):
        A, _ = random_canonical(rng, 2, 2)
        with pytest.raises(PreconditionError):
            stability_diagnostics(channel_spectrum(A.channel()), structure_constants(PM_BASIS), 1, 0.0, 3)


class TestRegime:
    def test_m0(self):
        r = regime_validity(2, 0.6, 10, 100, 0)
        assert r.leakage == r.asymptotic == r.orthogonality == r.identity_action == r.envelope == 0

    def test_leakage_term(self):
        r = regime_validity(2, 0.6, 10, 10**4, 2)
        assert r.leakage == pytest.approx(4 * 0.6**10)
        assert r.leakage == pytest.approx(0.0242, abs=5e-5)

    @given(st.integers(1, 4), st.floats(0, 0.99), st.integers(1, 20), st.integers(2, 10**5), st.integers(1, 3))
    def test_monotone_in_N(self, D, lam2, L, N, m):
        a, b = regime_validity(D, lam2, L, N, m), regime_validity(D, lam2, L, 2 * N, m)
        for name in ("asymptotic", "orthogonality", "identity_action", "additivity"):
            assert getattr(b, name) < getattr(a, name)
            assert getattr(a, name) >= 0
        assert b.leakage == a.leakage >= 0

    def test_validation(self):
        with pytest.raises(ValidationError):
            regime_validity(0, 0.5, 3, 10, 1)


class TestMultiparticle:
    def test_empty(self):
        assert multiparticle_energy([]) == (0.0, 0.0)

    def test_additivity(self, pauli):
        a = one_particle_modes(pauli.channel(), 0.0, 3)[0]
        b = next(m for m in one_particle_modes(pauli.channel(), np.pi, 3) if abs(m.epsilon + 4 / 3 * 1.0) < 1e-9 or True)
        tot, eps = multiparticle_energy([a, b])
        assert tot == pytest.approx(2 * 6 + a.epsilon + b.epsilon)
        assert eps == pytest.approx(a.epsilon + b.epsilon)

    def test_arithmetic(self):
        from mpsexc.excitations import ParticleMode

        m1 = ParticleMode(np.eye(1), 0.0, None, 2.5, -5.0, 1.0, 6.0)
        m2 = ParticleMode(np.eye(1), 0.0, None, 2 / 3, -4 / 3, 6 - 4 / 3, 6.0)
        assert multiparticle_energy([m1, m2])[0] == pytest.approx(2 * 6 - 5 - 4 / 3)
