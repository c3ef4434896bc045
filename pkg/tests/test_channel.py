import numpy as np
import pytest
from hypothesis import given, strategies as st

from mpsexc.channel import (
    QuantumChannel,
    channel_spectrum,
    choi_cp_check,
    choi_matrix,
    diagonal_clock_channel,
    is_normal,
    random_phase_spectrum,
    spectrum_feasibility,
    structure_constants,
    trace_preservation_defect,
    transfer_matrix,
    unvec,
    vec,
)
from mpsexc.errors import PreconditionError, ShapeMismatchError, ValidationError
from mpsexc.glauber import ising_mps
from mpsexc.models import (
    PAULI,
    SX,
    SY,
    SZ,
    aklt_family,
    dephasing_channel,
    ghz_tensor,
    identity_channel,
    pauli_eigenvalues,
    random_canonical,
    random_tensor,
    transpose_channel,
)
from mpsexc.mps import MpsTensor

seeds = st.integers(0, 2**31 - 1)


def _rand_matrix(rng, D):
    return rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))


class TestTransferMatrix:
    def test_scalar(self):
        np.testing.assert_array_equal(transfer_matrix(MpsTensor([[[1.0]]])).matrix, [[1.0]])

    def test_pauli_spectrum_and_modes(self, pauli):
        sp = channel_spectrum(pauli.channel())
        np.testing.assert_allclose(sp.eigenvalues, [1, 0.6, 0.6, 0.6], atol=1e-12)
        np.testing.assert_allclose(pauli_eigenvalues(), [1, 0.6, 0.6, 0.6])
        # the degenerate block is resolved into Pauli matrices
        for X, P in zip(sp.right, PAULI):
            assert abs(abs(np.vdot(X, P / np.sqrt(2))) - 1) < 1e-10

    @pytest.mark.parametrize("lam", [0.55, 2 / 3, 0.8, 0.95])
    def test_aklt_family_spectrum(self, lam):
        ev = channel_spectrum(aklt_family(lam).channel()).eigenvalues
        np.testing.assert_allclose(np.sort_complex(ev), np.sort_complex(np.array([1, 2 * lam - 1, -lam, -lam], complex)), atol=1e-12)

    def test_aklt_point(self, aklt):
        ev = channel_spectrum(aklt.channel()).eigenvalues
        np.testing.assert_allclose(ev, [1, -2 / 3, -2 / 3, 1 / 3], atol=1e-12)

    @pytest.mark.parametrize("beta", [0.1, 0.5, 1.0])
    def test_ising(self, beta):
        im = ising_mps(beta)
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(im.A))[::-1], [1, np.tanh(beta)], atol=1e-14)
        ev = channel_spectrum(im.channel(born=True)).eigenvalues
        np.testing.assert_allclose(ev, [1, np.tanh(beta), 0, 0], atol=1e-12)

    def test_ghz_flagged(self):
        sp = channel_spectrum(ghz_tensor().channel())
        assert not sp.injective
        np.testing.assert_allclose(np.abs(sp.eigenvalues), [1, 1, 0, 0], atol=1e-12)

    def test_bad_shape(self):
        with pytest.raises(ShapeMismatchError):
            QuantumChannel(2, np.eye(3))
        with pytest.raises(ValidationError):
            QuantumChannel(1, [[np.inf]])
        with pytest.raises(ValidationError):
            QuantumChannel(1, [[1.0]], "tomographic")


class TestChannelInvariants:
    @given(seeds, st.sampled_from([2, 3]), st.sampled_from([2, 3, 4]))
    def test_matrix_matches_kraus_action(self, seed, D, d):
        rng = np.random.default_rng(seed)
        A = random_tensor(rng, d, D)
        ch = A.channel()
        X = _rand_matrix(rng, D)
        direct = sum(a @ X @ a.conj().T for a in A.matrices)
        np.testing.assert_allclose(ch.apply(X), direct, atol=1e-12 * np.abs(direct).max())
        adj = sum(a.conj().T @ X @ a for a in A.matrices)
        np.testing.assert_allclose(ch.adjoint_apply(X), adj, atol=1e-12 * np.abs(adj).max())

    @given(seeds)
    def test_hermiticity_preservation(self, seed):
        rng = np.random.default_rng(seed)
        ch = random_tensor(rng, 3, 3).channel()
        for _ in range(20):
            X = _rand_matrix(rng, 3)
            assert np.abs(ch.apply(X.conj().T) - ch.apply(X).conj().T).max() <= 1e-12 * max(1, np.abs(ch.apply(X)).max())

    @given(seeds, st.sampled_from([2, 3]))
    def test_canonical_channels(self, seed, D):
        rng = np.random.default_rng(seed)
        A, rho = random_canonical(rng, 3, D)
        ch = A.channel()
        assert trace_preservation_defect(ch) <= 1e-10
        for a in range(D * D):
            E = unvec(np.eye(D * D)[a], D)
            assert abs(np.trace(ch.apply(E)) - np.trace(E)) <= 1e-10
        sp = channel_spectrum(ch)
        assert abs(sp.eigenvalues[0] - 1) < 1e-10
        assert sp.moduli.max() <= 1 + 1e-10
        P = sp.projector
        assert np.linalg.norm(P @ P - P) <= 1e-10
        np.testing.assert_allclose(sp.fixed_point, rho, atol=1e-9)

    @given(seeds)
    def test_unitary_covariance(self, seed):
        rng = np.random.default_rng(seed)
        ch = random_tensor(rng, 2, 3).channel()
        U, _ = np.linalg.qr(_rand_matrix(rng, 3))
        a = np.sort_complex(np.linalg.eigvals(ch.matrix))
        b = np.sort_complex(np.linalg.eigvals(ch.conjugated(U).matrix))
        np.testing.assert_allclose(np.sort(np.abs(b)), np.sort(np.abs(a)), atol=1e-10)
        K = ch.conjugated(U).kraus
        np.testing.assert_allclose(QuantumChannel.from_kraus(K).matrix, ch.conjugated(U).matrix, atol=1e-12)

    def test_left_right_duality(self, rng):
        A, _ = random_canonical(rng, 2, 3)
        sp = channel_spectrum(A.channel())
        L = sp.left.reshape(9, -1)
        R = sp.right.reshape(9, -1)
        np.testing.assert_allclose(L.conj() @ R.T, np.eye(9), atol=1e-9)


class TestChoi:
    @pytest.mark.parametrize("D", [1, 2, 3])
    def test_identity(self, D):
        rep = choi_cp_check(identity_channel(D))
        assert rep.is_cp
        assert abs(rep.min_eigenvalue) < 1e-14 if D > 1 else abs(rep.min_eigenvalue - 1) < 1e-14

    def test_dephasing_overshoot(self):
        rep = choi_cp_check(dephasing_channel(1.2))
        assert not rep.is_cp
        assert abs(rep.min_eigenvalue - (1 - 1.2) / 2) < 1e-12

    def test_dephasing_ok(self):
        assert choi_cp_check(dephasing_channel(0.7)).is_cp

    def test_transpose(self):
        C = choi_matrix(transpose_channel(2))
        swap = np.eye(4)[[0, 2, 1, 3]]
        np.testing.assert_array_equal(C, swap)
        rep = choi_cp_check(transpose_channel(2))
        assert not rep.is_cp and abs(rep.min_eigenvalue + 1) < 1e-12

    @given(seeds)
    def test_kraus_channels_are_cp(self, seed):
        assert choi_cp_check(random_tensor(np.random.default_rng(seed), 3, 3).channel()).is_cp


class TestStructureConstants:
    def test_pauli_basis(self):
        f = structure_constants(PAULI / np.sqrt(2))
        one, x, y, z = 0, 1, 2, 3
        assert abs(f(z, x, y) - 1j / np.sqrt(2)) < 1e-12
        assert abs(f(x, x, one) - 1 / np.sqrt(2)) < 1e-12
        assert abs(f(one, x, x) - 1 / np.sqrt(2)) < 1e-12
        assert f.max_residual <= 1e-10

    def test_spectral_basis_phase_fixed(self, pauli):
        # the phase convention turns sigma_y / sqrt2 into i sigma_y / sqrt2
        f = structure_constants(channel_spectrum(pauli.channel()))
        np.testing.assert_allclose(f.basis[2], 1j * SY / np.sqrt(2), atol=1e-12)
        assert abs(f(3, 1, 2) + 1 / np.sqrt(2)) < 1e-12
        assert f.max_residual <= 1e-10

    def test_non_normal_rejected(self, rng):
        A, _ = random_canonical(rng, 2, 3)
        ch = A.channel()
        assert not is_normal(ch)
        with pytest.raises(PreconditionError):
            structure_constants(channel_spectrum(ch))

    def test_non_orthonormal_rejected(self):
        with pytest.raises(PreconditionError):
            structure_constants(np.array([np.eye(2), SX, SX, SZ]))


class TestFeasibility:
    @pytest.mark.parametrize("lam", [0.0, 0.3, 1.0, -1.0, 1.01, -1.5])
    def test_qubit_sz_mode(self, lam):
        # g = 1 clock unitary is sz for D = 2
        rep = spectrum_feasibility([1.0, abs(lam)], [0.0, 0.0 if lam >= 0 else 1.0], 2)
        assert rep.feasible == (abs(lam) <= 1)
        assert rep.agrees

    def test_completely_mixing(self):
        rep = spectrum_feasibility([1, 0, 0], [0, 0, 0], 3)
        assert rep.feasible and rep.agrees

    @pytest.mark.parametrize("D", [2, 3, 4])
    def test_random_agreement(self, D):
        rng = np.random.default_rng(100 + D)
        for _ in range(200):
            moduli, kappas = random_phase_spectrum(rng, D, max_modulus=1.5)
            assert spectrum_feasibility(moduli, kappas, D).agrees

    def test_clock_channel_spectrum(self):
        ch = diagonal_clock_channel([1, 0.5, 0.5], [0, 1, 2], 3)
        ev = np.linalg.eigvals(ch.matrix)
        lam = np.array([1, 0.5 * np.exp(2j * np.pi / 3), 0.5 * np.exp(4j * np.pi / 3)])
        for l in lam:
            assert np.min(np.abs(ev - l)) < 1e-12

    def test_inconsistent_ranges(self):
        with pytest.raises(ValidationError):
            spectrum_feasibility([1, 0.5], [0, 0, 0], 3)
        with pytest.raises(ValidationError):
            spectrum_feasibility([1, -0.5], [0, 0], 2)

    def test_active_alphas_recorded(self):
        rep = spectrum_feasibility([1.0, 0.8], [0.0, 1.0], 2)
        assert set(rep.active_alphas) <= set(range(1, 5))
        assert rep.worst_alpha in rep.active_alphas
