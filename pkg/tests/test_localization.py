import numpy as np
import pytest
from hypothesis import given, strategies as st

from mpsexc.channel import channel_spectrum, transfer_matrix
from mpsexc.errors import NonInjectiveError, ValidationError
from mpsexc.localization import (
    DisorderFamily,
    averaged_matrix,
    decay_profile,
    family_channel,
    lambda_schedule,
    monte_carlo_standard_error,
    quenched_xi,
    sweep,
    xi_metric,
)
from mpsexc.models import PM_BASIS, aklt_family, ghz_tensor, mixing_channel, normal_channel, random_canonical


def _one_mode_channel(mu):
    return normal_channel(PM_BASIS, [1, 0, 0, mu])


class TestFamilyChannel:
    @pytest.mark.parametrize("lam", [0.5, 2 / 3, 0.9, 1.0])
    def test_clean_limit(self, lam):
        for mode in ("analytic", "monte-carlo"):
            ch = family_channel(DisorderFamily(W=0.0, mode=mode, samples=50), lam)
            np.testing.assert_allclose(ch.matrix, transfer_matrix(aklt_family(lam)).matrix, atol=1e-15)

    @pytest.mark.parametrize("lam", [0.5, 2 / 3, 0.9])
    @pytest.mark.parametrize("W", [0.0, 0.5, 1.0, 3.0])
    def test_spectrum(self, lam, W):
        ev = np.sort_complex(channel_spectrum(family_channel(DisorderFamily(W=W), lam)).eigenvalues)
        ref = np.sort_complex(np.array([1, (2 * lam - 1) / (1 + W), -lam / (1 + W), -lam / (1 + W)], complex))
        np.testing.assert_allclose(ev, ref, atol=1e-12)

    def test_monte_carlo_within_three_se(self):
        fam = DisorderFamily(W=1.0, mode="monte-carlo", samples=10_000, seed=7)
        mean, se = monte_carlo_standard_error(fam, 2 / 3)
        exact = averaged_matrix(DisorderFamily(W=1.0), 2 / 3)
        assert np.all(np.abs(mean.real - exact.real) <= 3 * se.real + 1e-12)
        assert np.all(np.abs(mean.imag - exact.imag) <= 3 * se.imag + 1e-12)

    def test_independent_noise_same_average(self):
        a = averaged_matrix(DisorderFamily(W=1.0, mode="monte-carlo", samples=20_000, seed=3, shared_noise=False), 0.7)
        b = averaged_matrix(DisorderFamily(W=1.0), 0.7)
        assert np.abs(a - b).max() < 0.05

    def test_domain(self):
        with pytest.raises(ValidationError):
            family_channel(DisorderFamily(), 0.3)

    @pytest.mark.parametrize("kw", [{"W": -1}, {"mode": "exact"}, {"name": "heisenberg"}, {"samples": 0}])
    def test_family_validation(self, kw):
        with pytest.raises(ValidationError):
            DisorderFamily(**kw)

    def test_user_family(self):
        fam = DisorderFamily("mine", W=0.0, mode="monte-carlo", samples=10,
                             tensors=lambda lam, w: np.broadcast_to(aklt_family(lam).matrices, w.shape[:-1] + (3, 2, 2)))
        np.testing.assert_allclose(family_channel(fam, 0.7).matrix, transfer_matrix(aklt_family(0.7)).matrix, atol=1e-14)


class TestXi:
    def test_mixing_is_zero(self):
        assert xi_metric(mixing_channel(np.eye(2) / 2), 100) == 0.0

    @pytest.mark.parametrize("mu", [0.1, 0.5, 0.9, -0.6])
    def test_single_mode_limit(self, mu):
        assert xi_metric(_one_mode_channel(mu), 2000) == pytest.approx(1 / (1 - abs(mu)), rel=1e-10)

    def test_monotone_in_modulus(self):
        xs = [xi_metric(_one_mode_channel(mu), 100) for mu in np.arange(0.1, 1.0, 0.1)]
        assert np.all(np.diff(xs) > 0)

    def test_aklt_matrix_power_oracle(self):
        E = transfer_matrix(aklt_family(2 / 3)).matrix
        P = np.outer(np.eye(2).reshape(-1), np.eye(2).reshape(-1)) / 2
        norms = np.array([np.linalg.svd(np.linalg.matrix_power(E, n) - P, compute_uv=False).sum() for n in range(1, 101)])
        ref = (np.arange(1, 101) * norms).sum() / norms.sum()
        assert abs(xi_metric(family_channel(DisorderFamily(), 2 / 3), 100) - ref) <= 1e-10
        # two rates 2/3 (twice) and 1/3
        two_rate = np.array([2 * (2 / 3) ** n + (1 / 3) ** n for n in range(1, 101)])
        np.testing.assert_allclose(norms, two_rate, rtol=1e-10, atol=1e-13)

    @given(st.integers(0, 2**31 - 1))
    def test_unitary_invariance(self, seed):
        rng = np.random.default_rng(seed)
        A, _ = random_canonical(rng, 3, 2)
        U, _ = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
        a = xi_metric(A.channel(), 60)
        b = xi_metric(A.channel().conjugated(U), 60)
        assert abs(a - b) <= 1e-9
        assert 0 <= a <= 60

    def test_degenerate(self):
        with pytest.raises(NonInjectiveError):
            xi_metric(ghz_tensor().channel(), 10)
        with pytest.raises(ValidationError):
            decay_profile(_one_mode_channel(0.5), 0)


class TestSchedule:
    def test_values(self):
        assert lambda_schedule(1) == 0.5
        assert lambda_schedule(4) == pytest.approx(2 / 3)
        assert lambda_schedule(1e12) == pytest.approx(1, abs=1e-6)
        assert np.all(np.diff(lambda_schedule(np.geomspace(1, 1e4, 20))) > 0)

    def test_domain(self):
        with pytest.raises(ValidationError):
            lambda_schedule(0.5)


@pytest.fixture(scope="module")
def curves():
    t = np.geomspace(1, 1e4, 40)
    return sweep(DisorderFamily(), t, 100, (0.0, 1.0))


class TestSweep:
    def test_w0_diffusive(self, curves):
        c = curves[0]
        m = c.t <= 400
        ratio = c.xi[m] / ((1 + np.sqrt(c.t[m])) / 2)
        assert ratio.min() >= 0.5
        assert ratio.max() <= 2 * (1 + 4 * np.finfo(float).eps)

    def test_w1_localized(self, curves):
        assert curves[1].xi.max() <= 4

    def test_majorization(self, curves):
        m = curves[0].t >= 16
        assert np.all(curves[0].xi[m] >= curves[1].xi[m])

    def test_diffusion_calibration(self, curves):
        c = curves[0]
        D = np.max(c.xi / np.sqrt(c.t))
        assert np.all(c.xi <= D * np.sqrt(c.t))
        assert D <= 2 * (1 + 4 * np.finfo(float).eps)

    def test_rows_and_bounds(self, curves):
        rows = list(curves[1].rows())
        assert len(rows) == 40 and rows[0][2] == 1.0
        for c in curves:
            assert np.all((c.xi >= 0) & (c.xi <= c.N))

    def test_deterministic_and_parallel(self):
        t = np.geomspace(1, 100, 4)
        fam = DisorderFamily(mode="monte-carlo", samples=200)
        a = sweep(fam, t, 50, (1.0,), seeds=(5,))
        b = sweep(fam, t, 50, (1.0,), seeds=(5,), workers=2)
        np.testing.assert_array_equal(a[0].xi, b[0].xi)

    def test_quenched(self):
        t = np.array([1.0, 16.0])
        c = sweep(DisorderFamily(), t, 40, (0.0, 1.0), seeds=(1, 2, 3), quenched=True)
        assert c[0].quenched and c[0].xi_se is not None
        # without disorder every realization is the clean channel
        clean = [xi_metric(family_channel(DisorderFamily(), lambda_schedule(x)), 40) for x in t]
        np.testing.assert_allclose(c[0].xi, clean, rtol=1e-8)
        assert quenched_xi(DisorderFamily(W=1.0), 0.7, 40, 1) >= 0

    def test_empty_grids(self):
        with pytest.raises(ValidationError):
            sweep(DisorderFamily(), [], 10)
        with pytest.raises(ValidationError):
            sweep(DisorderFamily(), [1.0], 10, seeds=())
