import numpy as np
import pytest

from elmhbf.channel import ChannelSet, SystemConfig
from elmhbf.metrics import (
    FdBeamformers,
    HybridBeamformers,
    compose_effective,
    interference_cov,
    sum_rate,
    user_rates,
)
from elmhbf.numerics import SingularMatrixError, pinv

from conftest import crandn


def random_instance(rng, K=2, Ns=1, Nt=4, Nr=3, snr_db=3.0):
    cfg = SystemConfig.from_snr_db(snr_db, K=K, Ns=Ns, Nt=Nt, Nr=Nr, Nrft=max(K * Ns, 1), Nrfr=Ns)
    H = ChannelSet([crandn(rng, Nr, Nt) for _ in range(K)])
    fd = FdBeamformers([crandn(rng, Nt, Ns) for _ in range(K)], [crandn(rng, Nr, Ns) for _ in range(K)])
    return cfg, H, fd


class TestComposeEffective:
    def test_zero_digital(self):
        hb = HybridBeamformers(
            Frf=np.ones((4, 2), complex),
            Fbb=[np.zeros((2, 1), complex)],
            Wrf=[np.ones((3, 1), complex)],
            Wbb=[np.ones((1, 1), complex)],
        )
        fd = compose_effective(hb)
        np.testing.assert_array_equal(fd.F[0], 0)
        np.testing.assert_array_equal(fd.W[0], np.ones((3, 1)))

    def test_reconstruction_with_pinv(self, rng):
        Nt = 4
        Frf = np.exp(1j * rng.uniform(0, 2 * np.pi, (Nt, Nt)))
        F = Frf @ crandn(rng, Nt, 2)
        Fbb = pinv(Frf) @ F
        hb = HybridBeamformers(Frf, [Fbb], [np.ones((2, 2), complex)], [np.eye(2, dtype=complex)])
        np.testing.assert_allclose(compose_effective(hb).F[0], F, atol=1e-10)

    def test_inputs_unmodified(self, rng):
        Frf = np.exp(1j * rng.uniform(0, 2 * np.pi, (4, 2)))
        keep = Frf.copy()
        hb = HybridBeamformers(Frf, [crandn(rng, 2, 1)], [np.ones((3, 2), complex)], [crandn(rng, 2, 1)])
        compose_effective(hb)
        assert hb.max_modulus_error() < 1e-12
        np.testing.assert_array_equal(hb.Frf, keep)

    def test_dimension_mismatch(self, rng):
        hb = HybridBeamformers(np.ones((4, 2)), [crandn(rng, 3, 1)], [np.ones((3, 2))], [crandn(rng, 2, 1)])
        with pytest.raises(ValueError):
            compose_effective(hb)


class TestInterferenceCov:
    def test_noise_only(self):
        cfg = SystemConfig(K=1, Ns=2, Nt=2, Nr=2, Nrft=2, Nrfr=2, P=2.0, sigma2=2.0)  # rho = 2
        fd = FdBeamformers([np.eye(2, dtype=complex)], [np.eye(2, dtype=complex)])
        R = interference_cov(cfg, np.eye(2), fd, 0)
        np.testing.assert_allclose(R, 2.0 * np.eye(2))

    def test_elementwise_oracle(self, rng):
        cfg, H, fd = random_instance(rng, K=2, Ns=2, Nt=4, Nr=3)
        for k in range(2):
            W, Hk = fd.W[k], H[k]
            Ns = W.shape[1]
            oracle = np.zeros((Ns, Ns), complex)
            for i in range(Ns):
                for j in range(Ns):
                    acc = cfg.rho * np.sum(W[:, i].conj() * W[:, j])
                    for n in range(2):
                        if n == k:
                            continue
                        Fn = fd.F[n]
                        for s in range(Fn.shape[1]):
                            a = np.sum(W[:, i].conj() * (Hk @ Fn[:, s]))
                            b = np.sum(W[:, j].conj() * (Hk @ Fn[:, s]))
                            acc += a * b.conj()
                    oracle[i, j] = acc
            np.testing.assert_allclose(interference_cov(cfg, Hk, fd, k), oracle, atol=1e-10)

    def test_hermitian(self, rng):
        cfg, H, fd = random_instance(rng, K=3, Ns=2, Nt=6, Nr=4)
        R = interference_cov(cfg, H[1], fd, 1)
        np.testing.assert_allclose(R, R.conj().T, atol=1e-12)

    def test_bad_index(self, rng):
        cfg, H, fd = random_instance(rng)
        with pytest.raises(IndexError):
            interference_cov(cfg, H[0], fd, 5)


class TestSumRate:
    def test_scalar(self):
        cfg = SystemConfig(K=1, Ns=1, Nt=1, Nr=1, Nrft=1, Nrfr=1, P=1.0, sigma2=1.0)
        fd = FdBeamformers([np.ones((1, 1), complex)], [np.ones((1, 1), complex)])
        assert sum_rate(cfg, ChannelSet([np.ones((1, 1))]), fd) == pytest.approx(1.0)

    def test_scalar_sinr_oracle(self, rng):
        for _ in range(20):
            cfg, H, fd = random_instance(rng, K=2, Ns=1, Nt=2, Nr=2)
            expected = 0.0
            for k in range(2):
                w, h = fd.W[k][:, 0], H[k]
                sig = abs(w.conj() @ h @ fd.F[k][:, 0]) ** 2
                intf = sum(abs(w.conj() @ h @ fd.F[n][:, 0]) ** 2 for n in range(2) if n != k)
                expected += np.log2(1 + sig / (intf + cfg.rho * np.linalg.norm(w) ** 2))
            assert sum_rate(cfg, H, fd) == pytest.approx(expected, abs=1e-9)

    def test_zero_precoders(self, rng):
        cfg, H, fd = random_instance(rng, K=2, Ns=2, Nt=4, Nr=3)
        fd = FdBeamformers([np.zeros_like(f) for f in fd.F], fd.W)
        assert sum_rate(cfg, H, fd) == pytest.approx(0.0, abs=1e-14)

    def test_invariant_to_invertible_combiner_transform(self, rng):
        for _ in range(20):
            cfg, H, fd = random_instance(rng, K=3, Ns=2, Nt=6, Nr=4)
            base = sum_rate(cfg, H, fd)
            W = [w @ (crandn(rng, 2, 2) + 2 * np.eye(2)) for w in fd.W]
            assert sum_rate(cfg, H, FdBeamformers(fd.F, W)) == pytest.approx(base, abs=1e-8)

    def test_nonnegative_and_monotone_in_noise(self, rng):
        for _ in range(100):
            cfg, H, fd = random_instance(rng, K=2, Ns=2, Nt=4, Nr=3, snr_db=rng.uniform(-10, 20))
            r_lo_noise = sum_rate(cfg, H, fd)
            noisier = SystemConfig(**{**cfg.__dict__, "sigma2": cfg.sigma2 * 2.0})
            assert r_lo_noise >= 0.0
            assert sum_rate(noisier, H, fd) <= r_lo_noise + 1e-12

    def test_singular_covariance(self):
        cfg = SystemConfig(K=1, Ns=1, Nt=1, Nr=1, Nrft=1, Nrfr=1)
        fd = FdBeamformers([np.ones((1, 1), complex)], [np.zeros((1, 1), complex)])
        with pytest.raises(SingularMatrixError):
            sum_rate(cfg, ChannelSet([np.ones((1, 1))]), fd)

    def test_user_rates_sum(self, rng):
        cfg, H, fd = random_instance(rng, K=3, Ns=2, Nt=6, Nr=4)
        assert np.sum(user_rates(cfg, H, fd)) == pytest.approx(sum_rate(cfg, H, fd))
