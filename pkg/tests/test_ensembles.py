import numpy as np
import pytest

from realbulk.ensembles import (
    EnsembleSpec,
    MarkovChainConfig,
    McmcDiagnosticError,
    gauss_divisible_parts,
    haar_frame,
    haar_frames_batch,
    haar_unitary,
    sample_matrix,
    sample_mu,
    sample_nu,
    stream_generator,
)
from realbulk.linalg import ResolventCache


class TestSpec:
    def test_rejects_gauss_divisible_without_t(self):
        base = EnsembleSpec("ginoe", 4, seed=1)
        with pytest.raises(ValueError):
            EnsembleSpec("gauss-divisible", 4, seed=1, base=base)
        with pytest.raises(ValueError):
            EnsembleSpec("gauss-divisible", 4, seed=1, t=0.0, base=base)

    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            EnsembleSpec("wishart", 4, seed=1)

    def test_dict_roundtrip(self):
        spec = EnsembleSpec(
            "gauss-divisible", 6, seed=9, t=0.2, base=EnsembleSpec("iid-rademacher", 6, seed=3)
        )
        assert EnsembleSpec.from_dict(spec.to_dict()) == spec


class TestSampleMatrix:
    def test_determinism(self):
        spec = EnsembleSpec("ginoe", 8, seed=42)
        a = sample_matrix(spec, 3)
        b = sample_matrix(spec, 3)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, sample_matrix(spec, 4))

    def test_rademacher_entries(self):
        spec = EnsembleSpec("iid-rademacher", 4, seed=0)
        m = sample_matrix(spec, 0)
        assert set(np.round(np.abs(m.ravel()), 12)) == {0.5}

    def test_ginoe_variance_moment_oracle(self):
        # empirical variance over many draws within 3 std errors of 1/n
        spec = EnsembleSpec("ginoe", 2, seed=7)
        vals = np.concatenate([sample_matrix(spec, s).ravel() for s in range(25_000)])
        var = vals.var()
        se = np.sqrt(2.0 / vals.size) * 0.5  # var of sample variance of N(0, 1/2)
        assert abs(var - 0.5) < 3 * se

    def test_uniform_variance(self):
        spec = EnsembleSpec("iid-uniform", 3, seed=5)
        vals = np.concatenate([sample_matrix(spec, s).ravel() for s in range(20_000)])
        assert abs(vals.var() - 1.0 / 3) < 0.01
        assert abs(vals.mean()) < 0.01

    def test_gauss_divisible_decomposition_bitwise(self):
        base = EnsembleSpec("iid-rademacher", 5, seed=11)
        spec = EnsembleSpec("gauss-divisible", 5, seed=11, t=0.3, base=base)
        at = sample_matrix(spec, 2)
        a, b = gauss_divisible_parts(spec, 2)
        # composition is bitwise; the subtraction form only up to rounding
        assert np.array_equal(at, a + np.sqrt(0.3) * b)
        assert np.array_equal(a, sample_matrix(base, 2))
        assert np.abs((at - np.sqrt(0.3) * b) - a).max() < 1e-15

    def test_stream_independence(self):
        spec = EnsembleSpec("ginoe", 4, seed=1)
        xs = np.array([sample_matrix(spec, s)[0, 0] for s in range(4000)])
        ys = np.array([sample_matrix(spec, s)[1, 1] for s in range(4000)])
        corr = np.corrcoef(xs, ys)[0, 1]
        assert abs(corr) < 3.0 / np.sqrt(4000)


class TestHaar:
    def test_o1_uniform_sign(self):
        rng = stream_generator(3, 0)
        vals = [haar_frame(1, 1, rng).frame[0, 0] for _ in range(10_000)]
        assert set(np.round(np.abs(vals), 12)) == {1.0}
        assert abs(np.mean(vals)) < 3.0 / np.sqrt(10_000)

    def test_frame_orthonormal(self):
        rng = stream_generator(4, 0)
        f = haar_frame(3, 2, rng)
        assert np.abs(f.frame.T @ f.frame - np.eye(2)).max() < 1e-12

    def test_first_entry_symmetry_oracle(self):
        # E v_1^2 = 1/n by symmetry
        rng = stream_generator(5, 0)
        vals = np.array([haar_frame(4, 1, rng).frame[0, 0] ** 2 for _ in range(20_000)])
        se = vals.std() / np.sqrt(vals.size)
        assert abs(vals.mean() - 0.25) < 3 * se

    def test_left_invariance(self):
        # distribution invariant under fixed left rotation: compare moments
        rng1 = stream_generator(6, 0)
        rng2 = stream_generator(6, 0)
        q = np.linalg.qr(stream_generator(99, 0).standard_normal((4, 4)))[0]
        a = np.array([haar_frame(4, 1, rng1).frame[:, 0] for _ in range(20_000)])
        b = np.array([(q @ haar_frame(4, 1, rng2).frame)[:, 0] for _ in range(20_000)])
        for m in (a, b):
            assert abs((m[:, 0] ** 2).mean() - 0.25) < 0.015

    def test_unitary(self):
        rng = stream_generator(7, 0)
        u = haar_unitary(5, rng)
        assert np.abs(u.conj().T @ u - np.eye(5)).max() < 1e-12

    def test_batch_frames(self):
        rng = stream_generator(8, 0)
        frames = haar_frames_batch(6, 2, 100, rng)
        grams = np.einsum("bij,bik->bjk", frames, frames)
        assert np.abs(grams - np.eye(2)).max() < 1e-12

    def test_rejects_k_gt_n(self):
        with pytest.raises(ValueError):
            haar_frame(2, 3, stream_generator(0, 0))


def _uniform_sphere_moments(points):
    v1 = np.array([p.frame[0, 0] for p in points])
    return (v1**2).mean(), (v1**4).mean()


class TestSampleMu:
    def test_uniform_at_zero_matrix(self):
        # X = 0: weight constant, chain must reproduce uniform moments
        n = 8
        cfg = MarkovChainConfig(
            steps=60_000, burn_in=10_000, proposal_scale=0.8, target="mu",
            params={"X": np.zeros((n, n)), "u": 0.0, "t": 1.0}, thin=5, seed=21,
        )
        res = sample_mu(cfg)
        m2, m4 = _uniform_sphere_moments(res.points)
        k = len(res.points)
        # exact sphere moments: E v1^2 = 1/n, E v1^4 = 3/(n(n+2))
        se2 = np.sqrt(2.0 / n**2 / k) * 6  # generous autocorrelation slack
        assert abs(m2 - 1.0 / n) < max(3 * se2, 0.012)
        assert abs(m4 - 3.0 / (n * (n + 2))) < 0.01
        # flat target accepts every move
        assert res.acceptance_rate > 0.95

    def test_energy_gap_concentration(self):
        # X = diag(0, 5, 5, ...), u = 0, small t: mass concentrates on +-e1
        n = 6
        x = np.diag([0.0] + [5.0] * (n - 1))
        cfg = MarkovChainConfig(
            steps=30_000, burn_in=5_000, proposal_scale=0.5, target="mu",
            params={"X": x, "u": 0.0, "t": 0.05}, thin=5, seed=22,
        )
        res = sample_mu(cfg)
        v1sq = np.mean([p.frame[0, 0] ** 2 for p in res.points])
        assert v1sq > 0.9

    def test_quadratic_form_concentration_oracle(self):
        # long-chain statistic E[v^T H_u v]: exact center from the sphere
        # duality; the asymptotic center t <H_u^2> is approached from it
        from realbulk.dualities import mu_quadratic_mean
        from realbulk.resolvents import solve_eta

        rng = np.random.default_rng(23)
        n = 16
        x = rng.standard_normal((n, n)) / np.sqrt(n)
        t = 0.4
        sol = solve_eta(x, 0.0, t, n)
        cache = ResolventCache(x)
        h = cache.h_matrix(0.0, sol.eta).real
        cfg = MarkovChainConfig(
            steps=120_000, burn_in=20_000, proposal_scale=0.3, target="mu",
            params={"X": x, "u": 0.0, "t": t}, thin=10, seed=23,
        )
        res = sample_mu(cfg)
        stats = np.array([float(p.frame[:, 0] @ h @ p.frame[:, 0]) for p in res.points])
        exact = mu_quadratic_mean(x, 0.0, t, n, h)
        nb = 20
        batches = stats[: len(stats) // nb * nb].reshape(nb, -1).mean(axis=1)
        se = batches.std(ddof=1) / np.sqrt(nb)
        assert abs(stats.mean() - exact) < 3 * se
        # asymptotic center agrees to the Lemma-scale accuracy
        asym = t * cache.trace_H2(0.0, sol.eta)
        assert abs(exact / asym - 1.0) < 3 * np.log(n) / np.sqrt(n * t**2)


class TestSampleNu:
    def test_uniform_at_zero_matrix(self):
        n = 8
        cfg = MarkovChainConfig(
            steps=80_000, burn_in=10_000, proposal_scale=0.8, target="nu",
            params={"X": np.zeros((n, n)), "z": 0.0j, "delta": 0.0, "t": 1.0},
            thin=5, seed=31,
        )
        res = sample_nu(cfg)
        v11 = np.array([p.frame[0, 0] for p in res.points])
        se = max(np.sqrt(2.0 / n**2 / len(v11)) * 6, 0.012)
        assert abs((v11**2).mean() - 1.0 / n) < se
        # columns stay orthonormal along the chain
        g = res.points[-1].frame.T @ res.points[-1].frame
        assert np.abs(g - np.eye(2)).max() < 1e-10

    def test_z_block_solves_constraints(self):
        from realbulk.ensembles import _z_block

        x, b, c = _z_block(0.0 + 1.0j, 1.0)
        assert np.isclose(b, (np.sqrt(5) + 1) / 2)
        assert np.isclose(c, (np.sqrt(5) - 1) / 2)
        assert b >= c and np.isclose(b - c, 1.0) and np.isclose(b * c, 1.0)

    def test_diagnostic_error_when_untunable(self):
        # burn-in too short to tune a hopeless scale on a stiff target
        n = 12
        rng = np.random.default_rng(5)
        x = rng.standard_normal((n, n)) / np.sqrt(n)
        cfg = MarkovChainConfig(
            steps=3_000, burn_in=100, proposal_scale=2000.0, target="nu",
            params={"X": x, "z": 0.2 + 0.1j, "delta": 0.1, "t": 0.002},
            thin=5, seed=32,
        )
        with pytest.raises(McmcDiagnosticError):
            sample_nu(cfg)


class TestKernelParity:
    def test_mu_chain_paths_bitwise_identical(self):
        from realbulk import _kernels

        rng = np.random.default_rng(77)
        n, steps = 6, 400
        a = rng.standard_normal((n, n))
        a = a.T @ a
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        tangent = rng.standard_normal((steps, n))
        angles = rng.standard_normal(steps)
        logu = np.log(rng.uniform(size=steps))
        adapt = np.arange(steps) < 100
        draws1 = np.empty((300, n))
        draws2 = np.empty((300, n))
        r1 = _kernels.mu_chain(a, v.copy(), 3.0, 0.5, tangent.copy(), angles, logu,
                               adapt, draws1, 1)
        r2 = _kernels.mu_chain_py(a, v.copy(), 3.0, 0.5, tangent.copy(), angles, logu,
                                  adapt, draws2, 1)
        assert r1 == r2
        assert np.array_equal(draws1, draws2)

    def test_pfaffian_paths_agree(self):
        # complex multiply/divide rounds differently under LLVM, so the two
        # paths agree to ULP level rather than bitwise
        from realbulk import _kernels

        rng = np.random.default_rng(78)
        a = rng.standard_normal((3, 8, 8)) + 1j * rng.standard_normal((3, 8, 8))
        mats = a - np.transpose(a, (0, 2, 1))
        v1 = _kernels.pfaffian_batch(mats.copy())
        v2 = _kernels.pfaffian_batch_py(mats.copy())
        assert np.allclose(v1, v2, rtol=1e-12, atol=0)
