import numpy as np
import pytest
import scipy.special

from realbulk import dualities as du
from realbulk.ensembles import stream_generator
from realbulk.linalg import ResolventCache, pfaffian
from realbulk.resolvents import solve_eta


def _ginoe(n, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, n)) / np.sqrt(n)


class TestOscillatoryIntegrals:
    def test_1d_exact_equal_weights(self):
        # int e^{i w p} (1 + i p/a)^{-n/2} dp = 2 pi a (wa)^{n/2-1} e^{-wa} / Gamma(n/2)
        for n, a, w in [(6, 0.7, 3.0), (9, 1.3, 2.0), (4, 2.0, 5.0)]:
            got, err = du._osc_integral_1d(np.full(n, a), w)
            want = 2 * np.pi * a * (w * a) ** (n / 2 - 1) * np.exp(-w * a)
            want /= scipy.special.gamma(n / 2)
            assert abs(got - want) < 1e-8 * abs(want) + 1e-12

    def test_sym2_exact_equal_weights(self):
        # Ingham-Siegel value for A = a * identity
        n, a, w = 5, 0.8, 2.5
        j = du._osc_integral_sym2(a * np.eye(2 * n), w, du.QuadratureSpec(nodes=40))
        want = (
            a**3
            * 4
            * np.pi**2.5
            / (scipy.special.gamma(n / 2) * scipy.special.gamma((n - 1) / 2))
            * (w * a) ** (n - 3)
            * np.exp(-2 * w * a)
        )
        assert abs(j - want) < 1e-6 * abs(want)


class TestKn:
    def test_x_zero_closed_form(self):
        n, t = 8, 0.7
        x = np.zeros((n, n))
        got = du.compute_Kn(x, 0.0, t)
        want = (
            t * 2 * np.pi * (n / 2) ** (n / 2 - 1) * np.exp(-n / 2)
            / scipy.special.gamma(n / 2)
        )
        assert abs(got - want) < 1e-8 * want

    def test_matches_sphere_mc(self):
        x = _ginoe(8, 31)
        got = du.compute_Kn(x, 0.2, 0.5)
        mc = du.kn_direct_mc(x, 0.2, 0.5, samples=1_000_000, seed=5)
        assert abs(got - mc.value) < 3 * mc.stderr
        assert mc.stderr < 0.05 * abs(mc.value)

    def test_far_u_envelope(self):
        # K_n <= exp(-N u^2 / (100 t)) far outside the spectrum
        n, t = 12, 0.5
        x = _ginoe(n, 32)
        norm = np.linalg.norm(x, 2)
        u = 5.0 * norm
        bound = du.kn_log_upper_bound(x, u, t)
        assert bound <= -n * u**2 / (100.0 * t)
        val = du.compute_Kn(x, u, t)
        assert abs(val) <= np.exp(-n * u**2 / (100.0 * t)) + 1e-8

    def test_kduality_moment_exact_vs_mc(self):
        # E_mu[exp(v^T M v)] from the duality vs direct sphere MC at small n
        n, t, u = 7, 0.6, 0.1
        x = _ginoe(n, 33)
        rng = np.random.default_rng(34)
        m = rng.standard_normal((n, n))
        m = 0.1 * (m + m.T)
        rhs = du.kduality_rhs(x, u, t, m_mat=m)
        # brute-force oracle: self-normalised weights on uniform sphere draws
        g = stream_generator(77, 0).standard_normal((400_000, n))
        g /= np.linalg.norm(g, axis=1)[:, None]
        xu = x - u * np.eye(n)
        w = np.exp(-n / (2 * t) * np.einsum("ij,ij->i", g @ xu.T, g @ xu.T))
        f = np.exp(np.einsum("ij,jk,ik->i", g, m, g))
        est = np.sum(w * f) / np.sum(w)
        ess = np.sum(w) ** 2 / np.sum(w**2)
        se = np.sqrt(np.sum(w**2 * (f - est) ** 2)) / np.sum(w) * np.sqrt(1 + 1)
        assert ess > 500
        assert abs(rhs - est) < 4 * se


class TestLn:
    def test_matches_stiefel_mc(self):
        n, t = 6, 0.5
        x = _ginoe(n, 41)
        z, delta = 0.3 + 0.25j, 0.3
        got = du.compute_Ln(x, z, delta, t, quad=du.QuadratureSpec(nodes=40))
        mc = du.ln_direct_mc(x, z, delta, t, samples=1_000_000, seed=6)
        assert abs(got - mc.value) < 3 * mc.stderr
        assert mc.stderr < 0.05 * abs(mc.value)

    def test_near_axis_eta_choice_matches_mc(self):
        n, t = 6, 0.5
        x = _ginoe(n, 42)
        z, delta = 0.2 + 0.05j, 0.2  # y below log N / sqrt N: near-axis branch
        got = du.compute_Ln(x, z, delta, t, quad=du.QuadratureSpec(nodes=40))
        mc = du.ln_direct_mc(x, z, delta, t, samples=600_000, seed=7)
        assert abs(got - mc.value) < 3 * mc.stderr

    def test_lduality_internal(self):
        # E_nu[exp(vec^T B vec)] equal under both eta conventions
        n, t = 6, 0.5
        x = _ginoe(n, 43)
        z, delta = 0.25 + 0.3j, 0.2
        rng = np.random.default_rng(44)
        b = rng.standard_normal((2 * n, 2 * n))
        b = 0.05 * (b + b.T)
        eta_z = solve_eta(x, z, t).eta
        v1 = du.lduality_rhs(x, z, delta, t, b_mat=b, eta=eta_z,
                             quad=du.QuadratureSpec(nodes=40))
        v2 = du.lduality_rhs(x, z, delta, t, b_mat=b, eta=0.7 * eta_z,
                             quad=du.QuadratureSpec(nodes=40))
        assert abs(v1 - v2) < 2e-4 * abs(v1)


class TestStiefelDuality:
    def test_constant_function_normalises(self):
        pair = du.stiefel_duality_check(8, 1, np.zeros(8), alpha=1.0, samples=2000)
        assert abs(pair.rhs - 1.0) < 1e-7
        pair2 = du.stiefel_duality_check(6, 2, np.zeros(6), alpha=1.0, samples=2000,
                                         quad=du.QuadratureSpec(nodes=40))
        assert abs(pair2.rhs - 1.0) < 1e-5

    def test_k1_gaussian(self):
        d = np.array([0.3, 0.8, 1.5, 2.0, 0.1, 1.0, 0.6, 1.2])
        pair = du.stiefel_duality_check(8, 1, d, alpha=0.9, samples=400_000, seed=3)
        assert pair.agreement_sigma < 3.0

    def test_k2_gaussian(self):
        d = np.array([0.4, 1.1, 0.2, 0.9, 1.4, 0.7])
        pair = du.stiefel_duality_check(6, 2, d, alpha=0.8, samples=400_000, seed=4,
                                        quad=du.QuadratureSpec(nodes=40))
        assert pair.agreement_sigma < 3.0


class TestFnDuality:
    def test_mean_zero_perturbation_single_det(self):
        # m = 1: E det(X + Y' - lambda) = det(X - lambda) by multilinearity
        x = _ginoe(3, 51)
        lam = [0.4]
        est = du.fn_direct(x, lam, 0.5, samples=60_000, seed=8)
        want = np.linalg.det(x - 0.4 * np.eye(3))
        assert abs(est.value - want) < 3 * est.stderr

    def test_scalar_two_point(self):
        # n = 1, x = 0, lambda = (1, -1): E[(y-1)(y+1)] = tau - 1
        x = np.array([[0.0]])
        est = du.fn_direct(x, [1.0, -1.0], 0.5, samples=50_000, seed=9)
        assert abs(est.value - (-0.5)) < 3 * est.stderr

    def test_scalar_pfaffian_calibration_oracle(self):
        # exact scalar-case algebra: E pf = +0.5, global sign -1 maps to -0.5
        x = np.array([[0.0]])
        raw = du.fn_pfaffian(x, [1.0, -1.0], 0.5, samples=50_000, seed=10,
                             apply_sign=False)
        assert abs(raw.value - 0.5) < 3 * raw.stderr
        assert du.fn_global_sign(2, 1) == -1.0
        signed = du.fn_pfaffian(x, [1.0, -1.0], 0.5, samples=50_000, seed=10)
        assert abs(signed.value - (-0.5)) < 3 * signed.stderr

    def test_sign_parity_in_n(self):
        # the calibrated sign follows (-1)^{n m(m-1)/2}
        assert du.fn_global_sign(2, 1) == -1.0
        assert du.fn_global_sign(2, 2) == 1.0
        assert du.fn_global_sign(4, 2) == 1.0

    def test_m1_pfaffian_constant_in_s(self):
        # m = 1: 1x1 skew is zero, pf M = +- det(X - lambda) with no spread
        x = _ginoe(2, 52)
        est = du.fn_pfaffian(x, [0.3], 0.4, samples=500, seed=11, apply_sign=False)
        assert est.stderr < 1e-12
        assert abs(abs(est.value) - abs(np.linalg.det(x - 0.3 * np.eye(2)))) < 1e-10

    def test_cross_duality_n3_m2(self):
        x = _ginoe(3, 53)
        lam = [0.2, -0.35]
        tau = 0.3
        a = du.fn_direct(x, lam, tau, samples=120_000, seed=12)
        b = du.fn_pfaffian(x, lam, tau, samples=120_000, seed=13)
        sig = abs(a.value - b.value) / np.hypot(a.stderr, b.stderr)
        assert sig < 3.0

    def test_cross_duality_complex_pair(self):
        x = _ginoe(2, 54)
        z = 0.2 + 0.4j
        lam = [z, np.conj(z)]
        a = du.fn_direct(x, lam, 0.25, samples=120_000, seed=14)
        b = du.fn_pfaffian(x, lam, 0.25, samples=120_000, seed=15)
        sig = abs(a.value - b.value) / np.hypot(a.stderr, b.stderr)
        assert sig < 3.0


class TestGroupIntegral:
    def test_m2_closed_form(self):
        # U J U^T = det(U) J in dimension 2, so the average is a constant
        est = du.group_integral_Im([0.0, 1.5], [], samples=4000, seed=16)
        want = (2 * np.pi) ** -0.5 * (0.0 - 1.5) * np.exp(-(1.5**2) / 2)
        assert est.stderr < 1e-12 * max(1.0, abs(want))
        assert abs(est.value - want) < 1e-10

    def test_m2_conjugate_pair(self):
        z = 0.3 + 0.8j
        est = du.group_integral_Im([], [z], samples=4000, seed=17)
        want = (2 * np.pi) ** -0.5 * np.exp(2 * z.imag**2)
        assert abs(est.value - want) < 1e-10

    def test_quadratic_form_identity_per_draw(self):
        rng = np.random.default_rng(18)
        m = 4
        lam = np.array([0.1, -0.4, 0.8, 1.2], dtype=complex)
        j = du._canonical_j(m)
        g = rng.standard_normal((50, m, m)) + 1j * rng.standard_normal((50, m, m))
        q, r = np.linalg.qr(g)
        diag = np.einsum("bii->bi", r)
        u = q * (diag / np.abs(diag))[:, None, :]
        e1 = du.im_exponent(u, lam, j)
        e2 = du.im_exponent_quadratic_form(u, lam, j)
        assert np.abs(e1 - e2).max() < 1e-12 * max(1.0, np.abs(e1).max())

    def test_usp_invariance(self):
        # value unchanged when every draw is right-multiplied by fixed V in USp(4)
        import scipy.linalg as sl

        m = 4
        rng = np.random.default_rng(19)
        half = m // 2
        p = rng.standard_normal((half, half)) + 1j * rng.standard_normal((half, half))
        p = 0.5 * (p - p.conj().T)  # anti-Hermitian
        qq = rng.standard_normal((half, half)) + 1j * rng.standard_normal((half, half))
        qq = 0.5 * (qq + qq.T)  # complex symmetric
        alg = np.block([[p, qq], [-qq.conj(), p.conj()]])
        v = sl.expm(alg)
        j = du._canonical_j(m)
        assert np.abs(v.conj().T @ v - np.eye(m)).max() < 1e-12
        assert np.abs(v.T @ j @ v - j).max() < 1e-12
        lam = np.array([0.2, -0.3, 0.55, 1.0], dtype=complex)
        g = rng.standard_normal((4000, m, m)) + 1j * rng.standard_normal((4000, m, m))
        q, r = np.linalg.qr(g)
        diag = np.einsum("bii->bi", r)
        u = q * (diag / np.abs(diag))[:, None, :]
        a = np.exp(-0.5 * du.im_exponent(u, lam, j).real)
        b = np.exp(-0.5 * du.im_exponent(u @ v, lam, j).real)
        se = np.hypot(a.std(ddof=1), b.std(ddof=1)) / np.sqrt(len(a))
        assert abs(a.mean() - b.mean()) < 3 * se

    def test_decay_in_separation(self):
        vals = []
        for s in (1.0, 2.0, 4.0):
            est = du.group_integral_Im([0.0, s], [], samples=2000, seed=20)
            vals.append(abs(est.value))
        assert vals[0] > vals[1] > vals[2]
        # log-slope against s^2 consistent with exp(-c s^2): strip the
        # Vandermonde factor before fitting
        ss = np.array([1.0, 2.0, 4.0])
        core = np.log(np.array(vals) / ss)
        slope = np.polyfit(ss**2, core, 1)[0]
        assert -0.7 < slope < -0.3


class TestDubovaYang:
    def test_delta_zero_reduces(self):
        x = _ginoe(5, 61)
        assert du.dubova_yang_check(x, 0.3 + 0.4j, 0.0, 0.2) < 1e-12

    def test_seeded_case(self):
        x = _ginoe(5, 62)
        assert du.dubova_yang_check(x, 0.3 + 0.4j, 0.7, 0.2) < 1e-10

    def test_scalar_case(self):
        x = np.array([[0.37]])
        assert du.dubova_yang_check(x, 0.2 + 0.5j, 0.9, 0.3) < 1e-13

    def test_hand_expanded_oracle(self):
        # n = 1: assemble the 4x4 pair matrix explicitly and compare dets
        x = np.array([[0.5]])
        z, delta, eta = 0.1 + 0.6j, 0.4, 0.25
        m = du.pair_matrix(x, z, delta, eta)
        zb = du.z_block(z, delta)
        c = np.kron(np.eye(2), x) - np.kron(zb.T, np.eye(1))
        m_oracle = eta**2 * np.eye(2) + c.T @ c
        assert np.abs(m - m_oracle).max() < 1e-14
        lhs = np.linalg.det(m)
        xz = x[0, 0] - z
        base = eta**2 + abs(xz) ** 2
        h = 1.0 / base
        ht_bar = 1.0 / (eta**2 + abs(x[0, 0] - np.conj(z)) ** 2)
        rhs = base**2 * (1 + eta**2 * delta**2 * h * ht_bar)
        assert abs(lhs - rhs) < 1e-13 * abs(lhs)


class TestSkewJacobian:
    def test_m2_closed_form(self):
        # single pair: E sigma^2 = tau exactly (Rayleigh radial density)
        pair = du.skew_jacobian_check(2, samples=400_000, seed=21, tau=0.8)
        assert abs(pair.rhs - 0.8) < 1e-9
        assert pair.agreement_sigma < 3.0

    def test_m4_sum_sq(self):
        pair = du.skew_jacobian_check(4, samples=300_000, seed=22, tau=1.0)
        assert pair.agreement_sigma < 3.0

    def test_m4_prod_sq_matches_pfaffian_moment(self):
        pair = du.skew_jacobian_check(4, samples=300_000, seed=23, tau=1.0,
                                      g="prod_sq")
        assert pair.agreement_sigma < 3.0
        # third route: E |pf(S)|^2 by direct MC
        rng = stream_generator(24, 6)
        s = du._skew_samples(4, 1.0, 120_000, rng)
        from realbulk.linalg import pfaffian_batch

        pf2 = np.abs(pfaffian_batch(s)) ** 2
        se = pf2.std(ddof=1) / np.sqrt(len(pf2))
        assert abs(pf2.mean() - pair.rhs) < 4 * se
