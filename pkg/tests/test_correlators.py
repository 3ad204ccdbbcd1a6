import numpy as np
import pytest

from realbulk import correlators as co
from realbulk.dualities import group_integral_Im
from realbulk.ensembles import EnsembleSpec, sample_matrix
from realbulk.linalg import SpectrumSplit, real_spectrum


class TestComplexKernel:
    def test_single_point(self):
        assert co.ginoe_complex_kernel([0.3 + 0.2j]) == pytest.approx(1.0 / np.pi)

    def test_repeated_point_vanishes(self):
        assert co.ginoe_complex_kernel([0.5j, 0.5j]) == pytest.approx(0.0, abs=1e-14)

    def test_two_point_formula(self):
        # det = (1 - e^{-|z1-z2|^2}) / pi^2
        z1, z2 = 0.0, 1.0
        want = (1.0 - np.exp(-1.0)) / np.pi**2
        assert co.ginoe_complex_kernel([z1, z2]) == pytest.approx(want)

    def test_permutation_invariance_and_positivity(self):
        rng = np.random.default_rng(1)
        pts = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        base = co.ginoe_complex_kernel(pts)
        assert base >= -1e-12
        perm = co.ginoe_complex_kernel(pts[[2, 0, 1]])
        assert base == pytest.approx(perm)


class TestImNormalisation:
    def test_c4_matches_pfaffian_structure(self):
        # the m = 4 group integral has exact Pfaffian pair structure with
        # kernel c(2) Ihat_2; the constant ratio pins c(4) = 8 pi^4
        def k2(x, y):
            return np.sqrt(2 * np.pi) * (x - y) * np.exp(-((x - y) ** 2) / 2)

        for lam, seed in [
            (np.array([0.0, 0.7, 1.5, 2.3]), 5),
            (np.array([-1.0, -0.2, 0.5, 1.1]), 6),
        ]:
            est = group_integral_Im(lam, [], samples=400_000, seed=seed)
            a = np.zeros((4, 4))
            for i in range(4):
                for j in range(4):
                    if i != j:
                        a[i, j] = k2(lam[i], lam[j])
            pf = a[0, 1] * a[2, 3] - a[0, 2] * a[1, 3] + a[0, 3] * a[1, 2]
            got = co.IM_NORMALISATION[4] * est.value
            se = co.IM_NORMALISATION[4] * est.stderr
            assert abs(got - pf) < 4 * se


class TestEstimator:
    def test_single_known_spectrum(self):
        # one sample, one eigenvalue in the centre bin
        sp = SpectrumSplit(real_eigs=np.array([0.05]), complex_eigs=np.array([]), n=1)
        bins = co.BinGrid(real_edges=[np.array([-1.0, 0.0, 1.0, 2.0])])
        n_amb, sigma = 4, 1.0
        est = co.estimate_correlation([sp], 1, 0, 0.0, sigma, n_amb, bins)
        # rescaled coordinate 0.05 * 2 = 0.1 lands in [0, 1)
        assert est.counts_mean[1] == 1.0
        assert est.density[1] == pytest.approx(1.0)
        assert est.density[0] == 0.0 and est.stderr[0] == 0.0

    def test_window_drop(self):
        sp = SpectrumSplit(real_eigs=np.array([5.0]), complex_eigs=np.array([]), n=1)
        bins = co.BinGrid(real_edges=[np.array([-1.0, 1.0])])
        est = co.estimate_correlation([sp], 1, 0, 0.0, 1.0, 1, bins)
        assert est.counts_mean.sum() == 0.0

    def test_ordered_pairs_counted_twice(self):
        sp = SpectrumSplit(
            real_eigs=np.array([-0.1, 0.1]), complex_eigs=np.array([]), n=2
        )
        bins = co.BinGrid.regular(2, 0, half_width=1.0, side=1.0)
        est = co.estimate_correlation([sp], 2, 0, 0.0, 1.0, 1, bins)
        assert est.counts_mean.sum() == pytest.approx(2.0)  # both orders

    def test_scale_reparametrisation_consistency(self):
        # unscaled density recovered from two different sigma bookkeepings
        spec = EnsembleSpec("ginoe", 64, seed=3)
        spectra = [real_spectrum(sample_matrix(spec, s)) for s in range(200)]
        n_amb = 64
        e1 = co.estimate_correlation(
            spectra, 1, 0, 0.0, 1.0, n_amb,
            co.BinGrid(real_edges=[np.array([-0.5, 0.5])]),
        )
        e2 = co.estimate_correlation(
            spectra, 1, 0, 0.0, 4.0, n_amb,
            co.BinGrid(real_edges=[np.array([-1.0, 1.0])]),
        )
        d1 = e1.density[0] * np.sqrt(n_amb * 1.0)
        d2 = e2.density[0] * np.sqrt(n_amb * 4.0)
        se = np.hypot(e1.stderr[0] * np.sqrt(n_amb), e2.stderr[0] * 2 * np.sqrt(n_amb))
        assert abs(d1 - d2) <= 1e-12 + 0 * se  # same counts, pure bookkeeping

    def test_conjugate_pair_bookkeeping(self):
        # counting upper-half representatives vs full-plane doubling
        spec = EnsembleSpec("ginoe", 48, seed=4)
        spectra = [real_spectrum(sample_matrix(spec, s)) for s in range(100)]
        bins = co.BinGrid(
            real_edges=[], complex_edges=[(np.array([-1.0, 1.0]), np.array([0.0, 2.0]))]
        )
        est = co.estimate_correlation(spectra, 0, 1, 0.4 + 0.0j, 1.0, 48, bins)
        count_up = est.counts_mean[0, 0]
        # full-plane count over +-y windows equals twice the upper count
        full = 0.0
        scale = np.sqrt(48.0)
        for sp in spectra:
            for z in np.concatenate([sp.complex_eigs, sp.complex_eigs.conj()]):
                w = (z - 0.4) * scale
                if -1 <= w.real < 1 and 0 < abs(w.imag) < 2:
                    full += 1
        assert full / len(spectra) == pytest.approx(2.0 * count_up)


class TestRealBulkPrediction:
    def test_one_point_flat_and_classical(self):
        pred = co.real_bulk_prediction(1, 0, np.array([-1.0, 0.0, 1.5]),
                                       mc_samples=4000, seed=5)
        # m = 2 group integral is exact (constant integrand): stderr ~ 0
        assert np.all(pred.stderr < 1e-12)
        assert np.allclose(pred.values, 1.0 / np.sqrt(2.0 * np.pi), rtol=1e-10)

    def test_complex_profile_shape_and_limit(self):
        ys = np.array([0.2, 0.5, 1.0, 2.0, 4.0])
        pred = co.real_bulk_prediction(0, 1, 0.3 + 1j * ys, mc_samples=4000, seed=6)
        want = np.sqrt(2.0 / np.pi) * ys * np.exp(2 * ys**2) * scipy_erfc(ys)
        assert np.allclose(pred.values, want, rtol=1e-9)
        # large-y limit is the complex-bulk kernel value 1/pi, approached
        # with the O(1/y^2) erfc correction
        far = co.real_bulk_prediction(0, 1, np.array([0.0 + 8.0j]), mc_samples=2000)
        assert abs(far.values[0] - 1.0 / np.pi) < 5e-3 / np.pi
        nearer = co.real_bulk_prediction(0, 1, np.array([0.0 + 4.0j]), mc_samples=2000)
        assert abs(far.values[0] - 1.0 / np.pi) < abs(nearer.values[0] - 1.0 / np.pi)

    def test_two_point_limits(self):
        # vanishes at coincidence, factorises at large separation
        rs = np.array([0.05, 1.0, 2.2])
        grid = np.array([(-r / 2, r / 2) for r in rs])
        pred = co.real_bulk_prediction(2, 0, grid, mc_samples=150_000, seed=7)
        flat = 1.0 / (2.0 * np.pi)
        assert pred.values[0] < 0.15 * flat
        assert pred.values[-1] == pytest.approx(flat, rel=0.15)
        assert np.all(np.diff(pred.values) > 0)

    def test_unsupported(self):
        with pytest.raises(ValueError):
            co.real_bulk_prediction(3, 1, np.array([0.0]))


def scipy_erfc(y):
    import scipy.special

    return scipy.special.erfc(np.sqrt(2.0) * y)


class TestCompare:
    def _fake_estimate(self):
        bins = co.BinGrid(real_edges=[np.linspace(-1, 1, 5)])
        est = co.CorrelationEstimate(
            m_r=1, m_c=0, center=0.0, sigma=1.0, ambient_n=10, bins=bins,
            counts_mean=np.array([1.0, 2.0, 2.0, 1.0]),
            density=np.array([0.5, 1.0, 1.0, 0.5]),
            stderr=np.array([0.1, 0.1, 0.1, 0.1]),
            samples=10,
        )
        return est

    def test_identical_zero_scores(self):
        est = self._fake_estimate()
        rep = co.compare(est, est.density.copy())
        assert np.all(rep.z_scores == 0.0)
        assert rep.max_sigma_deviation == 0.0
        assert rep.dof == 3

    def test_shifted_bin(self):
        est = self._fake_estimate()
        pred = est.density.copy()
        pred[1] -= 1.0  # ten sigma shift
        rep = co.compare(est, pred)
        assert rep.max_sigma_deviation == pytest.approx(10.0)

    def test_grid_mismatch(self):
        est = self._fake_estimate()
        with pytest.raises(ValueError):
            co.compare(est, np.zeros(7))


class TestEndToEndSmoke:
    def test_complex_bulk_density_small(self):
        # small version of the universality endpoint: GinOE complex density
        spec = EnsembleSpec("ginoe", 64, seed=8)
        spectra = [real_spectrum(sample_matrix(spec, s)) for s in range(400)]
        bins = co.BinGrid(
            real_edges=[],
            complex_edges=[(np.array([-1.2, 1.2]), np.array([-1.2, 1.2]) + 1.2 + 0.0)],
        )
        # centre high above the real axis so the window stays in the bulk
        est = co.estimate_correlation(spectra, 0, 1, 0.1 + 0.45j, 1.0, 64, bins)
        want = 1.0 / np.pi
        assert abs(est.density[0, 0] - want) < 4 * est.stderr[0, 0]
