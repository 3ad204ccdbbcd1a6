"""Empirical correlation estimation from eigenvalue samples, the universal
Gaussian-ensemble predictions (complex-bulk determinantal kernel, real-bulk
group-integral assembly), and statistical comparison.

The real-bulk assembly sums interleaving tuples with weights
epsilon_a (-1)^l (the extra (-1)^l relative to the printed table is forced
by the exact sign-resummation identity, which tests/test_schur.py verifies
realisation by realisation).  Group-integral normalisation constants:
c(2) = 2 pi (derived in closed form from the Gaussian point at unit
perturbation strength) and c(4) = 8 pi^4 (pinned by the exact Pfaffian
pair structure of the integral; see tests).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.special

from .ensembles import stream_generator
from .schur import admissible_tuples
from .dualities import _canonical_j, tilde_delta

__all__ = [
    "CorrelationEstimate",
    "KernelPrediction",
    "ComparisonReport",
    "BinGrid",
    "ginoe_complex_kernel",
    "estimate_correlation",
    "real_bulk_prediction",
    "compare",
    "IM_NORMALISATION",
]

IM_NORMALISATION = {2: 2.0 * np.pi, 4: 8.0 * np.pi**4}


def ginoe_complex_kernel(points):
    """Bulk determinantal kernel det[(1/pi) exp(-(|z_j|^2+|z_k|^2)/2
    + conj(z_j) z_k)] of the complex-ensemble limit."""
    z = np.asarray(points, dtype=complex)
    mod = np.abs(z) ** 2
    mat = np.exp(-0.5 * (mod[:, None] + mod[None, :]) + np.conj(z)[:, None] * z[None, :])
    return float(np.linalg.det(mat / np.pi).real)


@dataclass
class BinGrid:
    """Rectangular bins in rescaled coordinates.

    ``real_edges`` is a list of edge arrays, one per real tuple slot;
    ``complex_edges`` a list of (re_edges, im_edges) pairs per complex slot.
    """

    real_edges: list = field(default_factory=list)
    complex_edges: list = field(default_factory=list)

    @classmethod
    def regular(cls, m_r, m_c, half_width=2.0, side=0.25, im_max=None):
        re = np.arange(-half_width, half_width + side / 2, side)
        out_r = [re.copy() for _ in range(m_r)]
        im_top = half_width if im_max is None else im_max
        im = np.arange(0.0, im_top + side / 2, side)
        out_c = [(re.copy(), im.copy()) for _ in range(m_c)]
        return cls(real_edges=out_r, complex_edges=out_c)

    def shape(self):
        dims = [len(e) - 1 for e in self.real_edges]
        for re, im in self.complex_edges:
            dims.extend([len(re) - 1, len(im) - 1])
        return tuple(dims)

    def volumes(self):
        vol = np.ones(self.shape())
        idx = 0
        widths = []
        for e in self.real_edges:
            widths.append(np.diff(e))
        for re, im in self.complex_edges:
            widths.append(np.diff(re))
            widths.append(np.diff(im))
        for d, w in enumerate(widths):
            sh = [1] * len(widths)
            sh[d] = len(w)
            vol = vol * w.reshape(sh)
        return vol


@dataclass
class CorrelationEstimate:
    m_r: int
    m_c: int
    center: complex
    sigma: float
    ambient_n: int
    bins: BinGrid
    counts_mean: np.ndarray
    density: np.ndarray
    stderr: np.ndarray
    samples: int


def _digitise(vals, edges):
    idx = np.searchsorted(edges, vals, side="right") - 1
    ok = (idx >= 0) & (idx < len(edges) - 1) & (vals < edges[-1])
    return idx, ok


def estimate_correlation(spectra, m_r, m_c, center, sigma, ambient_n, bins=None):
    """Histogram estimator of the rescaled (m_r, m_c) correlation function.

    Eigenvalues are rescaled by sqrt(N sigma) about the centre; ordered
    tuples of distinct eigenvalues (upper-half-plane representatives for
    the complex slots) are counted per rectangular bin, and the density is
    counts / (samples * bin volume).  Tuples leaving the window are
    dropped.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    bins = bins or BinGrid.regular(m_r, m_c)
    scale = np.sqrt(ambient_n * sigma)
    shape = bins.shape()
    total = np.zeros(shape)
    total_sq = np.zeros(shape)
    from itertools import permutations

    for sp in spectra:
        counts = np.zeros(shape)
        us = (sp.real_eigs - np.real(center)) * scale
        zs = (sp.complex_eigs - center) * scale
        u_pool = range(len(us))
        z_pool = range(len(zs))
        for u_tuple in permutations(u_pool, m_r):
            coords_u = []
            ok_all = True
            for slot, i in enumerate(u_tuple):
                idx, ok = _digitise(np.array([us[i]]), bins.real_edges[slot])
                if not ok[0]:
                    ok_all = False
                    break
                coords_u.append(idx[0])
            if not ok_all:
                continue
            for z_tuple in permutations(z_pool, m_c):
                coords = list(coords_u)
                ok_all_z = True
                for slot, k in enumerate(z_tuple):
                    re_e, im_e = bins.complex_edges[slot]
                    i1, ok1 = _digitise(np.array([zs[k].real]), re_e)
                    i2, ok2 = _digitise(np.array([zs[k].imag]), im_e)
                    if not (ok1[0] and ok2[0]):
                        ok_all_z = False
                        break
                    coords.extend([i1[0], i2[0]])
                if ok_all_z:
                    counts[tuple(coords)] += 1.0
        total += counts
        total_sq += counts**2
    s = len(spectra)
    mean = total / s
    var = np.maximum(total_sq / s - mean**2, 0.0)
    vol = bins.volumes()
    density = mean / vol
    stderr = np.sqrt(var / s) / vol
    return CorrelationEstimate(
        m_r=m_r, m_c=m_c, center=center, sigma=sigma, ambient_n=ambient_n,
        bins=bins, counts_mean=mean, density=density, stderr=stderr, samples=s,
    )


# ---------------------------------------------------------------------------
# Real-bulk prediction through the group-integral assembly.


class _HaarExponentPool:
    """Shared Haar draws on U(m): precomputes |W_jk|^2 with W = U J U^T so
    the exponent is a cheap quadratic form in any lambda vector."""

    def __init__(self, m, samples, seed):
        rng = stream_generator(seed, 9)
        j = _canonical_j(m)
        self.m = m
        self.absw2 = np.empty((samples, m, m))
        done = 0
        batch = 4000
        while done < samples:
            cnt = min(batch, samples - done)
            g = rng.standard_normal((cnt, m, m)) + 1j * rng.standard_normal((cnt, m, m))
            q, r = np.linalg.qr(g)
            diag = np.einsum("bii->bi", r)
            u = q * (diag / np.abs(diag))[:, None, :]
            w = u @ j @ np.transpose(u, (0, 2, 1))
            self.absw2[done : done + cnt] = np.abs(w) ** 2
            done += cnt

    def weights(self, lam):
        """exp(-exponent/2) per draw for a (possibly complex) lambda vector."""
        lam = np.asarray(lam, dtype=complex)
        pair = np.einsum("j,k,bjk->b", lam, lam, self.absw2)
        expo = np.sum(lam**2) - pair
        return np.exp(-0.5 * expo.real)


def _im_value_per_draw(pool, u_args, z_args):
    """Per-draw values of the normalised group integral (before averaging).

    The real arguments are sorted ascending: the spin products contribute a
    constant (-1)^(p(p-1)/2) while the change of variables carries |Delta~|,
    and the ascending Vandermonde realises exactly that sign.  (The group
    average itself is symmetric in the arguments.)
    """
    u_args = np.sort(np.asarray(u_args, dtype=float))
    lam = np.concatenate(
        [u_args.astype(complex), np.asarray(z_args, dtype=complex),
         np.conj(np.asarray(z_args, dtype=complex))]
    )
    m = len(lam)
    pref = (2.0 * np.pi) ** (-m * (m - 1) / 4.0) * tilde_delta(u_args, z_args)
    return pref * IM_NORMALISATION[m] * pool.weights(lam)


@dataclass
class KernelPrediction:
    kind: str
    grid: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    mc_samples: int


def _erfc_factor(y):
    return 2.0 * y * scipy.special.erfc(np.sqrt(2.0) * y)


def real_bulk_prediction(m_r, m_c, grid, mc_samples=200_000, seed=0, u_cut=6.0,
                         quad_nodes=24):
    """Universal real-bulk prediction for (m_r, m_c) in {(1,0), (2,0), (0,1)}.

    Sums the admissible interleaving tuples: terms with an odd total number
    of real arguments vanish identically (odd group integrals are zero), so
    no N-parity ever survives; the remaining cells are integrated by
    Gauss-Legendre with the integrand truncated at distance ``u_cut``
    (Gaussian decay), the group integral itself by shared Haar Monte Carlo.
    """
    key = (m_r, m_c)
    if key not in {(1, 0), (2, 0), (0, 1)}:
        raise ValueError("supported (m_r, m_c): (1,0), (2,0), (0,1)")
    grid = np.asarray(grid)
    gl, glw = np.polynomial.legendre.leggauss(quad_nodes)

    tuples = [
        t for t in admissible_tuples(m_r) if (m_r + t.l + 2 * m_c) % 2 == 0
    ]
    # all surviving tuples are N-parity free; the parity-dependent ones
    # carry odd group integrals, which vanish
    assert all(not t.depends_on_n for t in tuples)

    pools = {}
    for t in tuples:
        m = m_r + t.l + 2 * m_c
        if m not in pools:
            pools[m] = _HaarExponentPool(m, mc_samples, seed)

    values = np.empty(len(grid))
    errs = np.empty(len(grid))
    for gi, point in enumerate(grid):
        if key == (0, 1):
            z = complex(point)
            draws = 0.5 * _erfc_factor(z.imag) / np.pi * _im_value_per_draw(
                pools[2], [], [z]
            )
            values[gi] = draws.mean()
            errs[gi] = draws.std(ddof=1) / np.sqrt(len(draws))
            continue
        us = np.atleast_1d(np.asarray(point, dtype=float))
        total = None
        for t in tuples:
            eps = t.coeff * (-1) ** t.l
            m = m_r + t.l + 2 * m_c
            pref = eps / 2.0 ** (m_r + t.l) / np.pi ** (m / 2.0)
            if t.l == 0:
                term = pref * _im_value_per_draw(pools[m], us, [])
            else:
                base = np.sort(us)
                term = 0.0
                # iterated Gauss-Legendre over the interleaving cells
                cells = []
                for aj in t.a:
                    lo = base[aj - 1]
                    hi = base[aj] if aj < m_r else base[-1] + u_cut
                    cells.append((lo, hi))

                def cell_integral(depth, extra):
                    lo, hi = cells[depth]
                    mid, half = (lo + hi) / 2.0, (hi - lo) / 2.0
                    acc = 0.0
                    for node, wgt in zip(gl, glw):
                        up = mid + half * node
                        if depth + 1 == len(cells):
                            lamu = np.concatenate([us, extra, [up]])
                            acc = acc + wgt * half * _im_value_per_draw(
                                pools[m], lamu, []
                            )
                        else:
                            acc = acc + wgt * half * cell_integral(
                                depth + 1, extra + [up]
                            )
                    return acc

                term = pref * cell_integral(0, [])
            total = term if total is None else total + term
        values[gi] = total.mean()
        errs[gi] = total.std(ddof=1) / np.sqrt(len(total))
    kind = "real-bulk-Im-assembly" if key != (0, 1) else "real-bulk-Im-assembly"
    return KernelPrediction(kind=kind, grid=grid, values=values, stderr=errs,
                            mc_samples=mc_samples)


@dataclass
class ComparisonReport:
    z_scores: np.ndarray
    chi_square: float
    dof: int
    max_sigma_deviation: float


def compare(estimate, prediction_values, prediction_stderr=None):
    """Per-bin z-scores of an estimate against prediction values on the
    same grid, with chi-square over the populated bins."""
    est = estimate.density
    pv = np.asarray(prediction_values)
    if pv.shape != est.shape:
        raise ValueError("prediction grid does not match the estimate bins")
    pe = np.zeros_like(pv) if prediction_stderr is None else np.asarray(prediction_stderr)
    err = np.hypot(estimate.stderr, pe)
    populated = estimate.counts_mean > 0
    z = np.zeros_like(est)
    z[populated] = (est[populated] - pv[populated]) / err[populated]
    chi = float(np.sum(z[populated] ** 2))
    dof = int(populated.sum()) - 1
    return ComparisonReport(
        z_scores=z,
        chi_square=chi,
        dof=max(dof, 0),
        max_sigma_deviation=float(np.abs(z).max() if populated.any() else 0.0),
    )
