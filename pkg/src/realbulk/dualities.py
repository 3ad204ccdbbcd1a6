"""Integral dualities: sphere/Stiefel normalisation constants K_n and L_n
via low-dimensional quadrature, exact moment formulas for the Gaussian
manifold measures, Pfaffian representations of determinant products, the
unitary group integral behind the real-bulk kernel, the determinant
identity for the pair matrix M_z(eta), and the skew-SVD Jacobian check.

All Monte Carlo averages use probability Haar measures; the unnormalised
surface measures in the definitions of K_n and L_n are reconciled by
explicit volume constants Vol(S^{n-1}) = 2 pi^{n/2} / Gamma(n/2) and
Vol(O(n,2)) = Vol(S^{n-1}) Vol(S^{n-2}).
"""

from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.special

from .linalg import ResolventCache, pfaffian_batch
from .ensembles import haar_frames_batch, stream_generator
from .resolvents import solve_eta

__all__ = [
    "McEstimate",
    "QuadratureSpec",
    "DualityPair",
    "QuadratureError",
    "sphere_volume",
    "stiefel_volume",
    "compute_Kn",
    "kn_direct_mc",
    "kn_log_upper_bound",
    "compute_Ln",
    "ln_direct_mc",
    "kduality_rhs",
    "lduality_rhs",
    "mu_quadratic_mean",
    "nu_quadratic_mean",
    "stiefel_duality_check",
    "fn_direct",
    "fn_pfaffian",
    "fn_global_sign",
    "group_integral_Im",
    "im_exponent",
    "im_exponent_quadratic_form",
    "tilde_delta",
    "dubova_yang_check",
    "skew_jacobian_check",
    "pair_matrix",
    "z_block",
]


class QuadratureError(RuntimeError):
    pass


@dataclass
class McEstimate:
    value: complex
    stderr: float
    samples: int
    seed: int

    def __post_init__(self):
        if self.stderr < 0 or not np.isfinite(self.stderr):
            raise ValueError("stderr must be finite and nonnegative")


@dataclass
class QuadratureSpec:
    dims: int = 1
    rule: str = "adaptive-gauss-kronrod-1d"  # or "tensor-gauss-3d"
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    truncation_radius: float = 8.0
    nodes: int = 32

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class DualityPair:
    lhs: McEstimate
    rhs: object
    agreement_sigma: float


def _combined_sigma(lhs, rhs_value, rhs_err=0.0):
    err = np.hypot(lhs.stderr, rhs_err)
    if err == 0.0:
        return 0.0 if lhs.value == rhs_value else np.inf
    return float(abs(lhs.value - rhs_value) / err)


def sphere_volume(n):
    """Surface volume of S^{n-1}."""
    return 2.0 * np.pi ** (n / 2.0) / scipy.special.gamma(n / 2.0)


def stiefel_volume(n, k):
    """Surface volume of O(n,k), the product of sphere volumes."""
    return float(np.prod([sphere_volume(n - i) for i in range(k)]))


# ---------------------------------------------------------------------------
# Oscillatory integrals shared by the dualities.


def _osc_integral_1d(a, omega, quad=None):
    """I = int e^{i omega p} prod_j (1 + i p / a_j)^{-1/2} dp over the real
    line, for a_j > 0, via Fourier-weighted adaptive quadrature on [0, inf).
    """
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise QuadratureError("quadratic form is not positive definite")

    def amp(p):
        return np.exp(-0.5 * np.sum(np.log1p(1j * p / a)))

    def re(p):
        return amp(p).real

    def im(p):
        return amp(p).imag

    out = []
    for fn, w in ((re, "cos"), (im, "sin")):
        res = scipy.integrate.quad(
            fn, 0, np.inf, weight=w, wvar=omega, limit=400, limlst=200,
            full_output=1,
        )
        if len(res) > 3 and isinstance(res[-1], str):
            raise QuadratureError(f"oscillatory quadrature failed: {res[-1]}")
        out.append(res[:2])
    (c, cerr), (s, serr) = out
    return 2.0 * (c - s), 2.0 * (cerr + serr)


def _sym2_kron_mats():
    e11 = np.array([[1.0, 0.0], [0.0, 0.0]])
    e22 = np.array([[0.0, 0.0], [0.0, 1.0]])
    e12 = np.array([[0.0, 1.0], [1.0, 0.0]])
    return e11, e22, e12


def _pencil_amplitude(a_mat):
    """Return (amp, widths): amp maps stacked (p11, p22, p12) points to
    det^{-1/2}(1 + i (P kron 1_n) A^{-1}) via the symmetric pencil
    eigenvalues (every factor stays right of the imaginary axis), and
    widths are the Gaussian-regime decay scales of the three coordinates."""
    a_mat = np.asarray(a_mat)
    n2 = a_mat.shape[0]
    n = n2 // 2
    lo = np.linalg.cholesky(a_mat)
    linv = scipy.linalg.solve_triangular(lo, np.eye(n2), lower=True)
    e11, e22, e12 = _sym2_kron_mats()
    mats = [
        np.ascontiguousarray(linv @ np.kron(e, np.eye(n)) @ linv.T)
        for e in (e11, e22, e12)
    ]
    widths = []
    for s in mats:
        theta = 0.5 * np.sum(s * s)
        widths.append(1.0 / np.sqrt(max(theta, 1e-300)))

    def log_amp(pts):
        pts = np.atleast_2d(pts)
        k = (
            pts[:, 0, None, None] * mats[0]
            + pts[:, 1, None, None] * mats[1]
            + pts[:, 2, None, None] * mats[2]
        )
        mu = np.linalg.eigvalsh(k)
        return -0.5 * np.sum(np.log1p(1j * mu), axis=1)

    def amp(pts):
        return np.exp(log_amp(pts))

    amp.log = log_amp
    return amp, widths


def _osc_integral_sym2_tensor(amp, widths, omega, quad, coarse=13):
    """Tensor Gauss-Legendre over (p11, p22, p12); valid when the envelope
    at the truncation boundary is negligible (large matrix dimension).

    Only the phase e^{i omega tr P} oscillates; the log-amplitude varies on
    the slow width scale, so it is evaluated exactly on a coarse uniform
    grid and cubic-interpolated onto the phase-resolving fine grid."""
    from scipy.interpolate import RegularGridInterpolator

    r = quad.truncation_radius
    phase_range = omega * 2.0 * r * max(widths[0], widths[1])
    n_nodes = max(quad.nodes, int(np.ceil(3.0 * phase_range / np.pi)) + 8)

    xs = np.linspace(-1.0, 1.0, coarse)
    scale = np.array([r * w for w in widths])
    g1, g2, g3 = np.meshgrid(xs, xs, xs, indexing="ij")
    pts = np.column_stack([g1.ravel() * scale[0], g2.ravel() * scale[1],
                           g3.ravel() * scale[2]])
    logv = amp.log(pts).reshape(coarse, coarse, coarse)
    itp_re = RegularGridInterpolator((xs, xs, xs), logv.real, method="cubic")
    itp_im = RegularGridInterpolator((xs, xs, xs), logv.imag, method="cubic")

    nodes, wts = np.polynomial.legendre.leggauss(n_nodes)
    f1, f2, f3 = np.meshgrid(nodes, nodes, nodes, indexing="ij")
    fine = np.column_stack([f1.ravel(), f2.ravel(), f3.ravel()])
    vals = np.exp(itp_re(fine) + 1j * itp_im(fine))
    phase = np.exp(1j * omega * (fine[:, 0] * scale[0] + fine[:, 1] * scale[1]))
    w1, w2, w3 = np.meshgrid(wts, wts, wts, indexing="ij")
    weight = (w1 * w2 * w3).ravel() * scale.prod()
    return float(np.sum(weight * phase * vals).real)


def _osc_integral_sym2_spectral(a_mat, omega, quad):
    """Exact-tail evaluation in spectral coordinates of P.

    With P = R(theta) diag(q1, q2) R(theta)^T the Lebesgue measure is
    (1/2)|q1 - q2| dq1 dq2 dtheta over theta in [0, pi), and the phase
    omega tr P = omega (q1 + q2) lives in sigma = (q1 + q2)/sqrt(2) alone.
    The delta = (q1 - q2)/sqrt(2) integral decays algebraically and is done
    with tan-mapped Gauss-Legendre; sigma uses Fourier-weighted adaptive
    quadrature, which sums the oscillatory tail exactly.
    """
    a_mat = np.asarray(a_mat)
    n2 = a_mat.shape[0]
    n = n2 // 2
    lo = np.linalg.cholesky(a_mat)
    linv = scipy.linalg.solve_triangular(lo, np.eye(n2), lower=True)
    s0 = linv @ linv.T  # B1 + B2, theta-independent
    eye_n = np.eye(n)
    n_th = 16
    thetas = (np.arange(n_th) + 0.5) * np.pi / n_th
    th_w = np.full(n_th, np.pi / n_th)
    sdiffs = []
    for th in thetas:
        u1 = np.array([np.cos(th), np.sin(th)])
        u2 = np.array([-np.sin(th), np.cos(th)])
        b1 = linv @ np.kron(np.outer(u1, u1), eye_n) @ linv.T
        b2 = linv @ np.kron(np.outer(u2, u2), eye_n) @ linv.T
        sdiffs.append(np.ascontiguousarray(b1 - b2))
    sdiffs = np.array(sdiffs)
    scale = 1.0 / np.sqrt(max(np.sum(s0 * s0) / 4.0, 1e-300))
    n_gl = max(24, quad.nodes // 2)
    gl, glw = np.polynomial.legendre.leggauss(n_gl)
    sq2 = np.sqrt(2.0)

    def _delta_grid(sig):
        """Panels resolving both the core at delta = 0 and the rank-drop
        bumps at delta = +-sigma, with a tan-mapped outer tail."""
        asig = abs(sig)
        w = 4.0 * scale
        cuts = sorted({0.0, max(asig - w, 0.0), asig + w})
        nodes = []
        wts = []
        for aa, bb in zip(cuts[:-1], cuts[1:]):
            if bb - aa < 1e-12:
                continue
            mid, half = (aa + bb) / 2.0, (bb - aa) / 2.0
            nodes.append(mid + half * gl)
            wts.append(half * glw)
        # tail beyond the last cut, tan-mapped to infinity
        t0 = cuts[-1]
        ang = (gl + 1.0) * (np.pi / 4.0)
        nodes.append(t0 + 2.0 * scale * np.tan(ang))
        wts.append(glw * (np.pi / 4.0) * 2.0 * scale / np.cos(ang) ** 2)
        pos = np.concatenate(nodes)
        ws = np.concatenate(wts)
        return np.concatenate([-pos[::-1], pos]), np.concatenate([ws[::-1], ws])

    def v_of_sigma(sig):
        deltas, jac = _delta_grid(sig)
        kdirs = (deltas[None, :, None, None] / sq2) * sdiffs[:, None, :, :]
        kdirs = kdirs.reshape(-1, n2, n2)
        wflat = (np.outer(th_w, jac * sq2 * np.abs(deltas))).ravel() * 0.5
        k = (sig / sq2) * s0
        mu = np.linalg.eigvalsh(k[None, :, :] + kdirs)
        vals = np.exp(-0.5 * np.sum(np.log1p(1j * mu), axis=1))
        return np.dot(wflat, vals)

    out = []
    for part, w in (
        (lambda s: v_of_sigma(s).real, "cos"),
        (lambda s: v_of_sigma(s).imag, "sin"),
    ):
        res = scipy.integrate.quad(
            part, 0, np.inf, weight=w, wvar=omega * sq2, limit=300, limlst=100,
            full_output=1,
        )
        if len(res) > 3 and isinstance(res[3], str) and "roundoff" not in res[3]:
            raise QuadratureError(f"oscillatory quadrature failed: {res[3]}")
        out.append(res[0])
    return 2.0 * (out[0] - out[1])


def _osc_integral_sym2(a_mat, omega, quad=None):
    """J = int_{Sym_2} e^{i omega tr P} det^{-1/2}(1 + i (P kron 1_n) A^{-1}) dP
    for symmetric positive definite A (2n x 2n).  Small dimensions use the
    exact-tail spectral route; large ones the Gaussian-truncated tensor rule
    (there the envelope at the cut is negligible)."""
    quad = quad or QuadratureSpec(dims=3, rule="tensor-gauss-3d")
    if np.asarray(a_mat).shape[0] <= 48:
        return _osc_integral_sym2_spectral(a_mat, omega, quad)
    amp, widths = _pencil_amplitude(a_mat)
    return _osc_integral_sym2_tensor(amp, widths, omega, quad)


# ---------------------------------------------------------------------------
# K_n: sphere normalisation.


def compute_Kn(x, u, t, ambient_n=None, quad=None, cache=None):
    """K_n(u, X) as the one-dimensional oscillatory integral
    int e^{i N p / 2t} det^{-1/2}(1 + i p H_u) dp over the eigenvalues of
    eta_u^2 + |X_u|^2 (the fixed-point scale eta_u from solve_eta)."""
    c = cache if cache is not None else ResolventCache(x, ambient_n)
    sol = solve_eta(x, u, t, cache=c)
    s = c.singular_values(u)
    a = sol.eta**2 + s**2
    omega = c.ambient_n / (2.0 * t)
    val, err = _osc_integral_1d(a, omega, quad)
    return float(val)


def kn_direct_mc(x, u, t, ambient_n=None, samples=100_000, seed=0, cache=None):
    """Sphere Monte Carlo oracle for K_n, carrying the explicit surface
    volume Vol(S^{n-1})."""
    c = cache if cache is not None else ResolventCache(x, ambient_n)
    n = c.n
    bign = c.ambient_n
    sol = solve_eta(x, u, t, cache=c)
    s = c.singular_values(u)
    log_psi = -bign / (2.0 * t) * sol.eta**2 + 0.5 * np.sum(
        np.log(sol.eta**2 + s**2)
    )
    log_pref = (
        log_psi
        + (n / 2.0 - 1.0) * np.log(bign / (2.0 * np.pi * t))
        + np.log(sphere_volume(n))
    )
    rng = stream_generator(seed, 0)
    xu = np.asarray(x, dtype=float) - u * np.eye(n)
    vals = np.empty(samples)
    chunk = 200_000
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        g = rng.standard_normal((m, n))
        g /= np.linalg.norm(g, axis=1)[:, None]
        e = np.einsum("ij,ij->i", g @ xu.T, g @ xu.T)
        vals[done : done + m] = np.exp(-bign / (2.0 * t) * e + log_pref)
        done += m
    return McEstimate(
        value=float(vals.mean()),
        stderr=float(vals.std(ddof=1) / np.sqrt(samples)),
        samples=samples,
        seed=seed,
    )


def kn_log_upper_bound(x, u, t, ambient_n=None, cache=None):
    """log K_n <= log psi_u + (n/2-1) log(N/2 pi t) + log Vol(S^{n-1})
    - (N/2t) s_min(X_u)^2, from bounding the sphere integrand by its max."""
    c = cache if cache is not None else ResolventCache(x, ambient_n)
    n, bign = c.n, c.ambient_n
    sol = solve_eta(x, u, t, cache=c)
    s = c.singular_values(u)
    log_psi = -bign / (2.0 * t) * sol.eta**2 + 0.5 * np.sum(np.log(sol.eta**2 + s**2))
    return (
        log_psi
        + (n / 2.0 - 1.0) * np.log(bign / (2.0 * np.pi * t))
        + np.log(sphere_volume(n))
        - bign / (2.0 * t) * s.min() ** 2
    )


def kduality_rhs(x, u, t, ambient_n=None, m_mat=None, quad=None, cache=None):
    """Exact E_mu[exp(v^T M v)] through the sphere duality:
    exp(-1/2 sum[log a_j - log d_j]) * I(a) / I(d), where d are the
    eigenvalues of eta_u^2 + |X_u|^2 and a those of the M-shifted form."""
    c = cache if cache is not None else ResolventCache(x, ambient_n)
    bign = c.ambient_n
    sol = solve_eta(x, u, t, cache=c)
    s = c.singular_values(u)
    d = sol.eta**2 + s**2
    omega = bign / (2.0 * t)
    if m_mat is None:
        return 1.0
    u_svd, _, v_svd = c.svd(u)
    base = np.diag(d).astype(float)
    shift = v_svd.conj().T @ m_mat @ v_svd
    a = np.linalg.eigvalsh(base - (2.0 * t / bign) * shift.real)
    if np.any(a <= 0):
        raise QuadratureError("norm condition violated: shifted form not PD")
    i_a, _ = _osc_integral_1d(a, omega, quad)
    i_d, _ = _osc_integral_1d(d, omega, quad)
    log_det_ratio = -0.5 * (np.sum(np.log(a)) - np.sum(np.log(d)))
    return float(np.exp(log_det_ratio) * i_a / i_d)


def mu_quadratic_mean(x, u, t, ambient_n=None, m_mat=None, h=2e-3, cache=None):
    """Exact E_mu[v^T M v] by differentiating the duality in the tilt."""
    lo = kduality_rhs(x, u, t, ambient_n, -h * m_mat, cache=cache)
    hi = kduality_rhs(x, u, t, ambient_n, h * m_mat, cache=cache)
    return (np.log(hi) - np.log(lo)) / (2.0 * h)


# ---------------------------------------------------------------------------
# L_n: O(n,2) normalisation.


def z_block(z, delta):
    """2x2 block [[x, b], [-c, x]] with b - c = delta, b c = y^2, b >= c."""
    x, y = complex(z).real, complex(z).imag
    b = (delta + np.sqrt(delta**2 + 4.0 * y**2)) / 2.0
    c = b - delta
    return np.array([[x, b], [-c, x]])


def pair_matrix(x, z, delta, eta):
    """M_z(eta) = eta^2 + |1_2 kron X - Z^T kron 1_n|^2 (real symmetric)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    zb = z_block(z, delta)
    cmat = np.kron(np.eye(2), x) - np.kron(zb.T, np.eye(n))
    return eta**2 * np.eye(2 * n) + cmat.T @ cmat


def _eta_for_ln(x, z, delta, t, cache):
    """Near/far choice of the reference scale: eta_x on (and near) the real
    axis, eta_delta = 2 y eta_z / sqrt(4 y^2 + delta^2) in the bulk."""
    bign = cache.ambient_n
    y = complex(z).imag
    if y <= np.log(bign) / np.sqrt(bign):
        return solve_eta(x, complex(z).real, t, cache=cache).eta, "near"
    eta_z = solve_eta(x, z, t, cache=cache).eta
    return 2.0 * y * eta_z / np.sqrt(4.0 * y**2 + delta**2), "far"


def compute_Ln(x, z, delta, t, ambient_n=None, quad=None, log=False, cache=None,
               eta=None):
    """L_n(delta, z, X) through the Stiefel duality:
    log L = -(N/t)(eta_z^2 - eta^2) + logdet(eta_z^2 + |X_z|^2)
            - (1/2) logdet M_z(eta) + log J(M_z(eta)),
    with J the 3-d oscillatory P-integral."""
    c = cache if cache is not None else ResolventCache(x, ambient_n)
    bign = c.ambient_n
    if complex(z).imag < 0 or delta < 0:
        raise ValueError("need Im z >= 0 and delta >= 0")
    eta_z = solve_eta(x, z, t, cache=c).eta
    if eta is None:
        eta, _ = _eta_for_ln(x, z, delta, t, c)
    m = pair_matrix(x, z, delta, eta)
    s = c.singular_values(z)
    logdet_base = np.sum(np.log(eta_z**2 + s**2))
    sign, logdet_m = np.linalg.slogdet(m)
    if sign <= 0:
        raise QuadratureError("pair matrix not positive definite")
    j = _osc_integral_sym2(m, bign / (2.0 * t), quad)
    if j <= 0:
        raise QuadratureError(
            f"P-integral returned {j:.3e} <= 0; increase quadrature nodes"
        )
    log_l = (
        -bign / t * (eta_z**2 - eta**2)
        + logdet_base
        - 0.5 * logdet_m
        + np.log(j)
    )
    return float(log_l) if log else float(np.exp(log_l))


def ln_direct_mc(x, z, delta, t, ambient_n=None, samples=100_000, seed=0, cache=None):
    """O(n,2) Haar Monte Carlo oracle for L_n with the explicit Stiefel
    surface volume."""
    c = cache if cache is not None else ResolventCache(x, ambient_n)
    n, bign = c.n, c.ambient_n
    eta_z = solve_eta(x, z, t, cache=c).eta
    s = c.singular_values(z)
    log_psi2 = -bign / t * eta_z**2 + np.sum(np.log(eta_z**2 + s**2))
    log_pref = (
        log_psi2
        + (n - 3.0) * np.log(bign / (2.0 * np.pi * t))
        + np.log(stiefel_volume(n, 2))
    )
    zb = z_block(z, delta)
    xm = np.asarray(x, dtype=float)
    rng = stream_generator(seed, 1)
    vals = np.empty(samples)
    chunk = 100_000
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        frames = haar_frames_batch(n, 2, m, rng)
        resid = np.einsum("ij,bjk->bik", xm, frames) - frames @ zb
        e = np.einsum("bik,bik->b", resid, resid)
        vals[done : done + m] = np.exp(-bign / (2.0 * t) * e + log_pref)
        done += m
    return McEstimate(
        value=float(vals.mean()),
        stderr=float(vals.std(ddof=1) / np.sqrt(samples)),
        samples=samples,
        seed=seed,
    )


def lduality_rhs(x, z, delta, t, ambient_n=None, b_mat=None, eta=None, quad=None,
                 cache=None):
    """Exact E_nu[exp(vec(V)^T B vec(V))] = exp(-1/2 dlogdet) J(A_B)/J(A_0)."""
    c = cache if cache is not None else ResolventCache(x, ambient_n)
    bign = c.ambient_n
    if eta is None:
        eta, _ = _eta_for_ln(x, z, delta, t, c)
    a0 = pair_matrix(x, z, delta, eta)
    if b_mat is None:
        return 1.0
    ab = a0 - (2.0 * t / bign) * np.asarray(b_mat)
    eig = np.linalg.eigvalsh(ab)
    if eig[0] <= 0:
        raise QuadratureError("norm condition violated: shifted pair form not PD")
    omega = bign / (2.0 * t)
    j0 = _osc_integral_sym2(a0, omega, quad)
    jb = _osc_integral_sym2(ab, omega, quad)
    _, ld0 = np.linalg.slogdet(a0)
    _, ldb = np.linalg.slogdet(ab)
    return float(np.exp(-0.5 * (ldb - ld0)) * jb / j0)


def nu_quadratic_mean(x, z, delta, t, ambient_n=None, b_mat=None, h=2e-3,
                      eta=None, quad=None, cache=None):
    """Exact E_nu[vec(V)^T B vec(V)] by differentiating the duality tilt."""
    lo = lduality_rhs(x, z, delta, t, ambient_n, -h * b_mat, eta=eta, quad=quad,
                      cache=cache)
    hi = lduality_rhs(x, z, delta, t, ambient_n, h * b_mat, eta=eta, quad=quad,
                      cache=cache)
    return (np.log(hi) - np.log(lo)) / (2.0 * h)


# ---------------------------------------------------------------------------
# Stiefel duality check for Gaussian-type integrands.


def stiefel_duality_check(n, k, d_diag, alpha=1.0, samples=100_000, seed=0,
                          quad=None):
    """Check int_{O(n,k)} f dHaar (probability) against the symmetric-matrix
    side of the duality for f(V) = exp(-alpha tr(V^T D V)), D diagonal.
    """
    d_diag = np.asarray(d_diag, dtype=float)
    if d_diag.shape != (n,):
        raise ValueError("D must be a length-n diagonal")
    rng = stream_generator(seed, 2)
    frames = haar_frames_batch(n, k, samples, rng)
    en = np.einsum("bik,i,bik->b", frames, d_diag, frames)
    vals = np.exp(-alpha * en)
    lhs = McEstimate(
        value=float(vals.mean()),
        stderr=float(vals.std(ddof=1) / np.sqrt(samples)),
        samples=samples,
        seed=seed,
    )
    # shift A -> A + c is exact on the frame manifold: v^T(A+c)v = v^T A v + c k
    a = alpha * d_diag
    shift = max(0.0, -a.min()) + 1.0
    ash = a + shift
    if k == 1:
        i_num, err = _osc_integral_1d(ash, 1.0, quad)
        pref = np.pi ** (n / 2.0 - 1.0) * np.exp(shift - 0.5 * np.sum(np.log(ash)))
        rhs = pref * i_num / sphere_volume(n)
        rhs_err = pref * err / sphere_volume(n)
    elif k == 2:
        a_big = np.kron(np.eye(2), np.diag(ash))
        j = _osc_integral_sym2(a_big, 1.0, quad)
        pref = np.pi ** (n - 3.0) * np.exp(2.0 * shift - np.sum(np.log(ash)))
        rhs = pref * j / stiefel_volume(n, 2)
        rhs_err = abs(rhs) * 1e-6
    else:
        raise ValueError("k must be 1 or 2")
    return DualityPair(lhs=lhs, rhs=float(rhs), agreement_sigma=_combined_sigma(lhs, rhs, rhs_err))


# ---------------------------------------------------------------------------
# Determinant-product dualities.


def fn_direct(x, lambdas, tau_entry, samples, seed=0):
    """Monte Carlo of E prod_j det(X + Y' - lambda_j) with Y' i.i.d.
    N(0, tau_entry) real entries; determinants accumulated in log form."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    lam = np.asarray(lambdas, dtype=complex)
    rng = stream_generator(seed, 3)
    vals = np.empty(samples, dtype=complex)
    sd = np.sqrt(tau_entry)
    eye = np.eye(n)
    for i in range(samples):
        y = x + sd * rng.standard_normal((n, n))
        tot = 0.0
        sign = 1.0 + 0.0j
        for l in lam:
            sg, ld = np.linalg.slogdet(y - l * eye)
            tot += ld
            sign *= sg
        if tot > 700.0:
            raise OverflowError("determinant product overflows float range")
        vals[i] = sign * np.exp(tot)
    se = np.sqrt(vals.real.var(ddof=1) + vals.imag.var(ddof=1)) / np.sqrt(samples)
    return McEstimate(value=complex(vals.mean()), stderr=float(se), samples=samples,
                      seed=seed)


def _skew_samples(m, tau_entry, count, rng):
    """Complex skew matrices with independent strictly-upper entries of
    mean-square tau_entry."""
    re = rng.standard_normal((count, m, m))
    im = rng.standard_normal((count, m, m))
    g = (re + 1j * im) * np.sqrt(tau_entry / 2.0)
    upper = np.triu(g, k=1)
    return upper - np.transpose(upper, (0, 2, 1))


def _pf_m_lambda(s_batch, x, lam):
    """Assemble M_lambda(S) = [[S kron 1, 1 kron X - lam kron 1],
    [-1 kron X^T + lam kron 1, S* kron 1]] for a batch of skew S."""
    count, m, _ = s_batch.shape
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    top_right = np.kron(np.eye(m), x) - np.kron(np.diag(lam), np.eye(n))
    dim = 2 * m * n
    mats = np.zeros((count, dim, dim), dtype=np.complex128)
    eye_n = np.eye(n)
    for b in range(count):
        mats[b, : m * n, : m * n] = np.kron(s_batch[b], eye_n)
        mats[b, m * n :, m * n :] = np.kron(s_batch[b].conj().T, eye_n)
    mats[:, : m * n, m * n :] = top_right
    mats[:, m * n :, : m * n] = -top_right.T
    return mats


def fn_pfaffian(x, lambdas, tau_entry, samples, seed=0, apply_sign=True):
    """Monte Carlo over complex skew S of pf M_lambda(S), times the global
    sign calibrated against exact desk-scale oracles."""
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lambdas, dtype=complex)
    m = len(lam)
    rng = stream_generator(seed, 4)
    chunk = max(1, min(10_000, int(4e6 // (2 * m * x.shape[0]) ** 2 + 1)))
    vals = np.empty(samples, dtype=complex)
    done = 0
    while done < samples:
        cnt = min(chunk, samples - done)
        s = _skew_samples(m, tau_entry, cnt, rng)
        mats = _pf_m_lambda(s, x, lam)
        vals[done : done + cnt] = pfaffian_batch(mats)
        done += cnt
    sign = fn_global_sign(m, x.shape[0]) if apply_sign else 1.0
    vals *= sign
    se = np.sqrt(vals.real.var(ddof=1) + vals.imag.var(ddof=1)) / np.sqrt(samples)
    return McEstimate(value=complex(vals.mean()), stderr=float(se), samples=samples,
                      seed=seed)


def _exact_det_product_mean(x, lam, tau):
    """E prod_j det(X + Y - lambda_j) for n in {1, 2} by tensor
    Gauss-Hermite quadrature (exact for the polynomial integrand)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    m = len(lam)
    nodes, wts = np.polynomial.hermite_e.hermegauss(m + 4)
    y = nodes * np.sqrt(tau)
    w = wts / np.sqrt(2.0 * np.pi)
    if n == 1:
        vals = np.prod(x[0, 0] + y[:, None] - np.asarray(lam)[None, :], axis=1)
        return np.sum(w * vals)
    if n == 2:
        g = np.meshgrid(y, y, y, y, indexing="ij")
        wg = np.meshgrid(w, w, w, w, indexing="ij")
        weight = wg[0] * wg[1] * wg[2] * wg[3]
        total = np.ones_like(g[0], dtype=complex)
        for l in lam:
            total = total * (
                (x[0, 0] + g[0] - l) * (x[1, 1] + g[3] - l)
                - (x[0, 1] + g[1]) * (x[1, 0] + g[2])
            )
        return np.sum(weight * total)
    raise ValueError("exact oracle supports n in {1, 2}")


_PF_SIGN_CACHE = {}


def fn_global_sign(m, n):
    """Global sign relating E prod det to E pf M_lambda.

    Calibrated once per (m, n mod 2) against the exact n = 1 / n = 2
    oracles; empirically the sign follows (-1)^{n m(m-1)/2}, which is
    recorded here but never assumed.
    """
    key = (m, n % 2)
    if key in _PF_SIGN_CACHE:
        return _PF_SIGN_CACHE[key]
    n_cal = 1 if n % 2 == 1 else 2
    x0 = 0.3 * np.eye(n_cal) + 0.1 * np.arange(n_cal * n_cal).reshape(n_cal, n_cal)
    lam = np.linspace(-1.0, 1.0, m)
    tau = 0.37
    direct = _exact_det_product_mean(x0, lam, tau)
    pf = fn_pfaffian(x0, lam, tau, samples=60_000, seed=101, apply_sign=False)
    ratio = (direct / pf.value).real
    sign = 1.0 if ratio > 0 else -1.0
    if abs(abs(ratio) - 1.0) > 0.25:
        raise RuntimeError(
            f"pfaffian sign calibration inconsistent at m={m}, n={n}: "
            f"ratio {ratio:.4f}"
        )
    _PF_SIGN_CACHE[key] = sign
    return sign


# ---------------------------------------------------------------------------
# Group integral over U(m) / USp(2)^{m/2}.


def _canonical_j(m):
    half = m // 2
    return np.block(
        [[np.zeros((half, half)), np.eye(half)], [-np.eye(half), np.zeros((half, half))]]
    )


def im_exponent(u_mats, lam, j):
    """tr(lam^2 + J U* lam U J U^T lam Ubar) for a batch of unitaries."""
    lam_d = np.ascontiguousarray(np.diag(lam))
    b = np.conj(np.transpose(u_mats, (0, 2, 1))) @ lam_d @ u_mats
    t = j @ b @ j @ np.transpose(b, (0, 2, 1))
    return np.trace(lam_d @ lam_d) + np.einsum("bii->b", t)


def im_exponent_quadratic_form(u_mats, lam, j):
    """Same exponent via the skew-unitary quadratic form
    sum lam_j^2 - 2 sum_{j<k} lam_j lam_k |W_jk|^2 with W = U J U^T."""
    w = u_mats @ j @ np.transpose(u_mats, (0, 2, 1))
    absw2 = np.abs(w) ** 2
    lam = np.asarray(lam)
    pair = np.einsum("j,k,bjk->b", lam, lam, absw2)
    return np.sum(lam**2) - pair


def tilde_delta(u_args, z_args):
    """Interaction factor: signed Vandermonde over the real points times
    positive pair factors for the complex points."""
    u = np.asarray(u_args, dtype=float)
    z = np.asarray(z_args, dtype=complex)
    out = 1.0
    for j in range(len(u)):
        for l in range(j + 1, len(u)):
            out *= u[j] - u[l]
    for k in range(len(z)):
        for l in range(k + 1, len(z)):
            out *= abs(z[k] - z[l]) ** 2 * abs(z[k] - np.conj(z[l])) ** 2
    for j in range(len(u)):
        for k in range(len(z)):
            out *= abs(u[j] - z[k]) ** 2
    return out


def group_integral_Im(u_args, z_args, samples=100_000, seed=0, batch=2000):
    """Monte Carlo of the building-block group integral
    I_m = (2 pi)^{-m(m-1)/4} * Delta~ * E_{U ~ Haar U(m)} exp(-exponent/2),
    with Haar as a probability measure (volume factors cancel in the
    average).  m = len(u_args) + 2 len(z_args) must be even."""
    u_args = np.asarray(u_args, dtype=float)
    z_args = np.asarray(z_args, dtype=complex)
    m = len(u_args) + 2 * len(z_args)
    if m % 2 == 1:
        raise ValueError("m must be even")
    lam = np.concatenate([u_args.astype(complex), z_args, z_args.conj()])
    j = _canonical_j(m)
    rng = stream_generator(seed, 5)
    vals = np.empty(samples)
    done = 0
    while done < samples:
        cnt = min(batch, samples - done)
        g = (rng.standard_normal((cnt, m, m)) + 1j * rng.standard_normal((cnt, m, m)))
        q, r = np.linalg.qr(g)
        diag = np.einsum("bii->bi", r)
        u_mats = q * (diag / np.abs(diag))[:, None, :]
        expo = im_exponent(u_mats, lam, j)
        if np.abs(expo.imag).max() > 1e-8 * max(1.0, np.abs(expo.real).max()):
            raise RuntimeError("group-integral exponent unexpectedly complex")
        vals[done : done + cnt] = np.exp(-0.5 * expo.real)
        done += cnt
    pref = (2.0 * np.pi) ** (-m * (m - 1) / 4.0) * tilde_delta(u_args, z_args)
    return McEstimate(
        value=float(pref * vals.mean()),
        stderr=float(abs(pref) * vals.std(ddof=1) / np.sqrt(samples)),
        samples=samples,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Determinant identity for the pair matrix.


def dubova_yang_check(x, z, delta, eta, ambient_n=None):
    """Relative residual of det M_z(eta) = det^2(eta^2 + |X_z|^2)
    * det(1 + eta^2 delta^2 H_z(eta) Ht_zbar(eta)), in log space."""
    if complex(z).imag <= 0 or delta < 0 or eta <= 0:
        raise ValueError("need Im z > 0, delta >= 0, eta > 0")
    c = ResolventCache(x, ambient_n)
    m = pair_matrix(x, z, delta, eta)
    sign, ld_m = np.linalg.slogdet(m)
    s = c.singular_values(z)
    ld_base = np.sum(np.log(eta**2 + s**2))
    h = c.h_matrix(z, eta)
    ht_bar = c.ht_matrix(np.conj(z), eta)
    n = c.n
    sgn2, ld_corr = np.linalg.slogdet(np.eye(n) + eta**2 * delta**2 * (h @ ht_bar))
    log_rhs = 2.0 * ld_base + ld_corr + np.log(sgn2).imag * 1j
    log_lhs = ld_m + (0.0 if sign > 0 else np.pi * 1j)
    return float(abs(np.exp(log_rhs - log_lhs) - 1.0))


# ---------------------------------------------------------------------------
# Skew-SVD Jacobian check: dS = 2^{m/2} Delta^4(sigma^2) prod sigma dsigma dU.


_G_STATS = {
    "sum_sq": lambda sig: np.sum(sig**2, axis=-1),
    "prod_sq": lambda sig: np.prod(sig**2, axis=-1),
}


def skew_jacobian_check(m, samples=200_000, seed=0, tau=1.0, g="sum_sq", nodes=160):
    """Compare E[g(singular-value pairs)] of a Gaussian complex skew matrix
    computed (i) by direct Monte Carlo and (ii) through the radial density
    Delta^4(sigma^2) prod sigma exp(-sum sigma^2 / tau) by quadrature."""
    if m not in (2, 4):
        raise ValueError("desk-scale check supports m in {2, 4}")
    gfun = _G_STATS[g] if isinstance(g, str) else g
    rng = stream_generator(seed, 6)
    s = _skew_samples(m, tau, samples, rng)
    sv = np.linalg.svd(s, compute_uv=False)[:, ::2]
    vals = gfun(sv)
    lhs = McEstimate(
        value=float(vals.mean()),
        stderr=float(vals.std(ddof=1) / np.sqrt(samples)),
        samples=samples,
        seed=seed,
    )
    half = m // 2
    r = np.sqrt(tau) * (6.0 if m == 2 else 7.0)
    x, w = np.polynomial.legendre.leggauss(nodes)
    sig = (x + 1.0) * r / 2.0
    ww = w * r / 2.0
    if half == 1:
        dens = sig * np.exp(-sig**2 / tau)
        zconst = np.sum(ww * dens)
        rhs = float(np.sum(ww * dens * gfun(sig[:, None])) / zconst)
    else:
        s1 = sig[:, None]
        s2 = sig[None, :]
        dens = (
            (s1**2 - s2**2) ** 4
            * s1
            * s2
            * np.exp(-(s1**2 + s2**2) / tau)
        )
        wgrid = ww[:, None] * ww[None, :]
        zconst = np.sum(wgrid * dens)
        gv = gfun(np.stack(np.broadcast_arrays(s1, s2), axis=-1))
        rhs = float(np.sum(wgrid * dens * gv) / zconst)
    return DualityPair(lhs=lhs, rhs=rhs, agreement_sigma=_combined_sigma(lhs, rhs))
