"""Scalar analytic layer: the self-consistent scale eta_z, the Laplace
functionals phi/psi, the density scale sigma and the pair scale tau, the
C0-C3 class checker, deterministic resolvent laws, and local-law gap
measurement.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .linalg import ResolventCache
from .ensembles import sample_matrix

__all__ = [
    "EtaSolution",
    "LocalProfile",
    "ConditionRecord",
    "ConditionReport",
    "GridSpec",
    "DeterministicLaw",
    "solve_eta",
    "local_profile",
    "phi_curve",
    "check_conditions",
    "deterministic_law",
    "beta_pair",
    "two_resolvent_deterministic",
    "local_law_gap",
]


@dataclass
class EtaSolution:
    z: complex
    t: float
    eta: float
    branch: str  # "fixed-point" | "floor"
    residual: float


def solve_eta(x, z, t, ambient_n=None, cache=None, tol=1e-13):
    """Solve t <H_z(eta)> = 1 for eta, or return the floor sqrt(t/N).

    Bisection to width 1e-3 sqrt(t) brackets the root, then Newton with the
    analytic derivative -2 eta t <H^2> polishes it.
    """
    if t <= 0:
        raise ValueError("need t > 0")
    c = cache if cache is not None else ResolventCache(x, ambient_n)
    bign = c.ambient_n
    floor = np.sqrt(t / bign)

    def f(eta):
        return t * c.trace_H(z, eta) - 1.0

    f_floor = f(floor)
    if f_floor < 0.0:
        return EtaSolution(z=z, t=t, eta=floor, branch="floor", residual=f_floor)
    # t<H> <= t/hi^2 = (1+||X_z||)^{-2} < 1 at hi, with slack for the
    # degenerate X = 0 case where equality would hold
    hi = np.sqrt(t) * (1.0 + c.norm(z)) * (1.0 + 1e-9)
    lo = floor
    f_hi = f(hi)
    if f_hi > 0.0:
        raise RuntimeError(
            f"eta bracket failure at z={z}: f({lo})={f_floor:.3e}, f({hi})={f_hi:.3e}"
        )
    while hi - lo > 1e-3 * np.sqrt(t):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    eta = 0.5 * (lo + hi)
    for _ in range(60):
        r = f(eta)
        if abs(r) <= tol:
            break
        deriv = -2.0 * eta * t * c.trace_H2(z, eta)
        step = r / deriv
        new = eta - step
        if not (lo <= new <= hi):
            new = 0.5 * (lo + hi)
        if f(new) > 0.0:
            lo = new
        else:
            hi = new
        eta = new
    else:  # pragma: no cover - Newton monotone on this problem
        eta = scipy.optimize.brentq(f, lo, hi, xtol=1e-16, rtol=8.9e-16)
    return EtaSolution(z=z, t=t, eta=float(eta), branch="fixed-point", residual=float(f(eta)))


def _phi(c, z, t, eta):
    s = c.singular_values(z)
    return eta**2 / t - np.sum(np.log(eta**2 + s**2)) / c.ambient_n


@dataclass
class LocalProfile:
    z: complex
    t: float
    eta: float
    branch: str
    phi: float
    psi_log: float
    sigma: float
    tau: float


def tau_pair_scale(c, z, eta):
    """tau_z at scale eta: |1 - t<H X* Xbar Hbar>|^2 - t^2 eta^4 <H Hbar><Ht Htbar>
    is assembled by the caller; this returns the raw traces."""
    zb = np.conj(z)
    return {
        "HXXH": c.trace_HXXH(z, eta),
        "HH": c.trace_HH(z, eta, zb, eta),
        "HtHt": c.trace_HtHt(z, eta, zb, eta),
        "HXH": c.trace_HXH(z, eta, zb, eta),
        "HtH_cross": c.trace_HtH(zb, eta, z, eta),
    }


def local_profile(x, z, t, ambient_n=None, cache=None):
    """Evaluate (eta_z, phi, log psi, sigma, tau) at the point z."""
    c = cache if cache is not None else ResolventCache(x, ambient_n)
    sol = solve_eta(x, z, t, cache=c)
    eta = sol.eta
    bign = c.ambient_n
    phi = _phi(c, z, t, eta)
    psi_log = -bign / 2.0 * phi
    h2 = c.trace_H2(z, eta)
    hht = c.trace_HtH(z, eta, z, eta)
    h2x = c.trace_H2X(z, eta)
    sigma = eta**2 * hht + abs(h2x) ** 2 / h2
    tr = tau_pair_scale(c, z, eta)
    tau = abs(1.0 - t * tr["HXXH"]) ** 2 - t**2 * eta**4 * tr["HH"] * tr["HtHt"]
    return LocalProfile(
        z=z, t=t, eta=eta, branch=sol.branch, phi=float(phi),
        psi_log=float(psi_log), sigma=float(sigma), tau=float(tau),
    )


def tau_identity_value(x, z, t, ambient_n=None, cache=None):
    """Right-hand side 4 y^2 t^2 [eta^2 <H_z H_zbar><H_zbar Ht_z> + |<H_zbar X_z H_z>|^2]
    of the pair-scale identity, evaluated at eta_z."""
    c = cache if cache is not None else ResolventCache(x, ambient_n)
    sol = solve_eta(x, z, t, cache=c)
    eta = sol.eta
    zb = np.conj(z)
    y = z.imag
    hh = c.trace_HH(z, eta, zb, eta)
    hth_cross = c.trace_HtH(z, eta, zb, eta)  # <Ht_z H_zbar> = <H_zbar Ht_z>
    hxh = c.trace_HXH(z, eta, zb, eta)  # <H_z X_z^* H_zbar>
    return 4.0 * y**2 * t**2 * (eta**2 * hh * hth_cross + abs(hxh) ** 2)


@dataclass
class PhiCurve:
    etas: np.ndarray
    phis: np.ndarray
    argmin_eta: float


def phi_curve(x, z, t, eta_grid, ambient_n=None, cache=None):
    c = cache if cache is not None else ResolventCache(x, ambient_n)
    etas = np.asarray(eta_grid, dtype=float)
    if np.any(etas <= 0):
        raise ValueError("eta grid must be positive")
    phis = np.array([_phi(c, z, t, e) for e in etas])
    return PhiCurve(etas=etas, phis=phis, argmin_eta=float(etas[np.argmin(phis)]))


# ---------------------------------------------------------------------------
# Class-condition checker.


@dataclass
class GridSpec:
    z_side: int = 16
    eta_points: int = 24
    pair_z: int = 4
    pair_eta: int = 3

    def to_dict(self):
        return {
            "z_side": self.z_side,
            "eta_points": self.eta_points,
            "pair_z": self.pair_z,
            "pair_eta": self.pair_eta,
        }


@dataclass
class ConditionRecord:
    holds: bool
    extremal_constant: float
    witness: tuple


@dataclass
class ConditionReport:
    gamma: float
    omega: float
    grid: dict
    records: dict

    @property
    def all_hold(self):
        return all(r.holds for r in self.records.values())


# Pass thresholds for the fitted constants.  The two-sided C1 constants sit
# near 10 because the grid top eta = 10 forces eta <H> ~ Im m ~ 1/10; the
# C2.1 ratio is ~ 1/(eta1 eta2) * (max/min) ~ 1e-2 at the large-eta grid
# corner, so its cap is correspondingly loose.  All caps are configurable.
DEFAULT_CAPS = {
    "C0": 10.0,
    "C1.1": 15.0,
    "C1.2": 40.0,
    "C2.1": 500.0,
    "C2.2": 40.0,
    "C3.1": 40.0,
    "C3.2": 40.0,
}


def _disk_grid(side, radius):
    lin = np.linspace(-radius, radius, side + 2)[1:-1]
    pts = [complex(a, b) for a in lin for b in lin if a * a + b * b < radius**2]
    return pts


def check_conditions(x, gamma, omega, ambient_n=None, grid=None, caps=None):
    """Empirically check the class conditions C0-C3 on finite grids.

    Upper-bound conditions record the largest constant observed; lower-bound
    conditions record the smallest ratio LHS / (bound kernel) and hold when
    it stays above 1/cap.  Violations are data, not errors.
    """
    grid = grid or GridSpec()
    caps = {**DEFAULT_CAPS, **(caps or {})}
    c = ResolventCache(x, ambient_n)
    bign = c.ambient_n
    radius = np.sqrt(1.0 - omega)
    zs = _disk_grid(grid.z_side, radius)
    etas = np.geomspace(bign ** (-gamma), 10.0, grid.eta_points)
    norm = c.norm(0.0)
    records = {}

    records["C0"] = ConditionRecord(norm <= caps["C0"], float(norm), (0.0, 0.0))

    # C1: 1/c <= eta <H_z(eta)> <= c and same for eta^3 <H^2>
    worst11, wit11 = 0.0, None
    worst12, wit12 = 0.0, None
    for z in zs:
        s = c.singular_values(z)
        for eta in etas:
            d = 1.0 / (eta**2 + s**2)
            v1 = eta * np.sum(d) / bign
            v2 = eta**3 * np.sum(d**2) / bign
            m1 = max(v1, 1.0 / v1)
            m2 = max(v2, 1.0 / v2)
            if m1 > worst11:
                worst11, wit11 = m1, (z, eta)
            if m2 > worst12:
                worst12, wit12 = m2, (z, eta)
    records["C1.1"] = ConditionRecord(worst11 <= caps["C1.1"], float(worst11), wit11)
    records["C1.2"] = ConditionRecord(worst12 <= caps["C1.2"], float(worst12), wit12)

    # coarse pair grids for the two-resolvent conditions; a degenerate
    # norm (X = 0) only shrinks the z2/eta2 ranges it controls
    norm_g = max(norm, 0.1)
    z1s = _disk_grid(grid.pair_z, radius)
    z2s = z1s + [complex(1.5 * norm_g, 0.3), complex(0.0, 1.9 * norm_g)]
    eta1s = np.geomspace(bign ** (-gamma), 10.0, grid.pair_eta)
    eta2s = np.geomspace(bign ** (-gamma), 10.0 * norm_g, grid.pair_eta)

    worst21, wit21 = np.inf, None
    for z1 in z1s:
        for z2 in z2s:
            for e1 in eta1s:
                for e2 in eta2s:
                    lhs = e1 * e2 * c.trace_HtH(z1, e1, z2, e2)
                    kern = min(e1, e2) / (abs(z1 - z2) ** 2 + max(e1, e2))
                    ratio = lhs / kern
                    if ratio < worst21:
                        worst21, wit21 = ratio, (z1, e1, z2, e2)
    records["C2.1"] = ConditionRecord(
        worst21 >= 1.0 / caps["C2.1"], float(worst21), wit21
    )

    worst22, wit22 = np.inf, None
    zs_upper = [z for z in zs if z.imag > 0][:: max(1, len(zs) // 24)]
    for z in zs_upper:
        for eta in eta1s:
            lhs = eta**2 * c.trace_HH(z, eta, np.conj(z), eta)
            ratio = lhs * (z.imag**2 + eta)
            if ratio < worst22:
                worst22, wit22 = ratio, (z, eta)
    records["C2.2"] = ConditionRecord(
        worst22 >= 1.0 / caps["C2.2"], float(worst22), wit22
    )

    worst31, wit31 = 0.0, None
    bset = ("E+", "F", "F*")
    for z1 in z1s:
        for z2 in z1s:
            for e1 in eta1s:
                for e2 in eta1s:
                    table = c.block_trace_table(z1, e1, z2, e2)
                    for b1 in bset:
                        for b2 in bset:
                            v = abs(c.trace_GBGB(z1, e1, z2, e2, b1, b2, table))
                            if v > worst31:
                                worst31, wit31 = v, (z1, e1, z2, e2, b1, b2)
    records["C3.1"] = ConditionRecord(worst31 <= caps["C3.1"], float(worst31), wit31)

    worst32, wit32 = 0.0, None
    for z in zs_upper:
        for eta in eta1s:
            v = abs(c.trace_GBGB(z, eta, np.conj(z), eta, "E-", "E-"))
            v *= z.imag**2 + eta
            if v > worst32:
                worst32, wit32 = v, (z, eta)
    records["C3.2"] = ConditionRecord(worst32 <= caps["C3.2"], float(worst32), wit32)

    return ConditionReport(
        gamma=gamma, omega=omega, grid=grid.to_dict(), records=records
    )


# ---------------------------------------------------------------------------
# Deterministic laws on the imaginary axis.


@dataclass
class DeterministicLaw:
    z: complex
    w: complex
    m: complex
    u: complex
    M: np.ndarray
    beta: complex


def _rho_root(z, eta):
    """Unique positive root of rho^3 + 2 eta rho^2 + (eta^2 + |z|^2 - 1) rho = eta."""
    coeffs = [1.0, 2.0 * eta, eta**2 + abs(z) ** 2 - 1.0, -eta]

    def f(r):
        return ((r + coeffs[1]) * r + coeffs[2]) * r + coeffs[3]

    hi = max(2.0, 2.0 * eta + 2.0)
    if eta == 0.0:
        val = 1.0 - abs(z) ** 2
        return np.sqrt(val) if val > 0 else 0.0
    lo = 0.0
    assert f(lo) < 0 < f(hi) or f(hi) == 0
    rho = scipy.optimize.brentq(f, lo, hi, xtol=1e-16, rtol=8.9e-16)
    return rho


def deterministic_law(z, eta):
    """Self-consistent single-resolvent law m, u, M and the pair
    denominator beta at w = i eta.

    m = i rho with rho the unique positive root of the cubic
    rho^3 + 2 eta rho^2 + (eta^2 + |z|^2 - 1) rho = eta, which is the
    imaginary-axis form of -1/m = m + w - |z|^2/(m + w).
    """
    if eta < 0:
        raise ValueError("need eta >= 0")
    rho = _rho_root(z, eta)
    m = 1j * rho
    w = 1j * eta
    u = m / (m + w) if rho + eta > 0 else 1.0 + 0.0j
    mat = np.array([[m, -z * u], [-np.conj(z) * u, m]])
    beta = beta_pair(z, eta, z, eta)
    return DeterministicLaw(z=z, w=w, m=m, u=u, M=mat, beta=beta)


def beta_pair(z1, eta1, z2, eta2):
    """Two-resolvent stability denominator
    beta = u1 u2 |z1-z2|^2 + (1-u1)(1-u2) - i eta1 m1 u2 - i eta2 m2 u1."""
    l1 = deterministic_law_m(z1, eta1)
    l2 = deterministic_law_m(z2, eta2)
    m1, u1 = l1
    m2, u2 = l2
    return (
        u1 * u2 * abs(z1 - z2) ** 2
        + (1.0 - u1) * (1.0 - u2)
        - 1j * eta1 * m1 * u2
        - 1j * eta2 * m2 * u1
    )


def deterministic_law_m(z, eta):
    rho = _rho_root(z, eta)
    m = 1j * rho
    u = m / (m + 1j * eta) if rho + eta > 0 else 1.0 + 0.0j
    return m, u


_SYM = {
    "E1": np.array([[1.0, 0.0], [0.0, 0.0]]),
    "E2": np.array([[0.0, 0.0], [0.0, 1.0]]),
    "E+": np.eye(2),
    "E-": np.array([[1.0, 0.0], [0.0, -1.0]]),
    "F": np.array([[0.0, 1.0], [0.0, 0.0]]),
    "F*": np.array([[0.0, 0.0], [1.0, 0.0]]),
}


def two_resolvent_deterministic(z1, eta1, z2, eta2, b1):
    """Deterministic 2x2 symbol approximating G_{z1}(i eta1) B1 G_{z2}(i eta2)
    in block-trace sense: apply the stability operator inverse to M1 B1 M2."""
    m1, u1 = deterministic_law_m(z1, eta1)
    m2, u2 = deterministic_law_m(z2, eta2)
    mat1 = np.array([[m1, -z1 * u1], [-np.conj(z1) * u1, m1]])
    mat2 = np.array([[m2, -z2 * u2], [-np.conj(z2) * u2, m2]])
    sym = _SYM[b1] if isinstance(b1, str) else np.asarray(b1)
    rhs = mat1 @ sym @ mat2

    # Solve F = rhs + M1 S[F] M2 with S[F] = diag(F22, F11), so
    # M1 S[F] M2 = F22 (M1 E1 M2) + F11 (M1 E2 M2); diagonal entries first.
    e1m = mat1 @ _SYM["E1"] @ mat2
    e2m = mat1 @ _SYM["E2"] @ mat2
    amat = np.array(
        [[1.0 - e2m[0, 0], -e1m[0, 0]], [-e2m[1, 1], 1.0 - e1m[1, 1]]],
        dtype=complex,
    )
    sol = np.linalg.solve(amat, np.array([rhs[0, 0], rhs[1, 1]]))
    f11, f22 = sol
    corr = f22 * e1m + f11 * e2m
    f = rhs + corr
    f[0, 0], f[1, 1] = f11, f22
    return f


@dataclass
class LocalLawGap:
    trace_gap_mean: float
    trace_gap_p95: float
    entry_gap_mean: float
    entry_gap_p95: float
    two_resolvent_gap_mean: float
    samples: int
    n: int


def local_law_gap(spec, z, eta, samples, entry_samples=None, pair_b=("E+", "E+")):
    """Monte Carlo gaps between resolvent traces and their deterministic laws.

    Reports mean and 95th percentile of |<G_z(i eta)> - <M_z(i eta)>| and of
    the maximal entry deviation, plus the two-resolvent gap
    |<G B1 G B2> - predicted|.
    """
    n = spec.n
    law = deterministic_law(z, eta)
    trace_target = 2.0 * law.m
    sym1 = _SYM[pair_b[0]]
    sym2 = _SYM[pair_b[1]]
    pred_pair = np.trace(two_resolvent_deterministic(z, eta, z, eta, pair_b[0]) @ sym2)
    entry_samples = samples if entry_samples is None else entry_samples

    trace_gaps = np.empty(samples)
    pair_gaps = np.empty(samples)
    entry_gaps = []
    for s in range(samples):
        x = sample_matrix(spec, s)
        c = ResolventCache(x)
        th = c.trace_H(z, eta)
        trace_gaps[s] = abs(2j * eta * th - trace_target)
        pair_gaps[s] = abs(c.trace_GBGB(z, eta, z, eta, *pair_b) - pred_pair)
        if s < entry_samples:
            g = c.g_matrix(z, eta)
            mfull = np.kron(np.array([[law.m, -z * law.u], [-np.conj(z) * law.u, law.m]]),
                            np.eye(n))
            entry_gaps.append(np.abs(g - mfull).max())
    entry_gaps = np.array(entry_gaps) if entry_gaps else np.array([np.nan])
    return LocalLawGap(
        trace_gap_mean=float(trace_gaps.mean()),
        trace_gap_p95=float(np.quantile(trace_gaps, 0.95)),
        entry_gap_mean=float(np.nanmean(entry_gaps)),
        entry_gap_p95=float(np.nanquantile(entry_gaps, 0.95)),
        two_resolvent_gap_mean=float(pair_gaps.mean()),
        samples=samples,
        n=n,
    )
