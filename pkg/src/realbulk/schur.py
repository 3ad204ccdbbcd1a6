"""Real (p,q)-partial Schur decomposition with exact reconstruction and
Jacobian evaluation, plus the sign ("spin") combinatorics of products of
characteristic polynomials at real points.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.special

from .linalg import SpectrumSplit, real_spectrum
from .ensembles import stream_generator
from .dualities import sphere_volume, stiefel_volume, tilde_delta

__all__ = [
    "RealStep",
    "ComplexStep",
    "SchurChain",
    "SpinValue",
    "AdmissibleTuple",
    "schur_step_real",
    "schur_step_complex",
    "decompose",
    "reconstruct",
    "jacobian_mc_check",
    "spin",
    "spin_from_spectrum",
    "spin_identity_check",
    "admissible_tuples",
    "omega_indicator",
]


def _householder_swap(v):
    """Symmetric orthogonal R with R e_1 = v and R v = e_1."""
    n = v.shape[0]
    e1 = np.zeros(n)
    e1[0] = 1.0
    w = e1 - v
    nrm2 = w @ w
    if nrm2 < 1e-30:
        return np.eye(n)
    return np.eye(n) - 2.0 * np.outer(w, w) / nrm2


def _ordered_schur_leading(x, select):
    """Real Schur form with the selected eigenvalue cluster moved to the
    top-left; returns (T, Z)."""
    t, z, _ = scipy.linalg.schur(x, output="real", sort=select)
    return t, z


def schur_step_real(x, eig_index, tol=1e-12):
    """Peel one real eigenvalue: R X R = [[u, w^T], [0, minor]].

    The eigenvector comes from reordering the real Schur form so the chosen
    eigenvalue leads; its sign is fixed by a positive first entry.  Returns
    (u, w, minor, v, r).
    """
    x = np.asarray(x, dtype=float)
    sp = real_spectrum(x)
    if eig_index >= len(sp.real_eigs):
        raise ValueError("selected real eigenvalue does not exist")
    u_target = sp.real_eigs[eig_index]
    scale = max(1.0, np.abs(x).max())

    t, z = _ordered_schur_leading(
        x, lambda re, im: (np.abs(im) < 1e-9 * scale) & (np.abs(re - u_target) < 1e-6 * scale)
    )
    u = t[0, 0]
    if abs(u - u_target) > max(tol, 1e-9) * scale:
        raise ValueError(
            f"selected eigenvalue {u_target} is not real within tolerance "
            f"(reordered Schur gives {t[0, 0]})"
        )
    v = z[:, 0].copy()
    if v[0] < 0.0:
        v = -v
    r = _householder_swap(v)
    y = r @ x @ r
    w = y[0, 1:].copy()
    minor = y[1:, 1:].copy()
    return u, w, minor, v, r


def _standardise_block(t2):
    """Rotate a 2x2 Schur block with complex eigenvalues into the canonical
    branch [[x, b], [-c, x]] with b >= c > 0; returns (g, x, b, c).

    Among the two representations with b >= c allowed by the form (both
    entries positive or both negative), the positive branch is chosen so
    that (y, delta) = (sqrt(bc), b - c) parametrises Z faithfully.
    """
    a, beta = t2[0, 0], t2[0, 1]
    gam, d = t2[1, 0], t2[1, 1]
    if abs(a - d) > 1e-10 * max(1.0, abs(a) + abs(d)):
        # balance the diagonal (LAPACK standardises its blocks already;
        # this is a safety net for hand-built inputs)
        th = 0.5 * np.arctan2(d - a, beta + gam)
        g0 = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        t2 = g0.T @ t2 @ g0
        a, beta, gam, d = t2[0, 0], t2[0, 1], t2[1, 0], t2[1, 1]
    else:
        g0 = np.eye(2)
    if beta * gam >= 0:
        raise ValueError("block does not carry a complex pair")
    if beta > 0 and beta >= -gam:
        g1 = np.eye(2)
    elif beta > 0:
        g1 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    elif gam >= -beta:
        g1 = np.array([[0.0, 1.0], [1.0, 0.0]])
    else:
        g1 = np.array([[1.0, 0.0], [0.0, -1.0]])
    t2 = g1.T @ t2 @ g1
    g = g0 @ g1
    b, c = t2[0, 1], -t2[1, 0]
    assert b >= c > 0
    return g, t2[0, 0], b, c


def schur_step_complex(x, pair_index, tol=1e-12):
    """Peel one conjugate pair: Q^T X Q = [[Z, W^T], [0, minor]] with
    Z = [[x, b], [-c, x]], b >= c, y = sqrt(b c) > 0, delta = b - c.

    Returns (x0, y, delta, w, minor, v_frame, q)."""
    x = np.asarray(x, dtype=float)
    sp = real_spectrum(x)
    if pair_index >= len(sp.complex_eigs):
        raise ValueError("selected complex pair does not exist")
    z_target = sp.complex_eigs[pair_index]
    scale = max(1.0, np.abs(x).max())

    t, zmat = _ordered_schur_leading(
        x,
        lambda re, im: (np.abs(re + 1j * np.abs(im) - z_target) < 1e-6 * scale),
    )
    if t.shape[0] < 2 or abs(t[1, 0]) < 1e-14 * scale:
        raise ValueError("selected eigenvalue is not strictly complex")
    g, x0, b, c = _standardise_block(t[:2, :2])
    n = x.shape[0]
    q = zmat @ scipy.linalg.block_diag(g, np.eye(n - 2))
    if q[0, 0] < 0.0:
        q[:, :2] = -q[:, :2]
    y = q.T @ x @ q
    w = y[:2, 2:].T.copy()
    minor = y[2:, 2:].copy()
    yy = np.sqrt(b * c)
    return x0, yy, b - c, w, minor, q[:, :2].copy(), q


@dataclass
class RealStep:
    u: float
    v: np.ndarray
    w: np.ndarray
    transform: np.ndarray = field(repr=False)


@dataclass
class ComplexStep:
    x: float
    y: float
    delta: float
    V: np.ndarray
    W: np.ndarray
    transform: np.ndarray = field(repr=False)


@dataclass
class SchurChain:
    p: int
    q: int
    real_steps: list
    complex_steps: list
    remainder: np.ndarray
    accumulated_U: np.ndarray
    jacobian_log: float

    def selected_lambdas(self):
        lam = [s.u for s in self.real_steps]
        lam += [s.x + 1j * s.y for s in self.complex_steps]
        lam += [s.x - 1j * s.y for s in self.complex_steps]
        return np.array(lam, dtype=complex)

    def to_json(self):
        def arr(a):
            a = np.asarray(a)
            return a.tolist()

        return json.dumps(
            {
                "p": self.p,
                "q": self.q,
                "real_steps": [
                    {"u": s.u, "v": arr(s.v), "w": arr(s.w), "transform": arr(s.transform)}
                    for s in self.real_steps
                ],
                "complex_steps": [
                    {
                        "x": s.x, "y": s.y, "delta": s.delta,
                        "V": arr(s.V), "W": arr(s.W), "transform": arr(s.transform),
                    }
                    for s in self.complex_steps
                ],
                "remainder": arr(self.remainder),
                "accumulated_U": arr(self.accumulated_U),
                "jacobian_log": self.jacobian_log,
            }
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(
            p=d["p"],
            q=d["q"],
            real_steps=[
                RealStep(
                    u=s["u"], v=np.array(s["v"]), w=np.array(s["w"]),
                    transform=np.array(s["transform"]),
                )
                for s in d["real_steps"]
            ],
            complex_steps=[
                ComplexStep(
                    x=s["x"], y=s["y"], delta=s["delta"], V=np.array(s["V"]),
                    W=np.array(s["W"]), transform=np.array(s["transform"]),
                )
                for s in d["complex_steps"]
            ],
            remainder=np.array(d["remainder"]),
            accumulated_U=np.array(d["accumulated_U"]),
            jacobian_log=d["jacobian_log"],
        )


def _chain_jacobian_log(chain):
    """log J = q log 2 + sum_k [log(2 y_k delta_k) - (1/2) log(delta_k^2 + 4 y_k^2)]
    + log|Delta~| + sum_mu log|det(remainder - lambda_mu)|."""
    us = np.array([s.u for s in chain.real_steps])
    zs = np.array([s.x + 1j * s.y for s in chain.complex_steps])
    total = chain.q * np.log(2.0)
    for s in chain.complex_steps:
        if s.delta == 0.0 or s.y == 0.0:
            return -np.inf
        total += np.log(2.0 * s.y * s.delta) - 0.5 * np.log(s.delta**2 + 4.0 * s.y**2)
    delta = tilde_delta(us, zs)
    if delta == 0.0:
        return -np.inf
    total += np.log(abs(delta))
    rem = chain.remainder
    if rem.size:
        for lam in chain.selected_lambdas():
            sign, ld = np.linalg.slogdet(rem - lam * np.eye(rem.shape[0]))
            total += ld
    return float(total)


def decompose(x, p, q, selection=None):
    """(p, q)-partial Schur decomposition of a real matrix.

    ``selection`` is a pair of index lists into the sorted real eigenvalues
    and the sorted complex-pair representatives of X; by default the first
    p reals and first q pairs.  Eigenvalues are tracked by value through
    the successive minors.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if p + 2 * q > n:
        raise ValueError("p + 2q exceeds the dimension")
    sp = real_spectrum(x)
    if selection is None:
        selection = (list(range(p)), list(range(q)))
    real_sel, cplx_sel = selection
    if len(real_sel) != p or len(cplx_sel) != q:
        raise ValueError("selection lengths must match (p, q)")
    if p > len(sp.real_eigs) or q > len(sp.complex_eigs):
        raise ValueError(
            f"matrix has {len(sp.real_eigs)} real eigenvalues and "
            f"{len(sp.complex_eigs)} pairs; requested ({p}, {q})"
        )
    targets_r = [sp.real_eigs[i] for i in real_sel]
    targets_c = [sp.complex_eigs[i] for i in cplx_sel]

    cur = x
    big_u = np.eye(n)
    real_steps = []
    complex_steps = []
    consumed = 0
    scale = max(1.0, np.abs(x).max())
    for u_target in targets_r:
        sp_cur = real_spectrum(cur)
        idx = int(np.argmin(np.abs(sp_cur.real_eigs - u_target)))
        if abs(sp_cur.real_eigs[idx] - u_target) > 1e-8 * scale:
            raise RuntimeError("tracked eigenvalue drifted between minors")
        u, w, minor, v, r = schur_step_real(cur, idx)
        real_steps.append(RealStep(u=u, v=v, w=w, transform=r))
        big_u = big_u @ scipy.linalg.block_diag(np.eye(consumed), r)
        consumed += 1
        cur = minor
    for z_target in targets_c:
        sp_cur = real_spectrum(cur)
        idx = int(np.argmin(np.abs(sp_cur.complex_eigs - z_target)))
        if abs(sp_cur.complex_eigs[idx] - z_target) > 1e-8 * scale:
            raise RuntimeError("tracked eigenvalue drifted between minors")
        x0, y0, d0, w, minor, vfr, qmat = schur_step_complex(cur, idx)
        complex_steps.append(
            ComplexStep(x=x0, y=y0, delta=d0, V=vfr, W=w, transform=qmat)
        )
        big_u = big_u @ scipy.linalg.block_diag(np.eye(consumed), qmat)
        consumed += 2
        cur = minor

    chain = SchurChain(
        p=p, q=q, real_steps=real_steps, complex_steps=complex_steps,
        remainder=cur, accumulated_U=big_u, jacobian_log=0.0,
    )
    chain.jacobian_log = _chain_jacobian_log(chain)
    return chain


def _z_matrix(step):
    b = (step.delta + np.sqrt(step.delta**2 + 4.0 * step.y**2)) / 2.0
    c = b - step.delta
    return np.array([[step.x, b], [-c, step.x]])


def reconstruct(chain):
    """Rebuild the original matrix from the chain blocks."""
    cur = chain.remainder
    for s in reversed(chain.complex_steps):
        d = cur.shape[0]
        top = np.hstack([_z_matrix(s), s.W.T])
        bot = np.hstack([np.zeros((d, 2)), cur])
        cur = s.transform @ np.vstack([top, bot]) @ s.transform.T
    for s in reversed(chain.real_steps):
        d = cur.shape[0]
        top = np.hstack([[s.u], s.w])
        bot = np.hstack([np.zeros((d, 1)), cur])
        cur = s.transform @ np.vstack([top, bot]) @ s.transform
    return cur


# ---------------------------------------------------------------------------
# Two-estimator Monte Carlo check of the correlation-function formula.


@dataclass
class JacobianCheck:
    direct: tuple  # (value, stderr)
    schur_route: tuple
    agreement_sigma: float


def _count_tuples(sp, p, q):
    nr, nc = len(sp.real_eigs), len(sp.complex_eigs)
    if nr < p or nc < q:
        return 0.0
    return float(math.comb(nr, p) * math.comb(nc, q))


def _tuple_values(real_eigs, cplx_eigs, p, q, f):
    from itertools import combinations

    nr, nc = len(real_eigs), len(cplx_eigs)
    if nr < p or nc < q:
        return 0.0
    tot = 0.0
    for uc in combinations(range(nr), p):
        for zc in combinations(range(nc), q):
            tot += f(real_eigs[list(uc)], cplx_eigs[list(zc)])
    return tot


def _tilde_delta_abs_log_batch(us, zs):
    """log |Delta~| for batches us (b, p), zs (b, q); -inf rows on ties."""
    b = us.shape[0]
    out = np.zeros(b)
    p, q = us.shape[1], zs.shape[1]
    for j in range(p):
        for l in range(j + 1, p):
            out += np.log(np.abs(us[:, j] - us[:, l]))
    for k in range(q):
        for l in range(k + 1, q):
            out += 2.0 * np.log(np.abs(zs[:, k] - zs[:, l]))
            out += 2.0 * np.log(np.abs(zs[:, k] - zs[:, l].conj()))
    for j in range(p):
        for k in range(q):
            out += 2.0 * np.log(np.abs(us[:, j] - zs[:, k]))
    return out


def jacobian_mc_check(n, p, q, samples, seed=0, f=None, chunk=100_000):
    """Compare E[sum over increasing tuples f(u's, z's)] for a Gaussian
    matrix computed (i) from sampled spectra and (ii) through the
    partial-Schur change of variables with Gaussian importance sampling.

    ``f`` maps (u_tuple, z_tuple) arrays to a float and defaults to tuple
    counting.  Desk scale: n <= 4.
    """
    if n > 4:
        raise ValueError("desk-scale check supports n <= 4")
    m = p + 2 * q
    if m > n:
        raise ValueError("p + 2q must not exceed n")
    count_only = f is None

    rng = stream_generator(seed, 7)

    # (i) direct spectra, batched eigensolves
    vals = np.empty(samples)
    done = 0
    while done < samples:
        cnt = min(chunk, samples - done)
        xs = rng.standard_normal((cnt, n, n)) / np.sqrt(n)
        eigs = np.linalg.eigvals(xs)
        is_real = np.abs(eigs.imag) < 1e-10
        nr = is_real.sum(axis=1)
        if count_only:
            nc = (n - nr) // 2
            vals[done : done + cnt] = scipy.special.comb(nr, p) * scipy.special.comb(
                nc, q
            )
        else:
            for i in range(cnt):
                re = np.sort(eigs[i][is_real[i]].real)
                cz = eigs[i][~is_real[i]]
                cz = np.sort_complex(cz[cz.imag > 0])
                vals[done + i] = _tuple_values(re, cz, p, q, f)
        done += cnt
    direct = (float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples)))

    # (ii) omega-integral with Gaussian proposals matched to the density
    # exp(-(n/2)||X||_F^2); the weight is the Jacobian times the analytic
    # constant collecting manifold volumes and proposal normalisations.
    log_c = (n * n / 2.0) * np.log(n / (2.0 * np.pi))
    dim = n
    for j in range(1, p + 1):
        log_c += np.log(sphere_volume(dim) / 2.0)  # positive-first-entry half
        log_c += (1 + (dim - 1)) * 0.5 * np.log(2.0 * np.pi / n)  # u_j and w_j
        dim -= 1
    for k in range(q):
        log_c += np.log(stiefel_volume(dim, 2) / 2.0)
        log_c += 0.5 * np.log(np.pi / n)  # x_k
        log_c += np.log(0.5) + 0.5 * np.log(np.pi / n)  # y_k half-line
        log_c += np.log(0.5) + 0.5 * np.log(2.0 * np.pi / n)  # delta_k half-line
        log_c += (2 * (dim - 2)) * 0.5 * np.log(2.0 * np.pi / n)  # W_k
        dim -= 2
    log_c += ((n - m) ** 2) * 0.5 * np.log(2.0 * np.pi / n)

    wvals = np.empty(samples)
    nrem = n - m
    done = 0
    while done < samples:
        cnt = min(chunk, samples - done)
        us = rng.standard_normal((cnt, p)) * np.sqrt(1.0 / n)
        xs_ = rng.standard_normal((cnt, q)) * np.sqrt(1.0 / (2.0 * n))
        ys = np.abs(rng.standard_normal((cnt, q))) * np.sqrt(1.0 / (2.0 * n))
        ds = np.abs(rng.standard_normal((cnt, q))) * np.sqrt(1.0 / n)
        rem = rng.standard_normal((cnt, nrem, nrem)) * np.sqrt(1.0 / n)
        zs = xs_ + 1j * ys
        logj = np.full(cnt, q * np.log(2.0))
        logj += np.sum(
            np.log(2.0 * ys * ds) - 0.5 * np.log(ds**2 + 4.0 * ys**2), axis=1
        )
        logj += _tilde_delta_abs_log_batch(us, zs)
        if nrem:
            lam = np.concatenate([us, zs, zs.conj()], axis=1)
            eye_rem = np.eye(nrem)
            for jj in range(m):
                shifted = rem.astype(complex) - lam[:, jj, None, None] * eye_rem
                _, ld = np.linalg.slogdet(shifted)
                logj += ld
        if count_only:
            fv = 1.0
        else:
            fv = np.array([f(us[i], zs[i]) for i in range(cnt)])
        wvals[done : done + cnt] = fv * np.exp(log_c + logj)
        done += cnt
    schur_route = (float(wvals.mean()), float(wvals.std(ddof=1) / np.sqrt(samples)))

    err = np.hypot(direct[1], schur_route[1])
    diff = abs(direct[0] - schur_route[0])
    sig = 0.0 if diff == 0.0 else (diff / err if err > 0 else np.inf)
    return JacobianCheck(direct=direct, schur_route=schur_route,
                        agreement_sigma=float(sig))


# ---------------------------------------------------------------------------
# Spin variables.


@dataclass
class SpinValue:
    u: float
    s: int


def spin_from_spectrum(sp, u):
    """Left-continuous sign of det(X - u): (-1)^(# real eigenvalues < u);
    eigenvalues equal to u count as positive factors (limit from the left)."""
    below = int(np.sum(sp.real_eigs < u))
    return SpinValue(u=float(u), s=1 if below % 2 == 0 else -1)


def spin(x, u):
    return spin_from_spectrum(real_spectrum(np.asarray(x, dtype=float)), u)


def spin_identity_check(x, gap_tol=1e-12, max_retries=3, seed=0):
    """Check s_{u_j} = (-1)^(N-1) - 2 sum_{u_k > u_j} s_{u_k} at every real
    eigenvalue, in integer arithmetic.  Nearly-degenerate real spectra are
    perturbed and retried."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    rng = stream_generator(seed, 8)
    for _ in range(max_retries + 1):
        sp = real_spectrum(x)
        ue = sp.real_eigs
        if len(ue) >= 2 and np.diff(ue).min() < gap_tol * max(1.0, np.abs(x).max()):
            x = x + 1e-10 * np.abs(x).max() * rng.standard_normal((n, n))
            continue
        signs = [spin_from_spectrum(sp, u).s for u in ue]
        sign_parity = -1 if (n - 1) % 2 else 1
        for j in range(len(ue)):
            rhs = sign_parity - 2 * sum(
                signs[k] for k in range(len(ue)) if ue[k] > ue[j]
            )
            if signs[j] != rhs:
                return False
        return True
    raise RuntimeError("could not separate the real spectrum")


# ---------------------------------------------------------------------------
# Admissible tuples and the interleaving indicator.


@dataclass(frozen=True)
class AdmissibleTuple:
    a: tuple
    l: int
    coeff: int  # signed 2^l
    depends_on_n: bool  # True when the overall sign carries (-1)^N

    def epsilon(self, n):
        if self.depends_on_n:
            return self.coeff * (-1) ** n
        return self.coeff


def admissible_tuples(m_r):
    """All index tuples a with a_1 odd and odd successive gaps, with their
    weights: for m_r - l even, epsilon = (-1)^((m_r-l)/2) 2^l; for odd,
    epsilon = (-1)^(N + (m_r-l+1)/2) 2^l with the N-parity kept symbolic."""
    if m_r < 0:
        raise ValueError("m_r must be nonnegative")
    out = []

    def rec(prefix, last):
        lnow = len(prefix)
        rem = m_r - lnow
        if rem % 2 == 0:
            coeff = (-1) ** (rem // 2) * 2**lnow
            out.append(AdmissibleTuple(tuple(prefix), lnow, coeff, False))
        else:
            coeff = (-1) ** ((rem + 1) // 2) * 2**lnow
            out.append(AdmissibleTuple(tuple(prefix), lnow, coeff, True))
        start = 1 if not prefix else last + 1
        for nxt in range(start, m_r + 1):
            gap_ok = (nxt % 2 == 1) if not prefix else ((nxt - last) % 2 == 1)
            if gap_ok:
                rec(prefix + [nxt], nxt)

    rec([], 0)
    return sorted(out, key=lambda t: (t.l, t.a))


def omega_indicator(a, u_vector):
    """1 if each u_{p+j} lies strictly between the a_j-th and (a_j+1)-th
    order statistics of the first p coordinates (the a_j = p cell is open
    to +infinity), else 0."""
    a = tuple(a)
    u_vector = np.asarray(u_vector, dtype=float)
    l = len(a)
    p = len(u_vector) - l
    if p < 0 or (l and (max(a) > p or min(a) < 1)):
        raise ValueError("inconsistent tuple and coordinate vector")
    base = np.sort(u_vector[:p])
    for j, aj in enumerate(a):
        y = u_vector[p + j]
        lo = base[aj - 1]
        hi = base[aj] if aj < p else np.inf
        if not (lo < y < hi):
            return 0
    return 1
