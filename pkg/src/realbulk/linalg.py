"""Dense matrix kernels: hermitization, resolvent traces, real spectra,
pfaffians, and the three auxiliary matrix inequalities as testable
predicates.

All normalised traces divide by the ambient dimension ``N``, which may
exceed the dimension of the matrix at hand.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels

__all__ = [
    "Hermitization",
    "SpectrumSplit",
    "SkewMatrix",
    "ResolventCache",
    "ResolventTraceSet",
    "hermitize",
    "resolvent_traces",
    "real_spectrum",
    "pfaffian",
    "pfaffian_batch",
    "lemma_checks",
]

_BLOCK_SYMBOLS = {
    "E1": np.array([[1.0, 0.0], [0.0, 0.0]]),
    "E2": np.array([[0.0, 0.0], [0.0, 1.0]]),
    "E+": np.array([[1.0, 0.0], [0.0, 1.0]]),
    "E-": np.array([[1.0, 0.0], [0.0, -1.0]]),
    "F": np.array([[0.0, 1.0], [0.0, 0.0]]),
    "F*": np.array([[0.0, 0.0], [1.0, 0.0]]),
}


@dataclass
class Hermitization:
    """2n x 2n Hermitian matrix [[0, X-z], [(X-z)*, 0]]."""

    z: complex
    base: np.ndarray
    assembled: np.ndarray


def hermitize(x, z):
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError("matrix must be square")
    n = x.shape[0]
    xz = x - z * np.eye(n)
    top = np.hstack([np.zeros((n, n)), xz])
    bot = np.hstack([xz.conj().T, np.zeros((n, n))])
    return Hermitization(z=z, base=x, assembled=np.vstack([top, bot]))


@dataclass
class SpectrumSplit:
    """Real eigenvalues plus upper-half-plane pair representatives."""

    real_eigs: np.ndarray
    complex_eigs: np.ndarray
    n: int

    def __post_init__(self):
        if len(self.real_eigs) + 2 * len(self.complex_eigs) != self.n:
            raise ValueError("eigenvalue count does not match dimension")


def real_spectrum(x, pair_tol=1e-14):
    """Split the spectrum of a real matrix into reals and one representative
    per complex-conjugate pair (Im > 0), via the LAPACK real Schur form
    (Francis implicitly-shifted QR).

    2x2 Schur blocks whose eigenvalues have |Im| <= pair_tol * scale are
    re-classified as two real eigenvalues.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if x.shape[0] != x.shape[1]:
        raise ValueError("matrix must be square")
    try:
        t = scipy.linalg.schur(x, output="real")[0]
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - rare
        raise RuntimeError(f"real Schur iteration failed at dimension {n}") from exc
    scale = max(np.abs(x).max(), 1.0)
    reals = []
    pairs = []
    i = 0
    while i < n:
        if i + 1 < n and t[i + 1, i] != 0.0:
            a, b, c = t[i, i], t[i, i + 1], t[i + 1, i]
            d = t[i + 1, i + 1]
            disc = (a - d) ** 2 / 4.0 + b * c
            if disc < -((pair_tol * scale) ** 2):
                xr = (a + d) / 2.0
                yi = np.sqrt(-disc)
                pairs.append(xr + 1j * yi)
            else:
                root = np.sqrt(max(disc, 0.0))
                reals.extend([(a + d) / 2.0 - root, (a + d) / 2.0 + root])
            i += 2
        else:
            reals.append(t[i, i])
            i += 1
    return SpectrumSplit(
        real_eigs=np.sort(np.array(reals)),
        complex_eigs=np.array(sorted(pairs, key=lambda w: (w.real, w.imag))),
        n=n,
    )


class SkewMatrix:
    """Exactly skew-symmetric matrix, stored via its strict upper triangle."""

    def __init__(self, upper):
        upper = np.asarray(upper)
        if upper.ndim != 2 or upper.shape[0] != upper.shape[1]:
            raise ValueError("expected a square array")
        self.dim = upper.shape[0]
        self._upper = np.triu(upper, k=1)

    @classmethod
    def from_dense(cls, mat, tol=0.0):
        mat = np.asarray(mat)
        if tol == 0.0:
            if not np.array_equal(mat, -mat.T):
                raise ValueError("matrix is not exactly skew-symmetric")
        elif np.abs(mat + mat.T).max() > tol:
            raise ValueError("matrix is not skew-symmetric within tolerance")
        return cls(mat)

    def full(self):
        return self._upper - self._upper.T


def pfaffian(s):
    """Pfaffian of a (complex) skew-symmetric matrix.

    Parlett-Reid tridiagonalisation with partial pivoting and transposition
    parity tracking; convention pf [[0, a], [-a, 0]] = +a.  Odd dimension
    returns exactly 0.
    """
    if isinstance(s, SkewMatrix):
        s = s.full()
    s = np.asarray(s, dtype=np.complex128)
    if s.shape[0] != s.shape[1]:
        raise ValueError("matrix must be square")
    if s.shape[0] % 2 == 1:
        return 0.0 + 0.0j
    val = _kernels.pfaffian_batch(s[None, :, :])[0]
    return complex(val)


def pfaffian_batch(mats):
    mats = np.ascontiguousarray(np.asarray(mats, dtype=np.complex128))
    return _kernels.pfaffian_batch(mats)


class ResolventCache:
    """Per-matrix cache of SVDs of X - z, reused across all spectral scales.

    For X - z = U diag(s) V*, the resolvents at scale eta are
    H_z(eta) = V diag(1/(eta^2+s^2)) V* and Ht_z(eta) = U diag(...) U*,
    and G_z(i eta) = Wt C Wt* with Wt = blockdiag(U, V) and a 2x2-per-
    singular-triplet core.
    """

    def __init__(self, x, ambient_n=None):
        self.x = np.asarray(x)
        self.n = self.x.shape[0]
        if self.x.shape[0] != self.x.shape[1]:
            raise ValueError("matrix must be square")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("matrix entries must be finite")
        self.ambient_n = self.n if ambient_n is None else int(ambient_n)
        if self.ambient_n < self.n:
            raise ValueError("ambient N must be at least the matrix dimension")
        self._svd = {}
        self._blocks = {}

    def svd(self, z):
        key = complex(z)
        hit = self._svd.get(key)
        if hit is None:
            xz = self.x - key * np.eye(self.n)
            u, s, vh = np.linalg.svd(xz)
            hit = (u, s, vh.conj().T)
            self._svd[key] = hit
        return hit

    def singular_values(self, z):
        return self.svd(z)[1]

    def norm(self, z=0.0):
        return self.singular_values(z)[0]

    # -- one-resolvent normalised traces -----------------------------------
    def trace_H(self, z, eta):
        s = self.singular_values(z)
        return np.sum(1.0 / (eta**2 + s**2)) / self.ambient_n

    def trace_Ht(self, z, eta):
        return self.trace_H(z, eta)

    def trace_H2(self, z, eta):
        s = self.singular_values(z)
        return np.sum(1.0 / (eta**2 + s**2) ** 2) / self.ambient_n

    def h_matrix(self, z, eta):
        u, s, v = self.svd(z)
        d = 1.0 / (eta**2 + s**2)
        return (v * d) @ v.conj().T

    def ht_matrix(self, z, eta):
        u, s, v = self.svd(z)
        d = 1.0 / (eta**2 + s**2)
        return (u * d) @ u.conj().T

    def g_matrix(self, z, eta):
        """Dense resolvent G_z(i eta) of the Hermitisation, (2n) x (2n)."""
        u, s, v = self.svd(z)
        d = 1.0 / (eta**2 + s**2)
        h = (v * d) @ v.conj().T
        ht = (u * d) @ u.conj().T
        xh = (u * (s * d)) @ v.conj().T
        g = np.empty((2 * self.n, 2 * self.n), dtype=complex)
        g[: self.n, : self.n] = 1j * eta * ht
        g[: self.n, self.n :] = xh
        g[self.n :, : self.n] = xh.conj().T
        g[self.n :, self.n :] = 1j * eta * h
        return g

    # -- two-resolvent normalised traces ------------------------------------
    def _cross_sq(self, kind, z1, z2):
        key = (kind, complex(z1), complex(z2))
        hit = self._blocks.get(key)
        if hit is None:
            u1, s1, v1 = self.svd(z1)
            u2, s2, v2 = self.svd(z2)
            left = v1 if kind[0] == "v" else u1
            right = v2 if kind[1] == "v" else u2
            hit = np.abs(left.conj().T @ right) ** 2
            if len(self._blocks) > 64:
                self._blocks.clear()
            self._blocks[key] = hit
        return hit

    def trace_HH(self, z1, eta1, z2, eta2):
        s1 = self.singular_values(z1)
        s2 = self.singular_values(z2)
        d1 = 1.0 / (eta1**2 + s1**2)
        d2 = 1.0 / (eta2**2 + s2**2)
        return float(d1 @ self._cross_sq("vv", z1, z2) @ d2) / self.ambient_n

    def trace_HtH(self, z1, eta1, z2, eta2):
        s1 = self.singular_values(z1)
        s2 = self.singular_values(z2)
        d1 = 1.0 / (eta1**2 + s1**2)
        d2 = 1.0 / (eta2**2 + s2**2)
        return float(d1 @ self._cross_sq("uv", z1, z2) @ d2) / self.ambient_n

    def trace_HtHt(self, z1, eta1, z2, eta2):
        s1 = self.singular_values(z1)
        s2 = self.singular_values(z2)
        d1 = 1.0 / (eta1**2 + s1**2)
        d2 = 1.0 / (eta2**2 + s2**2)
        return float(d1 @ self._cross_sq("uu", z1, z2) @ d2) / self.ambient_n

    def trace_H2X(self, z, eta):
        """<H_z(eta)^2 X_z>."""
        u, s, v = self.svd(z)
        d2 = 1.0 / (eta**2 + s**2) ** 2
        core = v.conj().T @ (u * (s * d2))
        return np.trace(core) / self.ambient_n

    def trace_HXXH(self, z, eta):
        """<H_z X_z^* X_zbar H_zbar> at a common eta."""
        u1, s1, v1 = self.svd(z)
        u2, s2, v2 = self.svd(np.conj(z))
        d1 = s1 / (eta**2 + s1**2)
        d2 = s2 / (eta**2 + s2**2)
        a = (u1.conj().T @ u2) * np.outer(d1, d2)
        b = v2.conj().T @ v1
        return np.sum(a * b.T) / self.ambient_n

    def trace_HXH(self, z1, eta1, z2, eta2):
        """<H_{z1} X_{z1}^* H_{z2}> (cross trace entering the tau identity)."""
        u1, s1, v1 = self.svd(z1)
        u2, s2, v2 = self.svd(z2)
        d1 = 1.0 / (eta1**2 + s1**2)
        d2 = 1.0 / (eta2**2 + s2**2)
        left = (v1 * (s1 * d1)) @ u1.conj().T
        right = (v2 * d2) @ v2.conj().T
        return np.sum(left.T * right) / self.ambient_n

    def g_blocks(self, z, eta):
        """Cached n-dim blocks (G_11, G_12, G_21, G_22) of G_z(i eta)."""
        key = (complex(z), float(eta))
        hit = self._blocks.get(key)
        if hit is None:
            u, s, v = self.svd(z)
            d = 1.0 / (eta**2 + s**2)
            h = (v * d) @ v.conj().T
            ht = (u * d) @ u.conj().T
            xh = (u * (s * d)) @ v.conj().T
            hit = (1j * eta * ht, xh, xh.conj().T, 1j * eta * h)
            if len(self._blocks) > 64:
                self._blocks.clear()
            self._blocks[key] = hit
        return hit

    def block_trace_table(self, z1, eta1, z2, eta2):
        """4x4 table T[ab, cd] = <G1_ab G2_cd> over the 2x2 block indices."""
        g1 = self.g_blocks(z1, eta1)
        g2 = self.g_blocks(z2, eta2)
        table = np.empty((2, 2, 2, 2), dtype=complex)
        for a in range(2):
            for b in range(2):
                t1 = g1[2 * a + b].T
                for c in range(2):
                    for d in range(2):
                        table[a, b, c, d] = np.sum(t1 * g2[2 * c + d])
        return table / self.ambient_n

    def trace_GBGB(self, z1, eta1, z2, eta2, b1, b2, table=None):
        """<G_{z1}(i eta1) B1 G_{z2}(i eta2) B2> with B in {E1,E2,E+,E-,F,F*}."""
        sym1 = _BLOCK_SYMBOLS[b1] if isinstance(b1, str) else np.asarray(b1)
        sym2 = _BLOCK_SYMBOLS[b2] if isinstance(b2, str) else np.asarray(b2)
        if table is None:
            table = self.block_trace_table(z1, eta1, z2, eta2)
        # tr(G1 B1 G2 B2) = sum sym1[b,c] sym2[d,a] tr(G1_ab G2_cd)
        return np.einsum("bc,da,abcd->", sym1, sym2, table)


@dataclass
class ResolventTraceSet:
    """Named normalised traces at a fixed (z1, eta1, z2, eta2) setting."""

    z1: complex
    eta1: float
    z2: complex = None
    eta2: float = None
    traces: dict = field(default_factory=dict)


_SINGLE_KINDS = {"H", "Ht", "H2", "H2X"}
_PAIR_KINDS = {"HH", "HtH", "HtHt", "HXXH"}


def resolvent_traces(x, kinds, z1, eta1, z2=None, eta2=None, ambient_n=None,
                     cache=None):
    """Evaluate a batch of normalised resolvent traces.

    ``kinds`` mixes single-point names ("H", "Ht", "H2", "H2X"), pair names
    ("HH", "HtH", "HtHt", "HXXH") and two-resolvent block traces written as
    "G:B1:B2" with B in {E1, E2, E+, E-, F, F*}.  Pair kinds require
    (z2, eta2); "HXXH" pairs z with its conjugate at the common eta1.
    """
    if eta1 <= 0 or (eta2 is not None and eta2 <= 0):
        raise ValueError("spectral scales eta must be positive")
    c = cache if cache is not None else ResolventCache(x, ambient_n)
    out = {}
    for kind in kinds:
        if kind == "H":
            out[kind] = c.trace_H(z1, eta1)
        elif kind == "Ht":
            out[kind] = c.trace_Ht(z1, eta1)
        elif kind == "H2":
            out[kind] = c.trace_H2(z1, eta1)
        elif kind == "H2X":
            out[kind] = c.trace_H2X(z1, eta1)
        elif kind == "HXXH":
            out[kind] = c.trace_HXXH(z1, eta1)
        elif kind in _PAIR_KINDS:
            if z2 is None or eta2 is None:
                raise ValueError(f"trace kind {kind} needs (z2, eta2)")
            fn = {"HH": c.trace_HH, "HtH": c.trace_HtH, "HtHt": c.trace_HtHt}[kind]
            out[kind] = fn(z1, eta1, z2, eta2)
        elif kind.startswith("G:"):
            _, b1, b2 = kind.split(":")
            zz2 = z1 if z2 is None else z2
            ee2 = eta1 if eta2 is None else eta2
            out[kind] = c.trace_GBGB(z1, eta1, zz2, ee2, b1, b2)
        else:
            raise ValueError(f"unknown trace kind {kind!r}")
    return ResolventTraceSet(z1=z1, eta1=eta1, z2=z2, eta2=eta2, traces=out)


# ---------------------------------------------------------------------------
# The three auxiliary inequalities / identities on seeded random inputs.


@dataclass
class LemmaChecks:
    minor_resolvent_ok: bool
    minor_resolvent_residual: float
    fischer_ok: bool
    fischer_margin: float
    det_lower_ok: bool
    det_lower_margin: float

    @property
    def all_ok(self):
        return self.minor_resolvent_ok and self.fischer_ok and self.det_lower_ok


def _haar_unitary(rng, n):
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def lemma_checks(seed, n, identity_tol=1e-10, margin_tol=1e-12):
    """Check, on seeded random inputs, (a) the minor-resolvent identity,
    (b) Fischer's inequality for PSD block matrices, (c) the determinant
    lower bound |det(X+iY)| >= det X * det^{1/2}(1 + Y^2/||X||^2).

    Failures are reported in the result, never raised.
    """
    if n < 3:
        raise ValueError("need n >= 3")
    rng = np.random.default_rng(seed)

    # (a) minor-resolvent identity
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    a += 2 * n * np.eye(n)  # keep well-conditioned
    u = _haar_unitary(rng, n)
    k = 1 + int(rng.integers(0, n - 2))
    uk, unk = u[:, :k], u[:, k:]
    b = unk.conj().T @ a @ unk
    lhs = u @ scipy.linalg.block_diag(np.zeros((k, k)), np.linalg.inv(b)) @ u.conj().T
    ainv = np.linalg.inv(a)
    core = np.linalg.inv(uk.conj().T @ ainv @ uk)
    rhs = ainv - ainv @ uk @ core @ uk.conj().T @ ainv
    resid = np.abs(lhs - rhs).max() / np.abs(ainv).max()
    minor_ok = resid <= identity_tol

    # (b) Fischer for a random PSD matrix with a random block split
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    psd = g.conj().T @ g
    k2 = 1 + int(rng.integers(0, n - 1))
    _, ld_full = np.linalg.slogdet(psd)
    _, ld_1 = np.linalg.slogdet(psd[:k2, :k2])
    _, ld_2 = np.linalg.slogdet(psd[k2:, k2:])
    fischer_margin = (ld_1 + ld_2) - ld_full
    fischer_ok = fischer_margin >= -margin_tol

    # (c) determinant lower bound
    gx = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    xpos = gx.conj().T @ gx + 0.5 * np.eye(n)
    hy = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    y = (hy + hy.conj().T) / 2
    _, ld_lhs = np.linalg.slogdet(xpos + 1j * y)
    _, ld_x = np.linalg.slogdet(xpos)
    norm_x = np.linalg.norm(xpos, 2)
    _, ld_bound = np.linalg.slogdet(np.eye(n) + (y @ y) / norm_x**2)
    det_margin = ld_lhs.real - (ld_x + 0.5 * ld_bound)
    det_ok = det_margin >= -margin_tol

    return LemmaChecks(
        minor_resolvent_ok=bool(minor_ok),
        minor_resolvent_residual=float(resid),
        fischer_ok=bool(fischer_ok),
        fischer_margin=float(fischer_margin),
        det_lower_ok=bool(det_ok),
        det_lower_margin=float(det_margin),
    )
