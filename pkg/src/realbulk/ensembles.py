"""Seeded samplers: i.i.d. matrix ensembles, Gauss-divisible matrices,
Haar frames on O(n,k) and U(m), and Metropolis chains for the Gaussian
measures on the sphere and on O(n,2).

All randomness is counter-based (Philox keyed by seed, stream and
substream) so parallel workers need no coordination and identical
(spec, stream) pairs give bitwise-identical samples.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

__all__ = [
    "EnsembleSpec",
    "StiefelPoint",
    "MarkovChainConfig",
    "McmcResult",
    "McmcDiagnosticError",
    "stream_generator",
    "sample_matrix",
    "gauss_divisible_parts",
    "haar_frame",
    "haar_unitary",
    "sample_mu",
    "sample_nu",
]

_KINDS = ("ginoe", "iid-gaussian", "iid-rademacher", "iid-uniform", "gauss-divisible")

_MASK64 = (1 << 64) - 1


def stream_generator(seed, stream, substream=0):
    """Counter-based generator keyed by (seed, stream, substream)."""
    key = np.array(
        [seed & _MASK64, ((stream & _MASK64) << 8 | (substream & 0xFF)) & _MASK64],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class EnsembleSpec:
    kind: str
    n: int
    seed: int
    t: float = None
    base: "EnsembleSpec" = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("dimension must be positive")
        if self.kind == "gauss-divisible":
            if self.t is None or self.t <= 0:
                raise ValueError("gauss-divisible requires t > 0")
            if self.base is None:
                raise ValueError("gauss-divisible requires a base spec")
            if self.base.n != self.n:
                raise ValueError("base dimension mismatch")
        elif self.t is not None:
            raise ValueError(f"t is only meaningful for gauss-divisible, got kind {self.kind!r}")

    def to_dict(self):
        d = {"kind": self.kind, "n": self.n, "seed": self.seed}
        if self.kind == "gauss-divisible":
            d["t"] = self.t
            d["base"] = self.base.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        base = d.get("base")
        return cls(
            kind=d["kind"],
            n=int(d["n"]),
            seed=int(d["seed"]),
            t=d.get("t"),
            base=cls.from_dict(base) if base else None,
        )


def _iid_entries(kind, n, rng):
    if kind in ("ginoe", "iid-gaussian"):
        return rng.standard_normal((n, n)) / np.sqrt(n)
    if kind == "iid-rademacher":
        return (2.0 * rng.integers(0, 2, size=(n, n)) - 1.0) / np.sqrt(n)
    if kind == "iid-uniform":
        half = np.sqrt(3.0 / n)
        return rng.uniform(-half, half, size=(n, n))
    raise ValueError(kind)


def sample_matrix(spec, stream):
    """Draw one matrix; deterministic given (spec, stream).

    Entry laws have mean zero and variance 1/n.  Gauss-divisible samples
    are base + sqrt(t) * ginoe with the noise on an independent substream,
    so ``sample_matrix(spec, s) - sqrt(t) * noise == sample_matrix(spec.base, s)``
    holds bitwise (see ``gauss_divisible_parts``).
    """
    if spec.kind == "gauss-divisible":
        a, b = gauss_divisible_parts(spec, stream)
        return a + np.sqrt(spec.t) * b
    rng = stream_generator(spec.seed, stream, 0)
    return _iid_entries(spec.kind, spec.n, rng)


def gauss_divisible_parts(spec, stream):
    """Return (base sample, unit-variance ginoe noise) for a gauss-divisible spec."""
    if spec.kind != "gauss-divisible":
        raise ValueError("spec is not gauss-divisible")
    a = sample_matrix(spec.base, stream)
    noise_rng = stream_generator(spec.seed, stream, 1)
    b = noise_rng.standard_normal((spec.n, spec.n)) / np.sqrt(spec.n)
    return a, b


@dataclass
class StiefelPoint:
    """n x k real frame with orthonormal columns."""

    n: int
    k: int
    frame: np.ndarray

    def __post_init__(self):
        gram = self.frame.T @ self.frame
        if np.abs(gram - np.eye(self.k)).max() > 1e-12:
            raise ValueError("frame columns are not orthonormal to 1e-12")


def haar_frame(n, k, rng):
    """Haar frame on O(n,k) via QR with R-diagonal sign correction."""
    if k > n:
        raise ValueError("need k <= n")
    if isinstance(rng, (int, np.integer)):
        rng = stream_generator(rng, 0)
    g = rng.standard_normal((n, k))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))
    return StiefelPoint(n=n, k=k, frame=q)


def haar_unitary(m, rng):
    """Haar unitary on U(m) via QR with R-diagonal phase correction."""
    if isinstance(rng, (int, np.integer)):
        rng = stream_generator(rng, 0)
    z = (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def haar_frames_batch(n, k, count, rng):
    """Vectorised batch of Haar O(n,k) frames, shape (count, n, k)."""
    g = rng.standard_normal((count, n, k))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.einsum("bii->bi", r))
    return q * signs[:, None, :]


class McmcDiagnosticError(RuntimeError):
    """Raised when a chain's acceptance rate stays outside [0.1, 0.9]."""


def _check_rate(rate, scale, label):
    # Proposal angles are capped at pi (a global move), so high acceptance
    # at the cap means a near-flat target, not a tuning failure.
    if rate < 0.1 or (rate > 0.9 and scale < np.pi * (1 - 1e-12)):
        raise McmcDiagnosticError(
            f"{label} chain acceptance rate {rate:.3f} outside [0.1, 0.9] "
            f"(tuned scale {scale:.3g})"
        )


@dataclass
class MarkovChainConfig:
    steps: int
    burn_in: int
    proposal_scale: float
    target: str  # "mu" | "nu"
    params: dict
    thin: int = 1
    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        if not (self.steps > self.burn_in >= 0):
            raise ValueError("need steps > burn_in >= 0")
        if self.proposal_scale <= 0:
            raise ValueError("proposal scale must be positive")
        if self.target not in ("mu", "nu"):
            raise ValueError("target must be 'mu' or 'nu'")


@dataclass
class McmcResult:
    points: list
    acceptance_rate: float
    tuned_scale: float
    config: MarkovChainConfig = field(repr=False, default=None)


def _z_block(z, delta):
    """2x2 block [[x, b], [-c, x]] with b - c = delta, b c = y^2, b >= c."""
    x, y = z.real, z.imag
    b = (delta + np.sqrt(delta**2 + 4.0 * y**2)) / 2.0
    c = b - delta
    return x, b, c


def sample_mu(cfg):
    """Metropolis samples from mu_n( . ; u, X), the Gaussian sphere measure
    with density proportional to exp(-(N/2t) ||X_u v||^2).

    Geodesic random-walk proposals; the proposal scale is auto-tuned towards
    40% acceptance during burn-in.
    """
    x = np.asarray(cfg.params["X"], dtype=float)
    u = float(cfg.params["u"])
    t = float(cfg.params["t"])
    ambient_n = int(cfg.params.get("ambient_N", x.shape[0]))
    n = x.shape[0]
    xu = x - u * np.eye(n)
    coef = ambient_n / (2.0 * t)

    rng = stream_generator(cfg.seed, cfg.stream, 2)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)

    n_keep = (cfg.steps - cfg.burn_in) // cfg.thin
    draws = np.empty((n_keep, n))
    tangent = rng.standard_normal((cfg.steps, n))
    angles = rng.standard_normal(cfg.steps)
    logu = np.log(rng.uniform(size=cfg.steps))
    adapt = np.arange(cfg.steps) < cfg.burn_in

    n_acc, scale, n_drawn = _kernels.mu_chain(
        np.ascontiguousarray(xu), v, coef, cfg.proposal_scale, tangent, angles,
        logu, adapt, draws, cfg.thin,
    )
    rate = n_acc / cfg.steps
    _check_rate(rate, scale, "mu")
    pts = [StiefelPoint(n=n, k=1, frame=draws[i][:, None]) for i in range(n_drawn)]
    return McmcResult(points=pts, acceptance_rate=rate, tuned_scale=scale, config=cfg)


def sample_nu(cfg):
    """Metropolis samples from nu_n( . ; delta, z, X) on O(n,2).

    Proposals rotate a random coordinate pair of rows by a Gaussian Givens
    angle; scale auto-tuned towards 40% acceptance during burn-in.
    """
    x = np.asarray(cfg.params["X"], dtype=float)
    z = complex(cfg.params["z"])
    delta = float(cfg.params["delta"])
    t = float(cfg.params["t"])
    ambient_n = int(cfg.params.get("ambient_N", x.shape[0]))
    n = x.shape[0]
    if delta < 0 or z.imag < 0:
        raise ValueError("need delta >= 0 and Im z >= 0")
    xx, b, c = _z_block(z, delta)
    coef = ambient_n / (2.0 * t)

    rng = stream_generator(cfg.seed, cfg.stream, 3)
    v0 = haar_frame(n, 2, rng).frame.copy()

    n_keep = (cfg.steps - cfg.burn_in) // cfg.thin
    draws = np.empty((n_keep, n, 2))
    pairs = np.empty((cfg.steps, 2), dtype=np.int64)
    pairs[:, 0] = rng.integers(0, n, size=cfg.steps)
    pairs[:, 1] = rng.integers(0, n - 1, size=cfg.steps)
    pairs[:, 1] = np.where(pairs[:, 1] >= pairs[:, 0], pairs[:, 1] + 1, pairs[:, 1])
    angles = rng.standard_normal(cfg.steps)
    logu = np.log(rng.uniform(size=cfg.steps))
    adapt = np.arange(cfg.steps) < cfg.burn_in

    # Z = [[x, b], [-c, x]]
    n_acc, scale, n_drawn = _kernels.nu_chain(
        np.ascontiguousarray(x), v0, coef, cfg.proposal_scale,
        xx, b, -c, xx, pairs, angles, logu, adapt, draws, cfg.thin,
    )
    rate = n_acc / cfg.steps
    _check_rate(rate, scale, "nu")
    pts = [StiefelPoint(n=n, k=2, frame=draws[i].copy()) for i in range(n_drawn)]
    return McmcResult(points=pts, acceptance_rate=rate, tuned_scale=scale, config=cfg)
