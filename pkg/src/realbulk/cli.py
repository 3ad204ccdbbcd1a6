"""Batch experiment driver: config parsing, seeded orchestration of the
library modules, atomic persistence, and plot-data emission.

Config files are flat ``key = value`` lines (JSON as a fallback, detected
by a leading '{').  Flags override file keys.  Every run writes a manifest
first and data files atomically on completion; identical config plus seed
reproduces all Monte Carlo outputs bitwise regardless of worker count.

Exit codes: 0 success, 2 config error, 3 numerical failure.
"""

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import correlators as co
from . import dualities as du
from . import resolvents as rl
from . import schur as ps
from .ensembles import EnsembleSpec, sample_matrix, McmcDiagnosticError
from .io import save_matrix_binary, save_matrix_csv
from .linalg import ResolventCache, lemma_checks, pfaffian, real_spectrum

COMMANDS = (
    "sample", "eta", "conditions", "schur-verify", "spin-check", "fn-duality",
    "im", "stiefel", "ln-kn", "identities", "corr", "locallaw",
)

_KNOWN_KEYS = {
    "command", "output_dir", "master_seed", "workers",
    "ensemble.kind", "ensemble.n", "ensemble.seed", "ensemble.t",
    "ensemble.base.kind", "ensemble.base.n", "ensemble.base.seed",
    "n", "t", "z", "u", "delta", "eta", "gamma", "omega", "samples", "seed",
    "mr", "mc", "center", "sigma", "bins.half_width", "bins.side",
    "p", "q", "m", "tau", "lambdas", "steps", "burn_in", "scale",
    "grid.z_side", "grid.eta_points", "grid.pair_z", "grid.pair_eta",
    "quad.nodes", "quad.rel_tol", "quad.abs_tol", "quad.radius",
    "svg", "mc_samples", "count",
}


class ConfigError(ValueError):
    pass


def parse_config_text(text):
    text = text.strip()
    if not text:
        return {}
    if text.startswith("{"):
        return json.loads(text)
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"bad config line: {line!r}")
        key, _, val = line.partition("=")
        out[key.strip()] = val.strip()
    return out


def _coerce(val):
    if isinstance(val, (int, float, bool, list, dict)):
        return val
    s = str(val)
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    try:
        return complex(s)
    except ValueError:
        pass
    return s


def load_config(path=None, overrides=None):
    cfg = {}
    if path:
        cfg.update(parse_config_text(Path(path).read_text()))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, _, val = item.partition("=")
        cfg[key.strip()] = val.strip()
    unknown = set(cfg) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return {k: _coerce(v) for k, v in cfg.items()}


def _ensemble_from_cfg(cfg, default_n=64):
    kind = cfg.get("ensemble.kind", "ginoe")
    n = int(cfg.get("ensemble.n", cfg.get("n", default_n)))
    seed = int(cfg.get("ensemble.seed", cfg.get("master_seed", 0)))
    if kind == "gauss-divisible":
        base = EnsembleSpec(
            kind=cfg.get("ensemble.base.kind", "iid-rademacher"),
            n=n,
            seed=int(cfg.get("ensemble.base.seed", seed)),
        )
        return EnsembleSpec(kind=kind, n=n, seed=seed,
                            t=float(cfg.get("ensemble.t", cfg.get("t", 0.2))),
                            base=base)
    return EnsembleSpec(kind=kind, n=n, seed=seed)


def _workers(cfg):
    cap = os.environ.get("REALBULK_THREADS")
    w = int(cfg.get("workers", 1))
    if cap is not None:
        w = min(w, max(1, int(cap)))
    return max(1, w)


def _spectra(spec, count, workers):
    """Sampled spectra, reduced in stream order independent of workers."""
    def one(s):
        return s, real_spectrum(sample_matrix(spec, s))

    if workers == 1:
        return [one(s)[1] for s in range(count)]
    out = [None] * count
    with ThreadPoolExecutor(max_workers=workers) as ex:
        for s, sp in ex.map(one, range(count)):
            out[s] = sp
    return out


class OutputBundle:
    def __init__(self, out_dir, manifest):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.manifest = manifest
        self.files = []
        self._write_atomic("manifest.json", json.dumps(manifest, indent=2, default=str))

    def _write_atomic(self, name, text):
        tmp = self.dir / (name + ".tmp")
        tmp.write_text(text)
        tmp.replace(self.dir / name)
        self.files.append(name)

    def write_json(self, name, payload):
        self._write_atomic(name, json.dumps(payload, indent=2, default=str))

    def write_csv(self, name, header, rows):
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
        self._write_atomic(name, "\n".join(lines) + "\n")

    def finalize(self, started):
        man = dict(self.manifest)
        man["wall_time_s"] = time.time() - started
        man["files"] = [f for f in self.files if f != "manifest.json"]
        self._write_atomic("manifest.json", json.dumps(man, indent=2, default=str))


# ---------------------------------------------------------------------------
# Command implementations.  Each returns (payload-dict, failed: bool).


def _cmd_sample(cfg, bundle):
    spec = _ensemble_from_cfg(cfg)
    count = int(cfg.get("count", 1))
    for s in range(count):
        x = sample_matrix(spec, s)
        save_matrix_binary(bundle.dir / f"sample_{s:04d}.rblm", x)
        if s == 0:
            save_matrix_csv(bundle.dir / "sample_0000.csv", x)
    return {"ensemble": spec.to_dict(), "count": count}, False


def _cmd_eta(cfg, bundle):
    spec = _ensemble_from_cfg(cfg, default_n=128)
    x = sample_matrix(spec, 0)
    t = float(cfg.get("t", 0.1))
    side = int(cfg.get("grid.z_side", 8))
    omega = float(cfg.get("omega", 0.2))
    cache = ResolventCache(x)
    rows = []
    worst = 0.0
    lin = np.linspace(-np.sqrt(1 - omega), np.sqrt(1 - omega), side + 2)[1:-1]
    for a in lin:
        for b in lin:
            if a * a + b * b >= 1 - omega:
                continue
            z = complex(a, b)
            prof = rl.local_profile(x, z, t, cache=cache)
            sol_resid = abs(t * cache.trace_H(z, prof.eta) - 1.0)
            worst = max(worst, sol_resid)
            rows.append((a, b, prof.eta, prof.phi, prof.psi_log, prof.sigma,
                         prof.tau, sol_resid))
    bundle.write_csv(
        "eta_profile.csv",
        ["re_z", "im_z", "eta", "phi", "psi_log", "sigma", "tau", "residual"],
        rows,
    )
    return {"worst_residual": worst, "t": t}, worst > 1e-12


def _cmd_conditions(cfg, bundle):
    spec = _ensemble_from_cfg(cfg, default_n=256)
    x = sample_matrix(spec, 0)
    grid = rl.GridSpec(
        z_side=int(cfg.get("grid.z_side", 8)),
        eta_points=int(cfg.get("grid.eta_points", 12)),
        pair_z=int(cfg.get("grid.pair_z", 3)),
        pair_eta=int(cfg.get("grid.pair_eta", 3)),
    )
    rep = rl.check_conditions(
        x, float(cfg.get("gamma", 0.3)), float(cfg.get("omega", 0.2)), grid=grid
    )
    payload = {
        "schema": "rl-1",
        "gamma": rep.gamma,
        "omega": rep.omega,
        "grid": rep.grid,
        "records": {
            k: {
                "holds": r.holds,
                "extremal_constant": r.extremal_constant,
                "witness": str(r.witness),
            }
            for k, r in rep.records.items()
        },
        "all_hold": rep.all_hold,
    }
    bundle.write_json("conditions.json", payload)
    return payload, not rep.all_hold


def _cmd_schur_verify(cfg, bundle):
    spec = _ensemble_from_cfg(cfg, default_n=10)
    count = int(cfg.get("count", 20))
    rows = []
    worst = 0.0
    for s in range(count):
        x = sample_matrix(spec, s)
        sp = real_spectrum(x)
        p = min(int(cfg.get("p", 1)), len(sp.real_eigs))
        q = min(int(cfg.get("q", 1)), len(sp.complex_eigs))
        chain = ps.decompose(x, p, q)
        resid = float(np.abs(ps.reconstruct(chain) - x).max() / max(1e-300, np.abs(x).max()))
        worst = max(worst, resid)
        rows.append((s, p, q, chain.jacobian_log, resid))
        if s == 0:
            bundle._write_atomic("chain_0000.json", chain.to_json())
    bundle.write_csv("schur_verify.csv", ["stream", "p", "q", "jacobian_log", "residual"], rows)
    return {"worst_residual": worst, "count": count}, worst > 1e-10


def _cmd_spin_check(cfg, bundle):
    spec = _ensemble_from_cfg(cfg, default_n=20)
    count = int(cfg.get("count", 500))
    failures = sum(
        0 if ps.spin_identity_check(sample_matrix(spec, s)) else 1
        for s in range(count)
    )
    payload = {"samples": count, "failures": failures}
    bundle.write_json("spin_check.json", payload)
    return payload, failures > 0


def _cmd_fn_duality(cfg, bundle):
    n = int(cfg.get("n", 3))
    m = int(cfg.get("m", 2))
    tau = float(cfg.get("tau", 0.3))
    samples = int(cfg.get("samples", 100_000))
    seed = int(cfg.get("master_seed", 0))
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, n)) / np.sqrt(n)
    lam = np.linspace(-0.5, 0.5, m)
    a = du.fn_direct(x, lam, tau, samples, seed=seed + 1)
    b = du.fn_pfaffian(x, lam, tau, samples, seed=seed + 2)
    sig = abs(a.value - b.value) / max(np.hypot(a.stderr, b.stderr), 1e-300)
    payload = {
        "n": n, "m": m, "tau_entry": tau,
        "direct": {"value": str(a.value), "stderr": a.stderr, "samples": a.samples},
        "pfaffian": {"value": str(b.value), "stderr": b.stderr, "samples": b.samples},
        "agreement_sigma": float(sig),
        "global_sign": du.fn_global_sign(m, n),
    }
    bundle.write_json("fn_duality.json", payload)
    return payload, sig >= 3.0


def _cmd_im(cfg, bundle):
    samples = int(cfg.get("samples", 50_000))
    seed = int(cfg.get("master_seed", 0))
    rows = []
    for s in (0.5, 1.0, 2.0, 4.0):
        est = du.group_integral_Im([0.0, s], [], samples=samples, seed=seed)
        rows.append((s, est.value, est.stderr))
    bundle.write_csv("im_values.csv", ["separation", "value", "stderr"], rows)
    return {"rows": len(rows)}, False


def _cmd_stiefel(cfg, bundle):
    n = int(cfg.get("n", 8))
    samples = int(cfg.get("samples", 200_000))
    seed = int(cfg.get("master_seed", 0))
    rng = np.random.default_rng(seed)
    payload = {}
    failed = False
    for k in (1, 2):
        d = rng.uniform(0.1, 1.5, size=n)
        pair = du.stiefel_duality_check(
            n, k, d, alpha=0.8, samples=samples, seed=seed + k,
            quad=du.QuadratureSpec(nodes=40),
        )
        payload[f"k{k}"] = {
            "lhs": pair.lhs.value, "lhs_stderr": pair.lhs.stderr,
            "rhs": pair.rhs, "agreement_sigma": pair.agreement_sigma,
        }
        failed = failed or pair.agreement_sigma >= 3.0
    bundle.write_json("stiefel_duality.json", payload)
    return payload, failed


def _cmd_ln_kn(cfg, bundle):
    n = int(cfg.get("n", 8))
    t = float(cfg.get("t", 0.5))
    seed = int(cfg.get("master_seed", 0))
    samples = int(cfg.get("samples", 400_000))
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, n)) / np.sqrt(n)
    u = float(cfg.get("u", 0.2))
    kn = du.compute_Kn(x, u, t)
    kn_mc = du.kn_direct_mc(x, u, t, samples=samples, seed=seed + 1)
    z = complex(cfg.get("z", 0.3 + 0.25j))
    delta = float(cfg.get("delta", 0.3))
    nl = min(n, 6)
    xl = rng.standard_normal((nl, nl)) / np.sqrt(nl)
    ln = du.compute_Ln(xl, z, delta, t, quad=du.QuadratureSpec(nodes=40))
    ln_mc = du.ln_direct_mc(xl, z, delta, t, samples=samples, seed=seed + 2)
    sig_k = abs(kn - kn_mc.value) / kn_mc.stderr
    sig_l = abs(ln - ln_mc.value) / ln_mc.stderr
    payload = {
        "kn": {"quadrature": kn, "mc": kn_mc.value, "mc_stderr": kn_mc.stderr,
               "agreement_sigma": float(sig_k)},
        "ln": {"quadrature": ln, "mc": ln_mc.value, "mc_stderr": ln_mc.stderr,
               "agreement_sigma": float(sig_l)},
    }
    bundle.write_json("ln_kn.json", payload)
    return payload, sig_k >= 3.0 or sig_l >= 3.0


def _cmd_identities(cfg, bundle):
    n = int(cfg.get("n", 5))
    seed = int(cfg.get("master_seed", cfg.get("seed", 7)))
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, n)) / np.sqrt(n)
    z = complex(cfg.get("z", 0.3 + 0.4j))
    t = float(cfg.get("t", 0.25))
    dy = du.dubova_yang_check(x, z, float(cfg.get("delta", 0.7)),
                              float(cfg.get("eta", 0.2)))
    prof = rl.local_profile(x, z, t)
    tau_rhs = rl.tau_identity_value(x, z, t)
    tau_resid = abs(prof.tau - tau_rhs) / max(abs(prof.tau), 1e-300)
    lc = lemma_checks(seed, max(n, 3))
    rng2 = np.random.default_rng(seed + 1)
    a = rng2.standard_normal((6, 6)) + 1j * rng2.standard_normal((6, 6))
    s = a - a.T
    pf2 = pfaffian(s) ** 2
    det = np.linalg.det(s)
    pf_resid = abs(pf2 - det) / abs(det)
    payload = {
        "dubova_yang_residual": dy,
        "tau_identity_residual": float(tau_resid),
        "lemma_minor_resolvent_residual": lc.minor_resolvent_residual,
        "lemma_fischer_margin": lc.fischer_margin,
        "lemma_det_lower_margin": lc.det_lower_margin,
        "pf_squared_det_residual": float(pf_resid),
    }
    bundle.write_json("identities.json", payload)
    failed = (
        dy > 1e-10 or tau_resid > 1e-10 or not lc.all_ok or pf_resid > 1e-10
    )
    return payload, failed


def _cmd_corr(cfg, bundle):
    spec = _ensemble_from_cfg(cfg, default_n=128)
    samples = int(cfg.get("samples", 500))
    m_r = int(cfg.get("mr", 0))
    m_c = int(cfg.get("mc", 1))
    center = complex(cfg.get("center", 0.3 + 0.4j))
    workers = _workers(cfg)
    spectra = _spectra(spec, samples, workers)
    if cfg.get("sigma") is not None:
        sigma = float(cfg.get("sigma"))
    elif spec.kind == "gauss-divisible":
        a0, _ = __import__("realbulk.ensembles", fromlist=["gauss_divisible_parts"]).gauss_divisible_parts(spec, 0)
        sigma = rl.local_profile(a0, center, spec.t).sigma
    else:
        sigma = 1.0
    half = float(cfg.get("bins.half_width", 2.0))
    side = float(cfg.get("bins.side", 1.0))
    bins = co.BinGrid.regular(m_r, m_c, half_width=half, side=side)
    est = co.estimate_correlation(spectra, m_r, m_c, center, sigma, spec.n, bins)
    if (m_r, m_c) == (0, 1):
        pred = np.full(est.density.shape, co.ginoe_complex_kernel([center]))
        pred_err = None
    elif (m_r, m_c) in {(1, 0), (2, 0)}:
        if m_r == 1:
            centers = 0.5 * (bins.real_edges[0][:-1] + bins.real_edges[0][1:])
            kp = co.real_bulk_prediction(1, 0, centers,
                                         mc_samples=int(cfg.get("mc_samples", 20_000)))
            pred, pred_err = kp.values, kp.stderr
        else:
            raise ConfigError("corr command supports mr in {0,1} with mc in {0,1}")
    else:
        raise ConfigError("unsupported (mr, mc) for corr")
    rep = co.compare(est, pred, pred_err)
    rows = []
    it = np.nditer(est.density, flags=["multi_index"])
    for v in it:
        idx = it.multi_index
        rows.append(
            tuple(idx) + (float(v), float(est.stderr[idx]), float(np.asarray(pred)[idx]),
                          float(rep.z_scores[idx]))
        )
    bundle.write_csv(
        "corr.csv",
        [f"bin{i}" for i in range(len(est.density.shape))]
        + ["density", "stderr", "prediction", "z_score"],
        rows,
    )
    payload = {
        "sigma": sigma,
        "samples": samples,
        "chi_square": rep.chi_square,
        "dof": rep.dof,
        "max_sigma_deviation": rep.max_sigma_deviation,
    }
    bundle.write_json("corr_summary.json", payload)
    if cfg.get("svg"):
        _emit_svg(bundle, est, pred)
    return payload, rep.max_sigma_deviation > 4.0


def _emit_svg(bundle, est, pred):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.2))
    flat = est.density.ravel()
    ax.plot(flat, "o", label="estimate")
    ax.plot(np.asarray(pred).ravel(), "-", label="prediction")
    ax.set_xlabel("bin")
    ax.set_ylabel("density")
    ax.legend()
    fig.tight_layout()
    fig.savefig(bundle.dir / "corr.svg")
    plt.close(fig)
    bundle.files.append("corr.svg")


def _cmd_locallaw(cfg, bundle):
    spec = _ensemble_from_cfg(cfg, default_n=256)
    gap = rl.local_law_gap(
        spec,
        complex(cfg.get("z", 0.0)),
        float(cfg.get("eta", 0.1)),
        samples=int(cfg.get("samples", 20)),
        entry_samples=int(cfg.get("count", 5)),
    )
    payload = {
        "schema": "rl-1",
        "n": gap.n,
        "samples": gap.samples,
        "trace_gap_mean": gap.trace_gap_mean,
        "trace_gap_p95": gap.trace_gap_p95,
        "entry_gap_mean": gap.entry_gap_mean,
        "entry_gap_p95": gap.entry_gap_p95,
        "two_resolvent_gap_mean": gap.two_resolvent_gap_mean,
    }
    bundle.write_json("locallaw.json", payload)
    return payload, False


_DISPATCH = {
    "sample": _cmd_sample,
    "eta": _cmd_eta,
    "conditions": _cmd_conditions,
    "schur-verify": _cmd_schur_verify,
    "spin-check": _cmd_spin_check,
    "fn-duality": _cmd_fn_duality,
    "im": _cmd_im,
    "stiefel": _cmd_stiefel,
    "ln-kn": _cmd_ln_kn,
    "identities": _cmd_identities,
    "corr": _cmd_corr,
    "locallaw": _cmd_locallaw,
}


def run(command, cfg, out_dir):
    started = time.time()
    manifest = {
        "command": command,
        "config": dict(sorted(cfg.items())),
        "version": __version__,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    bundle = OutputBundle(out_dir, manifest)
    payload, failed = _DISPATCH[command](cfg, bundle)
    bundle.finalize(started)
    return bundle, payload, failed


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="realbulk",
        description="numerical experiments on bulk statistics of real "
        "Gauss-divisible matrices",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="key = value file or JSON")
    parser.add_argument("--output-dir", default="realbulk-out")
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        bundle, payload, failed = run(args.command, cfg, args.output_dir)
    except (McmcDiagnosticError, du.QuadratureError, np.linalg.LinAlgError,
            RuntimeError, OverflowError) as exc:
        diag = {"command": args.command, "error": str(exc), "type": type(exc).__name__}
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "diagnostic.json").write_text(json.dumps(diag, indent=2))
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(payload, indent=2, default=str))
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
