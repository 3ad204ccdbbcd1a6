"""Hot numeric kernels: numba-compiled when available, pure numpy otherwise.

Set ``REALBULK_NO_NUMBA=1`` to force the pure-numpy path.  Both paths run
the same function body with the same floating-point operation order: the
real-arithmetic chain kernels are bitwise identical across paths, while the
complex pfaffian agrees to a few ULP (LLVM's complex multiply/divide rounds
differently from numpy's).  ``benchmarks/bench_kernels.py`` times the two
paths against each other.
"""

import os

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    _HAVE_NUMBA = False

NUMBA_DISABLED = os.environ.get("REALBULK_NO_NUMBA", "").lower() in ("1", "true", "yes")
JIT_ENABLED = _HAVE_NUMBA and not NUMBA_DISABLED


def _jit(fn):
    if JIT_ENABLED:
        return numba.njit(cache=True)(fn)
    return fn


# ---------------------------------------------------------------------------
# Pfaffian of complex skew-symmetric matrices (Parlett-Reid with pivoting).
# Sign convention: pf [[0, a], [-a, 0]] = +a; each row/column transposition
# flips the sign.


def _pfaffian_batch_impl(mats):
    nb = mats.shape[0]
    n = mats.shape[1]
    out = np.zeros(nb, dtype=np.complex128)
    if n % 2 == 1:
        return out
    for b in range(nb):
        a = mats[b].copy()
        pf = 1.0 + 0.0j
        for k in range(0, n - 1, 2):
            kp = k + 1
            big = abs(a[k + 1, k])
            for i in range(k + 2, n):
                if abs(a[i, k]) > big:
                    big = abs(a[i, k])
                    kp = i
            if kp != k + 1:
                for j in range(k, n):
                    tmp = a[k + 1, j]
                    a[k + 1, j] = a[kp, j]
                    a[kp, j] = tmp
                for i in range(k, n):
                    tmp = a[i, k + 1]
                    a[i, k + 1] = a[i, kp]
                    a[i, kp] = tmp
                pf = -pf
            if a[k + 1, k] == 0.0:
                pf = 0.0 + 0.0j
                break
            pf *= a[k, k + 1]
            if k + 2 < n:
                inv = 1.0 / a[k, k + 1]
                for i in range(k + 2, n):
                    ti = a[k, i] * inv
                    ai = a[i, k + 1]
                    for j in range(k + 2, n):
                        a[i, j] += ti * a[j, k + 1] - ai * a[k, j] * inv
        out[b] = pf
    return out


pfaffian_batch_py = _pfaffian_batch_impl
pfaffian_batch = _jit(_pfaffian_batch_impl)


# ---------------------------------------------------------------------------
# Geodesic random-walk Metropolis on the sphere S^{n-1} for the measure
# proportional to exp(-coef * ||X_u v||^2).  Proposal: rotate v towards a
# Gaussian tangent direction by angle scale * |xi|.  Randomness is supplied
# by the caller so the chain is reproducible and identical on both paths.


def _mu_chain_impl(a, v, coef, scale, tangent, angles, logu, adapt_mask, draws, thin):
    n = v.shape[0]
    steps = angles.shape[0]
    w = a @ v
    energy = 0.0
    for i in range(n):
        energy += w[i] * w[i]
    n_acc = 0
    acc_win = 0
    win = 0
    n_drawn = 0
    kept = 0
    for s in range(steps):
        g = tangent[s]
        dot = 0.0
        for i in range(n):
            dot += g[i] * v[i]
        tnorm = 0.0
        for i in range(n):
            ti = g[i] - dot * v[i]
            g[i] = ti
            tnorm += ti * ti
        tnorm = np.sqrt(tnorm)
        if tnorm > 0.0:
            theta = scale * angles[s]
            c = np.cos(theta)
            sn = np.sin(theta)
            vp = np.empty(n)
            for i in range(n):
                vp[i] = c * v[i] + sn * g[i] / tnorm
            nrm = 0.0
            for i in range(n):
                nrm += vp[i] * vp[i]
            nrm = np.sqrt(nrm)
            for i in range(n):
                vp[i] /= nrm
            wp = a @ vp
            ep = 0.0
            for i in range(n):
                ep += wp[i] * wp[i]
            if logu[s] < -coef * (ep - energy):
                v = vp
                w = wp
                energy = ep
                n_acc += 1
                acc_win += 1
        win += 1
        if adapt_mask[s] and win >= 200:
            rate = acc_win / win
            scale *= np.exp(0.33 * (rate - 0.4))
            if scale > np.pi:
                scale = np.pi
            acc_win = 0
            win = 0
        if not adapt_mask[s]:
            kept += 1
            if kept % thin == 0 and n_drawn < draws.shape[0]:
                for i in range(n):
                    draws[n_drawn, i] = v[i]
                n_drawn += 1
    return n_acc, scale, n_drawn


mu_chain_py = _mu_chain_impl
mu_chain = _jit(_mu_chain_impl)


# ---------------------------------------------------------------------------
# Metropolis on the Stiefel manifold O(n,2) via Givens-rotation proposals in
# a random coordinate plane.  Target: exp(-coef * [tr(V^T X^T X V)
# - 2 tr(Z^T V^T X V)]) with the constant tr(Z^T Z) dropped.


def _nu_energy_impl(xv, v, x, z11, z12, z21, z22):
    n = v.shape[0]
    e = 0.0
    for i in range(n):
        e += xv[i, 0] * xv[i, 0] + xv[i, 1] * xv[i, 1]
    q11 = 0.0
    q12 = 0.0
    q21 = 0.0
    q22 = 0.0
    for i in range(n):
        q11 += v[i, 0] * xv[i, 0]
        q12 += v[i, 0] * xv[i, 1]
        q21 += v[i, 1] * xv[i, 0]
        q22 += v[i, 1] * xv[i, 1]
    # tr(Z^T Q) = sum_ab Z_ab Q_ab with Q = V^T X V
    e -= 2.0 * (z11 * q11 + z12 * q12 + z21 * q21 + z22 * q22)
    return e


_nu_energy = _jit(_nu_energy_impl)


def _nu_chain_impl(x, v, coef, scale, z11, z12, z21, z22, pairs, angles, logu,
                   adapt_mask, draws, thin):
    n = v.shape[0]
    steps = angles.shape[0]
    xv = x @ v
    energy = _nu_energy(xv, v, x, z11, z12, z21, z22)
    n_acc = 0
    acc_win = 0
    win = 0
    n_drawn = 0
    kept = 0
    for s in range(steps):
        i = pairs[s, 0]
        j = pairs[s, 1]
        theta = scale * angles[s]
        c = np.cos(theta)
        sn = np.sin(theta)
        vi0 = v[i, 0]
        vi1 = v[i, 1]
        vj0 = v[j, 0]
        vj1 = v[j, 1]
        di0 = c * vi0 - sn * vj0 - vi0
        di1 = c * vi1 - sn * vj1 - vi1
        dj0 = sn * vi0 + c * vj0 - vj0
        dj1 = sn * vi1 + c * vj1 - vj1
        # rank-two update of V and XV
        v[i, 0] += di0
        v[i, 1] += di1
        v[j, 0] += dj0
        v[j, 1] += dj1
        xvp = xv.copy()
        for r in range(n):
            xvp[r, 0] += x[r, i] * di0 + x[r, j] * dj0
            xvp[r, 1] += x[r, i] * di1 + x[r, j] * dj1
        ep = _nu_energy(xvp, v, x, z11, z12, z21, z22)
        if logu[s] < -coef * (ep - energy):
            xv = xvp
            energy = ep
            n_acc += 1
            acc_win += 1
        else:
            v[i, 0] = vi0
            v[i, 1] = vi1
            v[j, 0] = vj0
            v[j, 1] = vj1
        win += 1
        if adapt_mask[s] and win >= 200:
            rate = acc_win / win
            scale *= np.exp(0.33 * (rate - 0.4))
            if scale > np.pi:
                scale = np.pi
            acc_win = 0
            win = 0
        if not adapt_mask[s]:
            kept += 1
            if kept % thin == 0 and n_drawn < draws.shape[0]:
                for r in range(n):
                    draws[n_drawn, r, 0] = v[r, 0]
                    draws[n_drawn, r, 1] = v[r, 1]
                n_drawn += 1
    return n_acc, scale, n_drawn


nu_chain_py = _nu_chain_impl
nu_chain = _jit(_nu_chain_impl)
