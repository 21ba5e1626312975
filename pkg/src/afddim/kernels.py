"""Hot inner loops: finite-constellation posterior means, nearest-point slicing
and the Gauss-Hermite MMSE sum.

Each kernel has a numba implementation and a chunked numpy implementation with
identical semantics; the public wrappers dispatch on the active backend (see
:mod:`afddim._backend`).
"""

import math

import numpy as np

from ._backend import HAVE_NUMBA, get_backend

# rows per numpy chunk; keeps the (rows x M) temporaries around a few MB
_CHUNK = 1 << 15
# Gauss-Hermite sum pruning (numba path): posterior terms below exp(-40) of the
# largest and node pairs below 1e-25 of the heaviest weight are dropped
_E_CUT = -40.0
_W_CUT = 1e-25


def _as_vector(value, n):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    return np.ascontiguousarray(arr.reshape(-1))


# ---------------------------------------------------------------------------
# numpy reference path


def _posterior_mean_np(x, scale, nvar, points, log_prior):
    out = np.empty_like(x)
    for lo in range(0, x.size, _CHUNK):
        sl = slice(lo, lo + _CHUNK)
        xs, ss, ns = x[sl], scale[sl], nvar[sl]
        diff = xs[:, None] - ss[:, None] * points[None, :]
        dist = diff.real**2 + diff.imag**2
        clean = ns <= 0.0
        noisy = ~clean
        res = np.empty(xs.size, dtype=np.complex128)
        if noisy.any():
            e = log_prior[None, :] - dist[noisy] / ns[noisy, None]
            e -= e.max(axis=1, keepdims=True)
            w = np.exp(e)
            res[noisy] = (w @ points) / w.sum(axis=1)
        if clean.any():
            res[clean] = points[np.argmin(dist[clean], axis=1)]
        out[sl] = res
    return out


def _nearest_index_np(x, points):
    out = np.empty(x.size, dtype=np.int64)
    for lo in range(0, x.size, _CHUNK):
        diff = x[lo:lo + _CHUNK, None] - points[None, :]
        # argmin returns the first minimum: ties go to the lowest index
        out[lo:lo + _CHUNK] = np.argmin(diff.real**2 + diff.imag**2, axis=1)
    return out


def _gh_mmse_np(points, prior, log_prior, sqrt_gamma, nodes, weights):
    z = (nodes[:, None] + 1j * nodes[None, :]).reshape(-1)
    wz = np.outer(weights, weights).reshape(-1) / math.pi
    total = 0.0
    for a in range(points.size):
        if prior[a] <= 0.0:
            continue
        shift = z[:, None] + sqrt_gamma * (points[a] - points[None, :])
        e = log_prior[None, :] - (shift.real**2 + shift.imag**2)
        e -= e.max(axis=1, keepdims=True)
        w = np.exp(e)
        xhat = (w @ points) / w.sum(axis=1)
        err = np.abs(points[a] - xhat) ** 2
        total += prior[a] * float(wz @ err)
    return total


# ---------------------------------------------------------------------------
# numba path

if HAVE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _posterior_mean_nb(x, scale, nvar, points, log_prior):
        n = x.shape[0]
        m = points.shape[0]
        out = np.empty(n, dtype=np.complex128)
        for i in range(n):
            xi = x[i]
            s = scale[i]
            if nvar[i] <= 0.0:
                best = 0
                bd = np.inf
                for k in range(m):
                    d = xi - s * points[k]
                    dd = d.real * d.real + d.imag * d.imag
                    if dd < bd:
                        bd = dd
                        best = k
                out[i] = points[best]
                continue
            inv = 1.0 / nvar[i]
            top = -np.inf
            for k in range(m):
                d = xi - s * points[k]
                e = log_prior[k] - (d.real * d.real + d.imag * d.imag) * inv
                if e > top:
                    top = e
            num = 0.0 + 0.0j
            den = 0.0
            for k in range(m):
                d = xi - s * points[k]
                w = math.exp(log_prior[k] - (d.real * d.real + d.imag * d.imag) * inv - top)
                num += w * points[k]
                den += w
            out[i] = num / den
        return out

    @njit(cache=True)
    def _nearest_index_nb(x, points):
        n = x.shape[0]
        m = points.shape[0]
        out = np.empty(n, dtype=np.int64)
        for i in range(n):
            best = 0
            bd = np.inf
            for k in range(m):
                d = x[i] - points[k]
                dd = d.real * d.real + d.imag * d.imag
                if dd < bd:
                    bd = dd
                    best = k
            out[i] = best
        return out

    @njit(cache=True)
    def _gh_mmse_nb(points, prior, log_prior, sqrt_gamma, nodes, weights):
        m = points.shape[0]
        g = nodes.shape[0]
        pr = points.real.copy()
        pi = points.imag.copy()
        dr = np.empty(m)
        di = np.empty(m)
        e = np.empty(m)
        wmax = weights.max() ** 2
        total = 0.0
        for a in range(m):
            if prior[a] <= 0.0:
                continue
            for b in range(m):
                dr[b] = sqrt_gamma * (pr[a] - pr[b])
                di[b] = sqrt_gamma * (pi[a] - pi[b])
            acc = 0.0
            for i in range(g):
                for j in range(g):
                    wij = weights[i] * weights[j]
                    # node pairs this light change the sum by < 1e-25 relative
                    if wij < _W_CUT * wmax:
                        continue
                    top = -np.inf
                    for b in range(m):
                        xr = nodes[i] + dr[b]
                        xi = nodes[j] + di[b]
                        e[b] = log_prior[b] - (xr * xr + xi * xi)
                        if e[b] > top:
                            top = e[b]
                    nr = 0.0
                    ni = 0.0
                    den = 0.0
                    for b in range(m):
                        t = e[b] - top
                        if t < _E_CUT:
                            continue
                        w = math.exp(t)
                        nr += w * pr[b]
                        ni += w * pi[b]
                        den += w
                    rr = pr[a] - nr / den
                    ri = pi[a] - ni / den
                    acc += wij * (rr * rr + ri * ri)
            total += prior[a] * acc
        return total / math.pi


# ---------------------------------------------------------------------------
# dispatch


def _use_numba():
    return HAVE_NUMBA and get_backend() == "numba"


def posterior_mean(x, scale, noise_var, points, log_prior):
    """Posterior mean of a finite-alphabet symbol observed as ``scale*s + noise``.

    ``noise_var`` is the total complex noise variance; entries ``<= 0`` fall
    back to the nearest scaled point (lowest index on ties).
    """
    x = np.ascontiguousarray(np.asarray(x, dtype=np.complex128).reshape(-1))
    scale = _as_vector(scale, x.size)
    nvar = _as_vector(noise_var, x.size)
    points = np.ascontiguousarray(points, dtype=np.complex128)
    log_prior = np.ascontiguousarray(log_prior, dtype=np.float64)
    if _use_numba():
        return _posterior_mean_nb(x, scale, nvar, points, log_prior)
    return _posterior_mean_np(x, scale, nvar, points, log_prior)


def nearest_index(x, points):
    x = np.ascontiguousarray(np.asarray(x, dtype=np.complex128).reshape(-1))
    points = np.ascontiguousarray(points, dtype=np.complex128)
    if _use_numba():
        return _nearest_index_nb(x, points)
    return _nearest_index_np(x, points)


def gh_mmse(points, prior, gamma, nodes, weights):
    """E|X - E[X|Y]|^2 for Y = sqrt(gamma) X + CN(0, 1) by tensor Gauss-Hermite."""
    points = np.ascontiguousarray(points, dtype=np.complex128)
    prior = np.ascontiguousarray(prior, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_prior = np.log(prior)
    sg = math.sqrt(gamma)
    if _use_numba():
        return float(_gh_mmse_nb(points, prior, log_prior, sg, nodes, weights))
    return _gh_mmse_np(points, prior, log_prior, sg, nodes, weights)
