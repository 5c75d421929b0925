"""Hot numeric kernels for the bivariate Gaussian mixture math.

Every kernel has a pure-numpy implementation; when numba is importable the
kernels are additionally compiled with ``@njit``.  Set ``GEOMIX_NO_NUMBA=1``
to force the numpy path (useful for debugging and for the benchmark in
``benchmarks/bench_kernels.py``).

All kernels are elementwise over same-shape float64 arrays; broadcasting is
the caller's job.
"""

import os

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))

# Clamp floors.  SIGMA_MIN keeps sigma strictly positive even when the raw
# pre-softplus value is hugely negative; Q_MIN keeps 1 - rho^2 away from zero
# when rho saturates.  Both clamp zones are stop-gradient regions.
SIGMA_MIN = 1e-6
Q_MIN = 1e-9


def _component_log_pdf(d1, d2, s1, s2, rho):
    q = np.maximum(1.0 - rho * rho, Q_MIN)
    z = d1 * d1 / (s1 * s1) - 2.0 * rho * d1 * d2 / (s1 * s2) + d2 * d2 / (s2 * s2)
    return -LOG_2PI - np.log(s1) - np.log(s2) - 0.5 * np.log(q) - z / (2.0 * q)


def _log_pdf_partials(d1, d2, s1, s2, rho):
    q = np.maximum(1.0 - rho * rho, Q_MIN)
    z = d1 * d1 / (s1 * s1) - 2.0 * rho * d1 * d2 / (s1 * s2) + d2 * d2 / (s2 * s2)
    cross = d1 * d2 / (s1 * s2)
    dmu1 = (d1 / (s1 * s1) - rho * d2 / (s1 * s2)) / q
    dmu2 = (d2 / (s2 * s2) - rho * d1 / (s1 * s2)) / q
    ds1 = -1.0 / s1 + (d1 * d1 / (s1 * s1 * s1) - rho * cross / s1) / q
    ds2 = -1.0 / s2 + (d2 * d2 / (s2 * s2 * s2) - rho * cross / s2) / q
    drho = rho / q + cross / q - rho * z / (q * q)
    # clamped q is a stop-gradient region for rho
    drho = np.where(1.0 - rho * rho > Q_MIN, drho, 0.0)
    return dmu1, dmu2, ds1, ds2, drho


def _logsumexp_rows_np(a):
    m = np.max(a, axis=1)
    shift = np.where(np.isfinite(m), m, 0.0)
    s = np.sum(np.exp(a - shift[:, None]), axis=1)
    with np.errstate(divide="ignore"):
        out = shift + np.log(s)
    return np.where(m == -np.inf, -np.inf, out)


def _logsumexp_rows_loop(a):
    n, k = a.shape
    out = np.empty(n)
    for i in range(n):
        m = -np.inf
        for j in range(k):
            if a[i, j] > m:
                m = a[i, j]
        if m == -np.inf:
            out[i] = -np.inf
            continue
        s = 0.0
        for j in range(k):
            s += np.exp(a[i, j] - m)
        out[i] = m + np.log(s)
    return out


_DISABLED = os.environ.get("GEOMIX_NO_NUMBA", "") not in ("", "0")

if not _DISABLED:
    try:
        from numba import njit
    except ImportError:
        _DISABLED = True

if _DISABLED:
    component_log_pdf = _component_log_pdf
    log_pdf_partials = _log_pdf_partials
    logsumexp_rows = _logsumexp_rows_np
    NUMBA_ENABLED = False
else:
    component_log_pdf = njit(cache=True)(_component_log_pdf)
    log_pdf_partials = njit(cache=True)(_log_pdf_partials)
    logsumexp_rows = njit(cache=True)(_logsumexp_rows_loop)
    NUMBA_ENABLED = True
