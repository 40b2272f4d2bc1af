"""Inner-loop kernels, each with a numba and a pure-numpy implementation.

The public names (``gather_groupwise``, ``mix``, ...) point at the numba
versions unless numba is missing or ``SSGMCMC_DISABLE_NUMBA`` is set. Both
implementations are kept importable under ``np_*`` / ``nb_*`` so tests and
``benchmarks/bench_kernels.py`` can compare them directly.

Binary mask entries are applied by selection rather than arithmetic, so a
mask of ones reproduces ``theta`` bit for bit (``1*x + 0*y`` loses the sign
of a negative zero and propagates NaN from ``y``).
"""
import numpy as np

from ._accel import USE_NUMBA, njit


# -- numpy path ---------------------------------------------------------------

def np_gather_groupwise(buf, idx, group_of):
    """Row ``idx[g(i)]`` of ``buf`` for every column ``i``."""
    return buf[idx[group_of], np.arange(buf.shape[1])]


def np_mix(theta, tilde, r, group_of):
    rg = r[group_of]
    out = rg * theta + (1.0 - rg) * tilde
    out = np.where(rg == 0.0, tilde, out)
    return np.where(rg == 1.0, theta, out)


def np_mix_from_store(theta, buf, idx, r, group_of):
    return np_mix(theta, np_gather_groupwise(buf, idx, group_of), r, group_of)


def np_scale_by_mask(grad, r, group_of):
    return grad * r[group_of]


def np_sokal_window(rho, c):
    """Adaptive truncation of ``1 + 2 * sum(rho[1:W+1])`` per column.

    ``rho`` has shape (n_lags, n_series) with ``rho[0] == 1``. Returns
    ``(tau, window, converged)``; where no lag satisfies ``W >= c * tau(W)``
    the full-length sum is returned with ``converged`` False.
    """
    n_lags, n_series = rho.shape
    if n_lags < 2:
        return (np.ones(n_series), np.zeros(n_series, dtype=np.int64),
                np.zeros(n_series, dtype=np.bool_))
    taus = 1.0 + 2.0 * np.cumsum(rho[1:], axis=0)
    lags = np.arange(1, n_lags, dtype=np.float64)[:, None]
    ok = lags >= c * taus
    converged = ok.any(axis=0)
    first = np.where(converged, ok.argmax(axis=0), n_lags - 2)
    tau = taus[first, np.arange(n_series)]
    return tau, (first + 1).astype(np.int64), converged


# -- numba path ---------------------------------------------------------------

@njit(cache=True)
def nb_gather_groupwise(buf, idx, group_of):
    p = buf.shape[1]
    out = np.empty(p)
    for i in range(p):
        out[i] = buf[idx[group_of[i]], i]
    return out


@njit(cache=True)
def nb_mix(theta, tilde, r, group_of):
    p = theta.shape[0]
    out = np.empty(p)
    for i in range(p):
        rg = r[group_of[i]]
        if rg == 1.0:
            out[i] = theta[i]
        elif rg == 0.0:
            out[i] = tilde[i]
        else:
            out[i] = rg * theta[i] + (1.0 - rg) * tilde[i]
    return out


@njit(cache=True)
def nb_mix_from_store(theta, buf, idx, r, group_of):
    p = theta.shape[0]
    out = np.empty(p)
    for i in range(p):
        g = group_of[i]
        rg = r[g]
        if rg == 1.0:
            out[i] = theta[i]
        elif rg == 0.0:
            out[i] = buf[idx[g], i]
        else:
            out[i] = rg * theta[i] + (1.0 - rg) * buf[idx[g], i]
    return out


@njit(cache=True)
def nb_scale_by_mask(grad, r, group_of):
    p = grad.shape[0]
    out = np.empty(p)
    for i in range(p):
        out[i] = grad[i] * r[group_of[i]]
    return out


@njit(cache=True)
def nb_sokal_window(rho, c):
    n_lags, n_series = rho.shape
    tau = np.ones(n_series)
    window = np.zeros(n_series, dtype=np.int64)
    converged = np.zeros(n_series, dtype=np.bool_)
    for j in range(n_series):
        acc = 1.0
        for w in range(1, n_lags):
            acc += 2.0 * rho[w, j]
            tau[j] = acc
            window[j] = w
            if w >= c * acc:
                converged[j] = True
                break
    return tau, window, converged


if USE_NUMBA:
    gather_groupwise = nb_gather_groupwise
    mix = nb_mix
    mix_from_store = nb_mix_from_store
    scale_by_mask = nb_scale_by_mask
    sokal_window = nb_sokal_window
else:
    gather_groupwise = np_gather_groupwise
    mix = np_mix
    mix_from_store = np_mix_from_store
    scale_by_mask = np_scale_by_mask
    sokal_window = np_sokal_window
