"""Hot loops: world evaluation over enumerated noise states and the
Monte Carlo harm reduction.

Each kernel has a numba version and a numpy version with the same
signature. The public names bind to the numba version when it is
available (see ``harmcalc._accel``); both are importable for benchmarks
and equivalence tests.
"""

import numpy as np

from ._accel import HAS_NUMBA, njit


def evaluate_worlds_numpy(noise, clamp, order, n_inputs, input_kind, input_src, input_stride,
                          table_offset, flat_table):
    """Evaluate every endogenous variable for each row of ``noise``.

    ``noise`` is an (S, n_exo) array of exogenous value indices and
    ``clamp`` holds a value index per endogenous variable, or -1 where the
    mechanism stays in place. Mechanism inputs are described per variable
    by kind (0 endogenous column, 1 noise column), source column and table
    stride. Returns an (S, n_var) int64 array of value indices.
    """
    n_states = noise.shape[0]
    n_var = clamp.shape[0]
    out = np.empty((n_states, n_var), dtype=np.int64)
    for i in order:
        if clamp[i] >= 0:
            out[:, i] = clamp[i]
            continue
        idx = np.full(n_states, table_offset[i], dtype=np.int64)
        for j in range(n_inputs[i]):
            col = out[:, input_src[i, j]] if input_kind[i, j] == 0 else noise[:, input_src[i, j]]
            idx += col * input_stride[i, j]
        out[:, i] = flat_table[idx]
    return out


def mc_harm_moments_numpy(eps, coef_diff, delta_u, sign):
    """Sum and sum of squares of ``max(0, sign * (eps @ coef_diff - delta_u))``.

    sign=+1 gives the harm integrand, sign=-1 the benefit integrand.
    """
    z = sign * (eps @ coef_diff - delta_u)
    np.maximum(z, 0.0, out=z)
    return float(z.sum()), float(np.dot(z, z))


@njit(cache=True, nogil=True)
def _evaluate_worlds_jit(noise, clamp, order, n_inputs, input_kind, input_src, input_stride,
                         table_offset, flat_table):
    n_states = noise.shape[0]
    n_var = clamp.shape[0]
    out = np.empty((n_states, n_var), dtype=np.int64)
    for s in range(n_states):
        for k in range(n_var):
            i = order[k]
            if clamp[i] >= 0:
                out[s, i] = clamp[i]
                continue
            idx = table_offset[i]
            for j in range(n_inputs[i]):
                if input_kind[i, j] == 0:
                    idx += out[s, input_src[i, j]] * input_stride[i, j]
                else:
                    idx += noise[s, input_src[i, j]] * input_stride[i, j]
            out[s, i] = flat_table[idx]
    return out


@njit(cache=True, nogil=True)
def _mc_harm_moments_jit(eps, coef_diff, delta_u, sign):
    total = 0.0
    total_sq = 0.0
    n, k = eps.shape
    for s in range(n):
        z = -delta_u
        for j in range(k):
            z += eps[s, j] * coef_diff[j]
        z *= sign
        if z > 0.0:
            total += z
            total_sq += z * z
    return total, total_sq


ACCELERATED = HAS_NUMBA

if HAS_NUMBA:
    evaluate_worlds_numba = _evaluate_worlds_jit
    mc_harm_moments_numba = _mc_harm_moments_jit
    evaluate_worlds = _evaluate_worlds_jit
    mc_harm_moments = _mc_harm_moments_jit
else:
    evaluate_worlds_numba = None
    mc_harm_moments_numba = None
    evaluate_worlds = evaluate_worlds_numpy
    mc_harm_moments = mc_harm_moments_numpy
