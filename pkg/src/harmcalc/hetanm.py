"""Expected harm when the outcome is Gaussian with action-dependent mean and scale.

For Y_a = mu(a, x) + sum_k s_k(a, x) * eps_k with shared standard normal
eps_k, U = y and a deterministic default a0, the counterfactual utility
gap Y_a0 - Y_a is normal with mean -dU and standard deviation
s = ||s(a0) - s(a)||, so the expected harm is E[max(0, Y_a0 - Y_a)].

erfc is taken from the C library (``math.erfc``: the fdlibm rational
approximations, accurate to < 1 ulp). The harm is written with erfc
rather than ``erf - 1`` to avoid cancellation when dU >> s.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._accel import max_workers

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)
MC_SHARD = 1 << 18
GENERATOR = "numpy.random.Generator(PCG64), per-shard SeedSequence.spawn"


@dataclass(frozen=True)
class HarmInputs:
    delta_u: float
    s: float

    def __post_init__(self):
        if not (math.isfinite(self.delta_u) and math.isfinite(self.s)):
            raise ValueError("HarmInputs must be finite")
        if self.s < 0:
            raise ValueError(f"s must be nonnegative, got {self.s}")


def closed_form_expected_harm(inputs):
    """s/sqrt(2π)·exp(-dU²/2s²) + (dU/2)(erf(dU/(sqrt2·s)) - 1); max(0, -dU) at s = 0."""
    du, s = float(inputs.delta_u), float(inputs.s)
    if s == 0.0:
        return max(0.0, -du)
    z = du / s
    h = s * math.exp(-0.5 * z * z) / _SQRT2PI - 0.5 * du * math.erfc(z / _SQRT2)
    return max(0.0, h)


def closed_form_expected_benefit(inputs):
    """E[max(0, Y_a - Y_a0)]: the harm of the mirrored gap."""
    return closed_form_expected_harm(HarmInputs(-inputs.delta_u, inputs.s))


def expected_harm_array(delta_u, s):
    """Elementwise closed form over broadcast arrays."""
    du, ss = np.broadcast_arrays(np.asarray(delta_u, dtype=float), np.asarray(s, dtype=float))
    out = np.empty(du.shape)
    for idx in np.ndindex(du.shape):
        out[idx] = closed_form_expected_harm(HarmInputs(du[idx], ss[idx]))
    return out


@dataclass(frozen=True)
class HetAnm:
    """Heteroskedastic additive-noise outcome model in one context.

    ``mean(a, x)`` and each entry of ``scales`` (s_k(a, x)) may be callables
    or mappings from action to value. Scale coefficients may be signed; each
    multiplies an independent standard normal shared across interventions.
    ``actions`` is either a finite sequence or a closed interval (lo, hi)
    given via ``interval``.
    """

    mean: Callable | Mapping
    scales: Sequence
    default_action: object
    context: object = None
    actions: Sequence | None = None
    interval: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(self.scales))
        if self.actions is not None:
            object.__setattr__(self, "actions", tuple(self.actions))
        self.check_action(self.default_action)

    def check_action(self, a):
        if self.actions is not None and a not in self.actions:
            raise ValueError(f"action {a!r} not in {self.actions}")
        if self.interval is not None and not self.interval[0] <= a <= self.interval[1]:
            raise ValueError(f"action {a!r} outside {self.interval}")

    @staticmethod
    def _eval(fn, a, x):
        if isinstance(fn, Mapping):
            return float(fn[a])
        return float(fn(a, x))

    def mu(self, a):
        self.check_action(a)
        v = self._eval(self.mean, a, self.context)
        if not math.isfinite(v):
            raise ValueError(f"mean is not finite at {a!r}")
        return v

    def coefficients(self, a):
        self.check_action(a)
        c = np.array([self._eval(s, a, self.context) for s in self.scales], dtype=float)
        if not np.all(np.isfinite(c)):
            raise ValueError(f"scale terms are not finite at {a!r}")
        return c

    def coefficient_diff(self, a):
        """s_k(a0, x) - s_k(a, x) for every shared noise term."""
        return self.coefficients(self.default_action) - self.coefficients(a)

    def variance(self, a, extra=0.0):
        c = self.coefficients(a)
        return math.fsum(c * c) + extra

    def harm_inputs(self, a):
        return HarmInputs(self.mu(a) - self.mu(self.default_action), counterfactual_diff_std(self, a))


def counterfactual_diff_std(model, action):
    """Standard deviation of Y_a - Y_a0: sqrt(sum_k (s_k(a0) - s_k(a))^2)."""
    d = model.coefficient_diff(action)
    return math.sqrt(math.fsum(d * d))


def expected_harm(model, action):
    return closed_form_expected_harm(model.harm_inputs(action))


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    stderr: float
    n: int
    seed: int
    generator: str = GENERATOR


def _mc(model, action, n, seed, sign):
    n = int(n)
    if n < 1:
        raise ValueError("sample count must be at least 1")
    d = model.coefficient_diff(action)
    du = model.mu(action) - model.mu(model.default_action)
    sizes = [min(MC_SHARD, n - i) for i in range(0, n, MC_SHARD)]
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    def shard(i):
        rng = np.random.Generator(np.random.PCG64(children[i]))
        eps = rng.standard_normal((sizes[i], len(d)))
        return kernels.mc_harm_moments(eps, d, du, float(sign))

    workers = min(max_workers(), len(sizes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(shard, range(len(sizes))))
    else:
        parts = [shard(i) for i in range(len(sizes))]
    total = math.fsum(p[0] for p in parts)
    total_sq = math.fsum(p[1] for p in parts)
    mean = total / n
    if n == 1:
        return McEstimate(mean, math.inf, n, seed)
    var = max(0.0, (total_sq - n * mean * mean) / (n - 1))
    return McEstimate(mean, math.sqrt(var / n), n, seed)


def mc_expected_harm(model, action, n=1_000_000, seed=0):
    """Seeded Monte Carlo estimate of E[max(0, sum_k eps_k d_k - dU)], d_k = s_k(a0) - s_k(a)."""
    return _mc(model, action, n, seed, 1.0)


def mc_expected_benefit(model, action, n=1_000_000, seed=0):
    """Same draws as mc_expected_harm for equal seeds, mirrored integrand."""
    return _mc(model, action, n, seed, -1.0)


def single_noise_model(delta_u, delta_sigma, default=0, action=1):
    """Two-action model realizing a given (dU, Δσ) with one shared noise."""
    return HetAnm(mean={default: 0.0, action: float(delta_u)},
                  scales=({default: 0.0, action: float(delta_sigma)},),
                  default_action=default, actions=(default, action))
