"""Aripiprazole dose-response GAM: restricted cubic spline mean, random-effect
scale, harm-penalized dosing and the shifted-population risk-aversion check.

Doses are in mg/day; utility is the PANSS reduction itself, and harm is
measured against the zero dose.
"""

from __future__ import annotations

import contextlib
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .hetanm import HarmInputs, HetAnm, closed_form_expected_harm


@dataclass(frozen=True)
class GamParams:
    theta1: float = 0.937
    theta2: float = -1.156
    v1: float = 0.03
    v2: float = 0.10
    knots: tuple = (0.0, 10.0, 30.0)
    v0: float = 0.0

    def __post_init__(self):
        if self.v1 < 0 or self.v2 < 0 or self.v0 < 0:
            raise ValueError("variances must be nonnegative")
        k1, k2, k3 = self.knots
        if not k1 < k2 < k3:
            raise ValueError(f"knots must be strictly increasing, got {self.knots}")


@dataclass(frozen=True)
class DoseGrid:
    lo: float = 0.0
    hi: float = 30.0
    step: float = 0.1
    lambdas: tuple = (0.0, 10.0, 100.0)

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("grid step must be positive")
        if self.lo < 0 or self.hi < self.lo:
            raise ValueError(f"invalid dose range [{self.lo}, {self.hi}]")

    @classmethod
    def parse(cls, spec, lambdas=(0.0, 10.0, 100.0)):
        """From a ``min:max:step`` string."""
        try:
            lo, hi, step = (float(p) for p in spec.split(":"))
        except ValueError:
            raise ValueError(f"grid must look like min:max:step, got {spec!r}") from None
        return cls(lo, hi, step, tuple(lambdas))

    def doses(self):
        n = int(math.floor((self.hi - self.lo) / self.step + 1e-9)) + 1
        return np.round(self.lo + self.step * np.arange(n), 10)


def _hinge3(u):
    return np.maximum(0.0, u) ** 3


def spline_f(a, params=None):
    """Restricted cubic spline basis term with knots k1 < k2 < k3."""
    p = params or GamParams()
    k1, k2, k3 = p.knots
    a = np.asarray(a, dtype=float)
    out = (_hinge3(a - k1)
           - (k3 - k1) / (k3 - k2) * _hinge3(a - k2)
           + (k2 - k1) / (k3 - k2) * _hinge3(a - k3)) / (k3 - k1) ** 2
    return float(out) if out.ndim == 0 else out


def dose_mean_and_sigma(a, params=None):
    """(mu(a), g(a)): mean response and the combined random-effect scale."""
    p = params or GamParams()
    f = spline_f(a, p)
    a = np.asarray(a, dtype=float) if not np.isscalar(a) else float(a)
    mu = p.theta1 * a + p.theta2 * f
    g = np.sqrt(a * a * p.v1 + f * f * p.v2)
    return mu, g


def dose_model(params=None, shifted=False):
    """HetAnm with one shared noise per random effect (plus eta when shifted).

    The sample noise eps0 is identical in every world and drops out of the
    harm, so it is not a term here.
    """
    p = params or GamParams()
    scales = [lambda a, x: a * math.sqrt(p.v1), lambda a, x: spline_f(a, p) * math.sqrt(p.v2)]
    if shifted:
        scales.append(lambda a, x: 10.0 - 0.5 * a)
    return HetAnm(mean=lambda a, x: p.theta1 * a + p.theta2 * spline_f(a, p),
                  scales=scales, default_action=0.0, interval=(0.0, math.inf))


def expected_harm_dose(a, params=None):
    """Expected harm of dose ``a`` against the zero dose (g(0) = 0)."""
    p = params or GamParams()
    mu, g = dose_mean_and_sigma(a, p)
    mu0, g0 = dose_mean_and_sigma(0.0, p)
    if np.ndim(mu) == 0:
        return closed_form_expected_harm(HarmInputs(float(mu - mu0), abs(float(g - g0))))
    return np.array([closed_form_expected_harm(HarmInputs(float(m - mu0), abs(float(s - g0))))
                     for m, s in zip(mu, g)])


def _argmax_lowest(values):
    # np.argmax already returns the first (lowest-dose) maximizer
    return int(np.argmax(values))


def hpu_curve(lam, params=None, grid=None):
    grid = grid or DoseGrid()
    doses = grid.doses()
    mu, _ = dose_mean_and_sigma(doses, params)
    return doses, mu - float(lam) * expected_harm_dose(doses, params)


def optimal_dose(lam, params=None, grid=None):
    """Grid dose maximizing mu(a) - λ·E[h|a]; ties go to the lower dose."""
    doses, v = hpu_curve(lam, params, grid)
    return float(doses[_argmax_lowest(v)])


@dataclass(frozen=True)
class DoseTable:
    doses: np.ndarray
    expected_utility: np.ndarray
    expected_harm: np.ndarray
    hpu: dict

    def optimum(self, lam):
        return float(self.doses[_argmax_lowest(self.hpu[lam])])


def dose_table(params=None, grid=None):
    grid = grid or DoseGrid()
    doses = grid.doses()
    mu, _ = dose_mean_and_sigma(doses, params)
    h = expected_harm_dose(doses, params)
    return DoseTable(doses, mu, h, {float(l): mu - float(l) * h for l in grid.lambdas})


def tradeoff_curve(params=None, grid=None):
    """Rows (dose, E[h|a]/E[h|a_max], E[U|a]/E[U|a_max]) for a <= a_max,
    where a_max is the expected-utility optimum on the grid."""
    grid = grid or DoseGrid()
    doses = grid.doses()
    mu, _ = dose_mean_and_sigma(doses, params)
    h = expected_harm_dose(doses, params)
    i = _argmax_lowest(mu)
    return [(float(doses[j]), float(h[j] / h[i]), float(mu[j] / mu[i])) for j in range(i + 1)]


def utility_at_harm_reduction(curve, reduction):
    """Best relative utility among rows whose relative harm is at most 1 - reduction."""
    ok = [u for _, rh, u in curve if rh <= 1.0 - reduction]
    return max(ok) if ok else None


@dataclass
class ShiftReport:
    mu_argmax: float
    hpu_argmax: dict = field(default_factory=dict)
    risk_argmax: dict = field(default_factory=dict)
    risk_needlessly_harmful: dict = field(default_factory=dict)
    risk_witness: dict = field(default_factory=dict)
    hpu_matches_mu: bool = False
    risk_exceeds_mu: bool = False
    risk_flagged: bool = False


def shifted_model_analysis(params=None, betas=(0.001, 0.01, 0.1), lambdas=(1.0, 10.0, 100.0), grid=None):
    """Dose choices once the outcome gains the extra noise term eta·(10 - 0.5a).

    The mean is unchanged. Harm uses the counterfactual difference of all
    shared noise coefficients; the risk-averse objective is
    mu(a) - β·Var[Y_a] with Var[Y_a] = g(a)² + (10 - 0.5a)² + V0. Each
    risk-averse choice is checked for needless harm against every grid dose.
    """
    p = params or GamParams()
    grid = grid or DoseGrid()
    doses = grid.doses()
    model = dose_model(p, shifted=True)
    mu, g = dose_mean_and_sigma(doses, p)
    h = np.array([closed_form_expected_harm(model.harm_inputs(float(a))) for a in doses])
    var = g * g + (10.0 - 0.5 * doses) ** 2 + p.v0
    i_mu = _argmax_lowest(mu)
    rep = ShiftReport(mu_argmax=float(doses[i_mu]))
    for lam in lambdas:
        rep.hpu_argmax[float(lam)] = float(doses[_argmax_lowest(mu - lam * h)])
    for beta in betas:
        j = _argmax_lowest(mu - beta * var)
        rep.risk_argmax[float(beta)] = float(doses[j])
        better = np.flatnonzero((mu >= mu[j]) & (h < h[j]))
        rep.risk_needlessly_harmful[float(beta)] = bool(better.size)
        if better.size:
            w = i_mu if i_mu in better else int(better[np.argmin(h[better])])
            rep.risk_witness[float(beta)] = float(doses[w])
    rep.hpu_matches_mu = all(v == rep.mu_argmax for v in rep.hpu_argmax.values())
    rep.risk_exceeds_mu = all(v > rep.mu_argmax for v in rep.risk_argmax.values())
    rep.risk_flagged = all(rep.risk_needlessly_harmful.values())
    return rep


def _fmt(x):
    return format(float(x), ".12g")


@contextlib.contextmanager
def _sink(target):
    # a path or an open text stream
    if hasattr(target, "write"):
        yield target
    else:
        with open(target, "w", newline="") as fh:
            yield fh


def write_dose_csv(path, table, meta=None):
    """Columns dose,expected_utility,expected_harm,hpu_lambda_<v>...; '#' metadata lines first."""
    with _sink(path) as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        lams = list(table.hpu)
        w.writerow(["dose", "expected_utility", "expected_harm"] + [f"hpu_lambda_{_fmt(l)}" for l in lams])
        for i, d in enumerate(table.doses):
            w.writerow([_fmt(d), _fmt(table.expected_utility[i]), _fmt(table.expected_harm[i])]
                       + [_fmt(table.hpu[l][i]) for l in lams])


def write_tradeoff_csv(path, curve, meta=None):
    with _sink(path) as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dose", "relative_harm", "relative_utility"])
        for row in curve:
            w.writerow([_fmt(x) for x in row])
