"""Canonical models: the three-treatment trial, the investment assistant,
and the shoot-before-fireball preemption process."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import harm as _harm
from .hetanm import HarmInputs, closed_form_expected_harm
from .scm import ScmBuilder


def treatment_model():
    """Placebo T=0 and two treatments with identical recovery rates.

    Noise: e1 robustness (P=0.5), e2 resistance to treatment 1 (P=0.4),
    e3 allergy to treatment 2 (P=0.2). Default policy is T=0; U(a, y) = y.
    """
    b = ScmBuilder()
    b.exogenous("e1", [0, 1], [0.5, 0.5])
    b.exogenous("e2", [0, 1], [0.6, 0.4])
    b.exogenous("e3", [0, 1], [0.8, 0.2])
    b.variable("T", [0, 1, 2], fn=lambda: 0)

    def recover(t, e1, e2, e3):
        if t == 0:
            return int(e1 == 1)
        if t == 1:
            return int(e1 == 1 or e2 == 0)
        return int(e3 == 0)

    b.variable("Y", [0, 1], parents=["T"], exo=["e1", "e2", "e3"], fn=recover)
    scm = b.build(action="T", outcomes=["Y"])
    util = _harm.UtilityTable.for_scm(scm, lambda a, x, y: float(y[0]))
    return scm, util


def preemption_model():
    """Alice may shoot (A=1) at t=1; a fireball (P(F=1)=1) arrives at t=2.

    B1 = 1 - a (Bob starts alive), B2 = B1 and not F. Utility is the number
    of steps Bob is alive, U = b0 + b1 + b2 with b0 = 1.
    """
    b = ScmBuilder()
    b.exogenous("fireball", [0, 1], [0.0, 1.0])
    b.variable("A", [0, 1], fn=lambda: 0)
    b.variable("B1", [0, 1], parents=["A"], fn=lambda a: 1 - a)
    b.variable("B2", [0, 1], parents=["B1"], exo=["fireball"], fn=lambda b1, f: int(b1 and not f))
    scm = b.build(action="A", outcomes=["B1", "B2"])
    util = _harm.UtilityTable.for_scm(scm, lambda a, x, y: 1.0 + y[0] + y[1])
    return scm, util


def preemption_harm(action=1):
    """Expected harm of do(A=action) in the preemption process."""
    scm, util = preemption_model()
    return _harm.expected_harm(scm, util, action, {})


# -- investment assistant -------------------------------------------------


@dataclass(frozen=True)
class AssistantSpec:
    """Alice's investment: return ~ N(mean, sd^2); the assistant may scale it
    by K in [k_min, k_max] (action 1), add a sure bonus (action 2) or cancel
    and refund the principal (action 3). Default is action 1 with K = 1."""

    mean: float = 100.0
    sd: float = 100.0
    principal: float = 80.0
    bonus: float = 10.0
    k_min: float = 0.0
    k_max: float = 20.0

    def __post_init__(self):
        if not self.k_min <= 1.0 <= self.k_max:
            raise ValueError("K range must contain the default K = 1")

    def mean_sd(self, action, k=1.0):
        if action == 1:
            if not self.k_min <= k <= self.k_max:
                raise ValueError(f"K={k} outside [{self.k_min}, {self.k_max}]")
            return k * self.mean, abs(k) * self.sd
        if action == 2:
            return self.mean + self.bonus, self.sd
        if action == 3:
            return self.principal, 0.0
        raise ValueError(f"unknown action {action!r}")

    def expected_harm(self, action, k=1.0):
        # default a0 is action 1 with K = 1; U = y
        m, s = self.mean_sd(action, k)
        return closed_form_expected_harm(HarmInputs(m - self.mean, abs(s - self.sd)))


@dataclass(frozen=True)
class AssistantDecision:
    agent: str
    lam: float
    action: int
    k: float | None
    value: float
    candidates: dict = field(default_factory=dict)

    @property
    def expected_return(self):
        return self.candidates[self.action][2]


def _agent2_k(spec, lam):
    if lam == 0:
        return spec.k_max
    k = spec.mean / (2 * spec.sd**2 * lam)
    return min(max(k, spec.k_min), spec.k_max)


def assistant_decision(agent, lam=0.0, spec=None):
    """Decision of an expected-return ("eu-max"), mean-variance ("risk-averse")
    or harm-penalized ("harm-averse") assistant.

    Each candidate is (K or None, objective value, expected return). Ties go
    to the lower action number.
    """
    spec = spec or AssistantSpec()
    lam = float(lam)
    if lam < 0:
        raise ValueError("λ must be nonnegative")
    cands = {}
    if agent == "eu-max":
        cands[1] = (spec.k_max, spec.k_max * spec.mean, spec.k_max * spec.mean)
        cands[2] = (None, spec.mean + spec.bonus, spec.mean + spec.bonus)
        cands[3] = (None, spec.principal, spec.principal)
    elif agent == "risk-averse":
        k = _agent2_k(spec, lam)
        m1, s1 = spec.mean_sd(1, k)
        m2, s2 = spec.mean_sd(2)
        m3, s3 = spec.mean_sd(3)
        cands[1] = (k, m1 - lam * s1**2, m1)
        cands[2] = (None, m2 - lam * s2**2, m2)
        cands[3] = (None, m3 - lam * s3**2, m3)
    elif agent == "harm-averse":
        # HPU of action 1 is piecewise linear in K with a kink at K = 1
        best = None
        for k in sorted({spec.k_min, 1.0, spec.k_max}):
            m, _ = spec.mean_sd(1, k)
            v = m - lam * spec.expected_harm(1, k)
            if best is None or v > best[1]:
                best = (k, v, m)
        cands[1] = best
        for a in (2, 3):
            m, _ = spec.mean_sd(a)
            cands[a] = (None, m - lam * spec.expected_harm(a), m)
    else:
        raise ValueError(f"unknown agent {agent!r}; expected eu-max, risk-averse or harm-averse")
    top = max(v[1] for v in cands.values())
    action = min(a for a, v in cands.items() if v[1] == top)
    return AssistantDecision(agent, lam, action, cands[action][0], cands[action][1], cands)


def assistant_thresholds(spec=None):
    """Crossing points of the assistant objectives.

    - risk_averse_cancel: action 1 at its interior K ties action 3 (1/(4λ) = principal)
    - risk_averse_bonus: smaller λ at which action 1 ties action 2; action 3
      already dominates there, so action 2 is never chosen
    - harm_averse_slope: HPU slope of action 1 for K > 1 changes sign
    - harm_averse_switch: action 1 at K = k_max ties action 2
    """
    spec = spec or AssistantSpec()
    var = spec.sd**2
    cancel = spec.mean**2 / (4 * var * spec.principal)
    # mean^2/(4 var λ) = m2 - var λ  ->  var λ^2 - m2 λ + mean^2/(4 var) = 0
    m2 = spec.mean + spec.bonus
    disc = m2**2 - spec.mean**2
    bonus_root = (m2 - math.sqrt(disc)) / (2 * var)
    # for K > 1 the harm is (K - 1) times the harm of a unit step
    unit = closed_form_expected_harm(HarmInputs(spec.mean, spec.sd))
    slope = spec.mean / unit
    top_m, _ = spec.mean_sd(1, spec.k_max)
    switch = (top_m - m2) / spec.expected_harm(1, spec.k_max)
    return {
        "risk_averse_cancel": cancel,
        "risk_averse_bonus": bonus_root,
        "harm_averse_slope": slope,
        "harm_averse_switch": switch,
    }
