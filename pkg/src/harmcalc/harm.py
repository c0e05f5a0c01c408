"""Counterfactual harm and benefit, their expectations, and harm-penalized decisions.

Harm compares the world where the agent acts, do(A=a), with the world
under the default policy, do(∅), both driven by the same exogenous draw.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .scm import ModelError, ZeroProbabilityError, _fsum

TIE_TOL = 1e-12


class UtilityTable:
    """Total map U(a, x, y) stored densely as values[action, context, outcome].

    Contexts and outcomes are tuples of labels in the SCM's role order.
    """

    def __init__(self, actions, context_vars, context_domains, outcome_vars, outcome_domains, values):
        self.actions = tuple(actions)
        self.context_vars = tuple(context_vars)
        self.context_domains = tuple(tuple(d) for d in context_domains)
        self.outcome_vars = tuple(outcome_vars)
        self.outcome_domains = tuple(tuple(d) for d in outcome_domains)
        values = np.array(values, dtype=float)
        shape = (len(self.actions), _prod(len(d) for d in self.context_domains),
                 _prod(len(d) for d in self.outcome_domains))
        if values.shape != shape:
            raise ModelError(f"{type(self).__name__} has shape {values.shape}, expected {shape}")
        if not np.all(np.isfinite(values)):
            raise ModelError(f"{type(self).__name__} contains non-finite values")
        values.setflags(write=False)
        self.values = values

    @classmethod
    def for_scm(cls, scm, fn):
        """Tabulate ``fn(a, x, y)`` with x and y as label tuples in role order."""
        ctx = [scm.domain(c) for c in scm.roles.context]
        out = [scm.domain(y) for y in scm.roles.outcomes]
        t = cls(scm.actions, scm.roles.context, ctx, scm.roles.outcomes, out,
                np.zeros((len(scm.actions), _prod(len(d) for d in ctx), _prod(len(d) for d in out))))
        vals = np.empty(t.values.shape)
        for i, a in enumerate(t.actions):
            for j, x in enumerate(t.context_states()):
                for k, y in enumerate(t.outcome_states()):
                    vals[i, j, k] = fn(a, x, y)
        return cls(t.actions, t.context_vars, t.context_domains, t.outcome_vars, t.outcome_domains, vals)

    @classmethod
    def from_mapping(cls, scm, mapping):
        def lookup(a, x, y):
            try:
                return mapping[(a, x, y)]
            except KeyError:
                raise ModelError(f"{cls.__name__} is not total: missing entry for {(a, x, y)!r}") from None

        return cls.for_scm(scm, lookup)

    def context_states(self):
        return list(itertools.product(*self.context_domains))

    def outcome_states(self):
        return list(itertools.product(*self.outcome_domains))

    def _code(self, domains, labels, what):
        code = 0
        for d, v in zip(domains, labels):
            if v not in d:
                raise ModelError(f"{what} value {v!r} not in domain {d}")
            code = code * len(d) + d.index(v)
        return code

    def action_index(self, a):
        if a not in self.actions:
            raise ModelError(f"{a!r} is not in the action domain {self.actions}")
        return self.actions.index(a)

    def context_code(self, x):
        return self._code(self.context_domains, _as_tuple(x, self.context_vars), "context")

    def outcome_code(self, y):
        return self._code(self.outcome_domains, _as_tuple(y, self.outcome_vars), "outcome")

    def __call__(self, a, x, y):
        return float(self.values[self.action_index(a), self.context_code(x), self.outcome_code(y)])

    def check_compatible(self, scm):
        ok = (self.actions == tuple(scm.actions)
              and self.context_vars == scm.roles.context
              and self.outcome_vars == scm.roles.outcomes
              and self.context_domains == tuple(scm.domain(c) for c in scm.roles.context)
              and self.outcome_domains == tuple(scm.domain(y) for y in scm.roles.outcomes))
        if not ok:
            raise ModelError(f"{type(self).__name__} domains do not match the model's roles")


class Objective(UtilityTable):
    """A factual objective J(a, x, y); same layout as UtilityTable."""


def _prod(it):
    out = 1
    for n in it:
        out *= n
    return out


def _as_tuple(assignment, names):
    if assignment is None:
        assignment = {}
    if isinstance(assignment, dict):
        missing = [n for n in names if n not in assignment]
        if missing:
            raise ModelError(f"assignment is missing {missing}")
        return tuple(assignment[n] for n in names)
    assignment = tuple(assignment) if isinstance(assignment, (tuple, list)) else (assignment,)
    if len(assignment) != len(names):
        raise ModelError(f"expected values for {names}, got {assignment!r}")
    return assignment


def _context_dict(scm, context):
    return dict(zip(scm.roles.context, _as_tuple(context, scm.roles.context)))


def _outcome_dict(scm, outcome):
    return dict(zip(scm.roles.outcomes, _as_tuple(outcome, scm.roles.outcomes)))


def _codes(scm, worlds, names):
    code = np.zeros(worlds.shape[0], dtype=np.int64)
    for n in names:
        code = code * len(scm.domain(n)) + worlds[:, scm.var_index[n]]
    return code


class _Paired:
    """Factual do(A=a) and default-policy worlds restricted to one context."""

    def __init__(self, scm, util, action, context):
        util.check_compatible(scm)
        ctx = _context_dict(scm, context)
        self.scm = scm
        w0 = scm.worlds(None)
        wa = scm.worlds({scm.action: action})
        self.mask = scm.mask(w0, ctx)
        self.mass = _fsum(scm.prior[self.mask])
        if self.mass <= 0:
            raise ZeroProbabilityError(f"context {ctx} has probability zero")
        xc = util.context_code(ctx)
        ys = scm.roles.outcomes
        a_i = util.action_index(action)
        self.y_fact = _codes(scm, wa, ys)
        self.u_fact = util.values[a_i, xc][self.y_fact]
        a_star = w0[:, scm.var_index[scm.action]]
        self.u_cf = util.values[a_star, xc, _codes(scm, w0, ys)]
        self.prior = scm.prior

    def expect(self, values, mask=None):
        m = self.mask if mask is None else self.mask & mask
        z = _fsum(self.prior[m])
        if z <= 0:
            raise ZeroProbabilityError("conditioning event has probability zero")
        return _fsum(self.prior[m] * values[m]) / z

    def outcome_mask(self, util, outcome):
        return self.y_fact == util.outcome_code(outcome)


def harm(scm, util, action, context, outcome):
    """h(a, x, y): expected utility shortfall against the default world, given
    that do(A=a) in context x produced outcome y."""
    p = _Paired(scm, util, action, context)
    return p.expect(np.maximum(0.0, p.u_cf - p.u_fact), p.outcome_mask(util, _outcome_dict(scm, outcome)))


def benefit(scm, util, action, context, outcome):
    p = _Paired(scm, util, action, context)
    return p.expect(np.maximum(0.0, p.u_fact - p.u_cf), p.outcome_mask(util, _outcome_dict(scm, outcome)))


def _outcome_route(scm, util, action, context, sign):
    p = _Paired(scm, util, action, context)
    gap = np.maximum(0.0, sign * (p.u_cf - p.u_fact))
    terms = []
    for code in np.unique(p.y_fact[p.mask]):
        m = p.y_fact == code
        py = _fsum(p.prior[p.mask & m]) / p.mass
        if py > 0:
            terms.append(py * p.expect(gap, m))
    return math.fsum(terms)


def expected_harm(scm, util, action, context=None, route="noise"):
    """E[h | a, x]. ``route="outcome"`` sums P(y_a|x)·h(a,x,y) over outcomes
    instead of integrating directly over noise; the two agree to rounding."""
    if route == "outcome":
        return _outcome_route(scm, util, action, context, 1.0)
    if route != "noise":
        raise ValueError(f"unknown route {route!r}")
    p = _Paired(scm, util, action, context)
    return p.expect(np.maximum(0.0, p.u_cf - p.u_fact))


def expected_benefit(scm, util, action, context=None, route="noise"):
    if route == "outcome":
        return _outcome_route(scm, util, action, context, -1.0)
    if route != "noise":
        raise ValueError(f"unknown route {route!r}")
    p = _Paired(scm, util, action, context)
    return p.expect(np.maximum(0.0, p.u_fact - p.u_cf))


def expected_utility(scm, util, action, context=None):
    """E[U_a | x]."""
    p = _Paired(scm, util, action, context)
    return p.expect(p.u_fact)


def default_expected_utility(scm, util, context=None):
    """E[U | x] under the default policy, over the joint P(a, y | x)."""
    p = _Paired(scm, util, scm.actions[0], context)
    return p.expect(p.u_cf)


@dataclass(frozen=True)
class ActionStats:
    expected_utility: float
    expected_harm: float
    expected_benefit: float
    hpu: float


@dataclass(frozen=True)
class HarmReport:
    context: dict
    lam: float
    default_utility: float
    actions: dict = field(default_factory=dict)

    def residual(self, action):
        """Decomposition residual (E[U_a]-E[U]) - (E[b]-E[h])."""
        s = self.actions[action]
        return (s.expected_utility - self.default_utility) - (s.expected_benefit - s.expected_harm)

    def rows(self):
        for a, s in self.actions.items():
            yield a, s


def harm_report(scm, util, context=None, lam=0.0):
    """Expected utility, harm, benefit and HPU of every action in one context."""
    lam = float(lam)
    stats = {}
    default_u = None
    for a in scm.actions:
        p = _Paired(scm, util, a, context)
        eu = p.expect(p.u_fact)
        eh = p.expect(np.maximum(0.0, p.u_cf - p.u_fact))
        eb = p.expect(np.maximum(0.0, p.u_fact - p.u_cf))
        if default_u is None:
            default_u = p.expect(p.u_cf)
        stats[a] = ActionStats(eu, eh, eb, eu - lam * eh)
    return HarmReport(_context_dict(scm, context), lam, default_u, stats)


def hpu_value(scm, util, lam, action, context=None):
    """E[U_a | x] - λ·E[h | a, x]."""
    p = _Paired(scm, util, action, context)
    return p.expect(p.u_fact) - float(lam) * p.expect(np.maximum(0.0, p.u_cf - p.u_fact))


def _select(values, harms, order):
    """Argmax of values with near-ties (TIE_TOL) broken by lower harm, then order."""
    best = max(values[a] for a in order)
    tied = [a for a in order if values[a] >= best - TIE_TOL]
    low = min(harms[a] for a in tied)
    return next(a for a in tied if harms[a] == low)


def hpu_optimal_action(scm, util, lam, context=None):
    """Action maximizing the expected HPU, together with the full report."""
    lam = float(lam)
    if not math.isfinite(lam):
        raise ValueError("harm aversion must be finite")
    report = harm_report(scm, util, context, lam)
    vals = {a: s.hpu for a, s in report.actions.items()}
    harms = {a: s.expected_harm for a, s in report.actions.items()}
    return _select(vals, harms, list(scm.actions)), report


class Verdict(NamedTuple):
    flag: bool
    witness: object = None


def needless_harm_witness(stats, action, candidates=None):
    """Needless-harm check on precomputed (utility, harm) pairs.

    ``stats`` maps option -> (expected utility, expected harm). Returns the
    lowest-harm alternative with no less utility and strictly less harm.
    """
    u, h = stats[action]
    pool = [b for b in (candidates or stats) if b != action]
    hits = [b for b in pool if stats[b][0] >= u - TIE_TOL and stats[b][1] < h]
    if not hits:
        return Verdict(False, None)
    low = min(stats[b][1] for b in hits)
    return Verdict(True, next(b for b in hits if stats[b][1] == low))


def needlessly_harmful(scm, util, action, context=None):
    """True, with a witness a', if some a' has no lower expected utility and
    strictly lower expected harm than ``action``."""
    if action not in scm.actions:
        raise ModelError(f"{action!r} is not in the action domain {scm.actions}")
    report = harm_report(scm, util, context)
    stats = {a: (s.expected_utility, s.expected_harm) for a, s in report.actions.items()}
    return needless_harm_witness(stats, action, list(scm.actions))


def expected_objective(scm, obj, action, context=None):
    """E[J | a, x] = Σ_y P(y_a | x) J(a, x, y)."""
    p = _Paired(scm, obj, action, context)
    return p.expect(p.u_fact)


class ObjectiveVerdict(NamedTuple):
    flag: bool
    witness: object
    maximizers: tuple


def harmful_objective(scm, util, obj, context=None):
    """Whether some policy maximizing E[J|a,x] puts mass on a needlessly harmful action.

    Any mixture over the argmax set maximizes J, so the objective is harmful
    exactly when one of its deterministic maximizers is needlessly harmful;
    that maximizer is returned as the witness.
    """
    obj.check_compatible(scm)
    ej = {a: expected_objective(scm, obj, a, context) for a in scm.actions}
    best = max(ej.values())
    maximizers = tuple(a for a in scm.actions if ej[a] >= best - TIE_TOL)
    report = harm_report(scm, util, context)
    stats = {a: (s.expected_utility, s.expected_harm) for a, s in report.actions.items()}
    for a in maximizers:
        if needless_harm_witness(stats, a, list(scm.actions)).flag:
            return ObjectiveVerdict(True, a, maximizers)
    return ObjectiveVerdict(False, None, maximizers)


def hpu_objective(scm, util, lam, context=None):
    """J(a, x, y) = U(a, x, y) - λ·h(a, x, y) for the given model.

    Outcomes that cannot occur under do(A=a) in a context, and contexts of
    probability zero, keep J = U there.
    """
    lam = float(lam)
    vals = np.array(util.values, dtype=float)
    contexts = scm.contexts() if context is None else [_context_dict(scm, context)]
    for ctx in contexts:
        xc = util.context_code(ctx)
        for a in scm.actions:
            try:
                p = _Paired(scm, util, a, ctx)
            except ZeroProbabilityError:
                break
            gap = np.maximum(0.0, p.u_cf - p.u_fact)
            for code in np.unique(p.y_fact[p.mask]):
                m = p.y_fact == code
                if _fsum(p.prior[p.mask & m]) > 0:
                    vals[util.action_index(a), xc, code] -= lam * p.expect(gap, m)
    return Objective(util.actions, util.context_vars, util.context_domains,
                     util.outcome_vars, util.outcome_domains, vals)
