"""Counterfactually independent (CFI) outcome models and the distribution
shifts that expose harmful objectives.

A CFI model, for one context x, gives every action its own outcome noise
E(a) with dom(E(a)) = dom(Y) and sets Y_a = E(a). Outcomes of distinct
actions are independent, except for at most one coupled (a, a0) pair whose
joint is the product perturbed by ±φ on the binary cells. Every interventional
marginal is untouched by the perturbation, so any factual objective scores
the base and shifted models identically while the harm of ``a`` moves.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import harm as _harm
from .harm import TIE_TOL, Objective, UtilityTable, needless_harm_witness
from .scm import PROB_TOL, ModelError, ScmBuilder

MIXED_ACTION = "tau"


class OutcomeDependenceError(ModelError):
    """Utility ranges of the requested actions do not overlap."""


def _check_distribution(probs, what):
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ModelError(f"{what} must be a nonempty probability vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ModelError(f"{what} has negative or non-finite entries")
    if abs(math.fsum(p) - 1.0) > PROB_TOL:
        raise ModelError(f"{what} sums to {math.fsum(p)!r}, not 1")
    return p


@dataclass(frozen=True)
class CoupledPair:
    """Joint table of (E(a), E(a0)) on their binary levels, rows indexed by a."""

    action: object
    default: object
    joint: np.ndarray
    phi: float


@dataclass(frozen=True)
class CfiModel:
    """Outcome model for a single context.

    ``marginals[a]`` is a probability vector over ``outcome_domain``.
    ``levels[a]`` is the (low, high) outcome label pair used as states 0 and
    1 when that action takes part in a φ-shift.
    """

    actions: tuple
    default_action: object
    outcome_domain: tuple
    marginals: dict
    context: dict = field(default_factory=dict)
    levels: dict = field(default_factory=dict)
    coupled: CoupledPair | None = None

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "outcome_domain", tuple(self.outcome_domain))
        if len(set(self.actions)) != len(self.actions):
            raise ModelError("duplicate actions")
        if self.default_action not in self.actions:
            raise ModelError(f"default action {self.default_action!r} not among {self.actions}")
        if len(set(self.outcome_domain)) != len(self.outcome_domain):
            raise ModelError("duplicate outcome labels")
        margs = {}
        for a in self.actions:
            if a not in self.marginals:
                raise ModelError(f"no outcome distribution for action {a!r}")
            p = _check_distribution(self.marginals[a], f"outcome distribution of {a!r}")
            if p.size != len(self.outcome_domain):
                raise ModelError(f"outcome distribution of {a!r} has {p.size} entries, "
                                 f"domain has {len(self.outcome_domain)}")
            p = p.copy()
            p.setflags(write=False)
            margs[a] = p
        object.__setattr__(self, "marginals", margs)
        for a, (lo, hi) in self.levels.items():
            if lo not in self.outcome_domain or hi not in self.outcome_domain or lo == hi:
                raise ModelError(f"invalid levels {(lo, hi)!r} for action {a!r}")
        if self.coupled is not None:
            self._check_coupled(self.coupled)

    def _check_coupled(self, c):
        if c.action == c.default or c.action not in self.actions or c.default not in self.actions:
            raise ModelError("coupled pair must be two distinct actions of the model")
        j = np.asarray(c.joint, dtype=float)
        if j.shape != (2, 2):
            raise ModelError("coupled joint must be a 2x2 table")
        if np.any(j < -PROB_TOL):
            raise ModelError("coupled joint has a negative entry")
        pa, pd = self.binary_marginal(c.action), self.binary_marginal(c.default)
        if np.max(np.abs(j.sum(axis=1) - pa)) > PROB_TOL or np.max(np.abs(j.sum(axis=0) - pd)) > PROB_TOL:
            raise ModelError("coupled joint does not reproduce the declared marginals")

    # -- structure --------------------------------------------------------

    def _index(self, label):
        return self.outcome_domain.index(label)

    def marginal(self, a):
        return self.marginals[a]

    def binary_levels(self, a):
        if a in self.levels:
            return self.levels[a]
        if len(self.outcome_domain) == 2:
            return self.outcome_domain[0], self.outcome_domain[1]
        raise ModelError(f"action {a!r} has no binary levels")

    def binary_marginal(self, a):
        """(P(Y_a = low), P(Y_a = high)); the support must lie within the levels."""
        lo, hi = self.binary_levels(a)
        p = self.marginals[a]
        inside = p[self._index(lo)] + p[self._index(hi)]
        if abs(inside - 1.0) > PROB_TOL:
            raise ModelError(f"outcome distribution of {a!r} is not supported on {(lo, hi)!r}")
        return np.array([p[self._index(lo)], p[self._index(hi)]])

    def pair_joint(self, a, b):
        """P(Y_a = y, Y_b = y') over outcome_domain x outcome_domain."""
        n = len(self.outcome_domain)
        if a == b:
            return np.diag(self.marginals[a])
        c = self.coupled
        if c is not None and {a, b} == {c.action, c.default}:
            j = np.asarray(c.joint, dtype=float)
            if a != c.action:
                j = j.T
            rows, cols = self.binary_levels(a), self.binary_levels(b)
            out = np.zeros((n, n))
            for i, yi in enumerate(rows):
                for k, yk in enumerate(cols):
                    out[self._index(yi), self._index(yk)] = j[i, k]
            return out
        return np.outer(self.marginals[a], self.marginals[b])

    # -- decision statistics ---------------------------------------------

    def utility_matrix(self, util):
        """U[a_index, y_index] for this model's context."""
        if len(util.outcome_vars) != 1:
            raise ModelError("CFI models need a utility over a single outcome variable")
        return np.array([[util(a, self.context, (y,)) for y in self.outcome_domain] for a in self.actions])

    def expected_utility(self, util, a):
        u = self.utility_matrix(util)[self.actions.index(a)]
        return math.fsum(self.marginals[a] * u)

    def _gap(self, util, a, sign):
        if a == self.default_action:
            return 0.0
        u = self.utility_matrix(util)
        ua, u0 = u[self.actions.index(a)], u[self.actions.index(self.default_action)]
        j = self.pair_joint(a, self.default_action)
        gap = np.maximum(0.0, sign * (u0[None, :] - ua[:, None]))
        return math.fsum((j * gap).ravel())

    def expected_harm(self, util, a):
        """Σ P(Y_a=y, Y_a0=y*) max(0, U(a0,y*) - U(a,y))."""
        return self._gap(util, a, 1.0)

    def expected_benefit(self, util, a):
        return self._gap(util, a, -1.0)

    def stats(self, util):
        """action -> (expected utility, expected harm)."""
        return {a: (self.expected_utility(util, a), self.expected_harm(util, a)) for a in self.actions}

    # -- enumeration form ---------------------------------------------------

    def _support(self, a):
        if self.coupled is not None and a in (self.coupled.action, self.coupled.default):
            return list(self.binary_levels(a))
        p = self.marginals[a]
        return [y for y, q in zip(self.outcome_domain, p) if q > 0]

    def noise_table(self):
        """Joint exogenous states (one outcome label per action) with their probabilities."""
        supports = [self._support(a) for a in self.actions]
        states, probs = [], []
        c = self.coupled
        for combo in itertools.product(*supports):
            e = dict(zip(self.actions, combo))
            pr = 1.0
            for a in self.actions:
                if c is not None and a == c.default:
                    continue
                if c is not None and a == c.action:
                    i = self.binary_levels(a).index(e[a])
                    k = self.binary_levels(c.default).index(e[c.default])
                    pr *= float(c.joint[i, k])
                else:
                    pr *= float(self.marginals[a][self._index(e[a])])
            states.append(combo)
            probs.append(max(0.0, pr))
        total = math.fsum(probs)
        return states, [p / total for p in probs]

    def to_scm(self, util, mixture=None):
        """Enumerable SCM equivalent to this model, plus the utility restated on it.

        The joint noise E has labels "y_1/y_2/..." (one outcome per action in
        order) and Y = E(A). With ``mixture=(q, a1, a0)`` the action domain
        gains the soft intervention "tau": a coin C ~ Bernoulli(q) picks the
        realized action R between a1 and a0, and the outcome becomes (R, Y)
        so that U(tau, (r, y)) = U(r, y).
        """
        states, probs = self.noise_table()
        labels = ["/".join(str(v) for v in s) for s in states]
        comp = {lab: dict(zip(self.actions, s)) for lab, s in zip(labels, states)}
        a0 = self.default_action
        b = ScmBuilder()
        b.exogenous("E", labels, probs)
        if mixture is None:
            b.variable("A", list(self.actions), fn=lambda: a0)
            b.variable("Y", list(self.outcome_domain), parents=["A"], exo=["E"], fn=lambda a, e: comp[e][a])
            scm = b.build(action="A", outcomes=["Y"])
            ext = UtilityTable.for_scm(scm, lambda a, x, y: util(a, self.context, y))
            return scm, ext
        q, a1, a_off = mixture
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"mixing weight {q} outside [0, 1]")
        if MIXED_ACTION in self.actions:
            raise ModelError(f"action label {MIXED_ACTION!r} is reserved for the mixed action")
        b.exogenous("C", [0, 1], [1.0 - q, q])
        b.variable("A", list(self.actions) + [MIXED_ACTION], fn=lambda: a0)
        b.variable("R", list(self.actions), parents=["A"], exo=["C"],
                   fn=lambda a, c: (a1 if c else a_off) if a == MIXED_ACTION else a)
        b.variable("Y", list(self.outcome_domain), parents=["R"], exo=["E"], fn=lambda r, e: comp[e][r])
        scm = b.build(action="A", outcomes=["R", "Y"])
        ext = UtilityTable.for_scm(scm, lambda a, x, ry: util(ry[0], self.context, (ry[1],)))
        return scm, ext


def _context_dict(util, context):
    if context is None:
        context = {}
    if not isinstance(context, dict):
        vals = context if isinstance(context, (tuple, list)) else (context,)
        context = dict(zip(util.context_vars, vals))
    return dict(context)


def build_cfi_model(marginals, outcome_domain, default_action, context=None, levels=None):
    """CFI model whose interventional marginals are exactly ``marginals``.

    ``marginals`` maps each action to a probability vector over
    ``outcome_domain`` (or to a {label: prob} mapping).
    """
    dom = tuple(outcome_domain)
    margs = {}
    for a, p in marginals.items():
        if isinstance(p, dict):
            unknown = set(p) - set(dom)
            if unknown:
                raise ModelError(f"outcome labels {sorted(map(str, unknown))} not in the domain")
            p = [p.get(y, 0.0) for y in dom]
        margs[a] = p
    return CfiModel(tuple(marginals), default_action, dom, margs, dict(context or {}), dict(levels or {}))


# -- outcome dependence and concentrated models ----------------------------


def utility_range(util, context, a):
    """(min_y U, max_y U, argmin label, argmax label); first label wins ties."""
    if len(util.outcome_vars) != 1:
        raise ModelError("CFI models need a utility over a single outcome variable")
    dom = util.outcome_domains[0]
    u = np.array([util(a, context, (y,)) for y in dom])
    return float(u.min()), float(u.max()), dom[int(np.argmin(u))], dom[int(np.argmax(u))]


def outcome_dependent(util, context, actions):
    """Pairwise overlap: max_y U(a_i, x, y) > min_y U(a_j, x, y) for all i != j."""
    ctx = _context_dict(util, context)
    r = {a: utility_range(util, ctx, a) for a in actions}
    return all(r[i][1] > r[j][0] for i in actions for j in actions if i != j)


def overlap_interval(util, context, actions):
    ctx = _context_dict(util, context)
    r = [utility_range(util, ctx, a) for a in actions]
    return max(x[0] for x in r), min(x[1] for x in r)


def binary_concentrated_model(util, context, actions, default_action=None, weights=None):
    """Model putting each action's mass on its lowest- and highest-utility outcomes.

    With ``weights`` None, every action gets the high-outcome weight that sets
    its expected utility to the midpoint of the common utility interval, which
    lies strictly inside each action's range. Otherwise ``weights[a]`` is the
    probability of the high outcome.
    """
    actions = tuple(actions)
    ctx = _context_dict(util, context)
    default_action = actions[0] if default_action is None else default_action
    if len(util.outcome_vars) != 1:
        raise ModelError("CFI models need a utility over a single outcome variable")
    dom = tuple(util.outcome_domains[0])
    ranges = {a: utility_range(util, ctx, a) for a in actions}
    levels = {}
    for a, (lo, hi, y_lo, y_hi) in ranges.items():
        if lo == hi:
            raise OutcomeDependenceError(f"utility of {a!r} does not depend on the outcome")
        levels[a] = (y_lo, y_hi)
    if weights is None:
        if not outcome_dependent(util, ctx, actions):
            raise OutcomeDependenceError(f"utility ranges of {actions} do not overlap in context {ctx}")
        low, high = overlap_interval(util, ctx, actions)
        target = 0.5 * (low + high)
        weights = {a: (target - ranges[a][0]) / (ranges[a][1] - ranges[a][0]) for a in actions}
    margs = {}
    for a in actions:
        w = float(weights[a])
        if not 0.0 <= w <= 1.0:
            raise ValueError(f"weight {w} for {a!r} outside [0, 1]")
        p = np.zeros(len(dom))
        y_lo, y_hi = levels[a]
        p[dom.index(y_lo)] += 1.0 - w
        p[dom.index(y_hi)] += w
        margs[a] = p
    return CfiModel(actions, default_action, dom, margs, ctx, levels)


# -- φ-shifts ---------------------------------------------------------------


def phi_bounds(model, a, a0):
    """Admissible φ keeping every cell of the shifted (a, a0) joint nonnegative."""
    pa0, pa1 = model.binary_marginal(a)
    pd0, pd1 = model.binary_marginal(a0)
    lower = max(-pd1 * pa1, -pd0 * pa0)
    upper = min(pd1 * pa0, pd0 * pa1)
    return lower, upper


def _pair_base(model, a, a0):
    c = model.coupled
    if c is None:
        return np.outer(model.binary_marginal(a), model.binary_marginal(a0)), 0.0
    if (c.action, c.default) != (a, a0):
        raise ModelError(f"model is already coupled on {(c.action, c.default)!r}")
    return np.asarray(c.joint, dtype=float), c.phi


def apply_phi_shift(model, a, a0, phi):
    """Couple (E(a), E(a0)) as P(e_a)P(e_a0) + (-1)^(e_a - e_a0)·φ.

    φ is measured from the current pair joint; shifts on one pair compose.
    """
    if a == a0:
        raise ModelError("a φ-shift needs two distinct actions")
    phi = float(phi)
    base, prior_phi = _pair_base(model, a, a0)
    sign = np.array([[1.0, -1.0], [-1.0, 1.0]])
    joint = base + sign * phi
    if np.any(joint < -PROB_TOL):
        lo, hi = phi_bounds(model, a, a0)
        raise ValueError(f"φ={phi} would create a negative probability; admissible range is [{lo}, {hi}]")
    joint = np.maximum(joint, 0.0)
    if phi == 0.0 and model.coupled is None:
        return model
    return replace(model, coupled=CoupledPair(a, a0, joint, prior_phi + phi))


def harm_shift_coefficient(model, util, a, a0):
    """Δ00 + Δ11 - Δ10 - Δ01 with Δ_{y*,y} = max(0, U(a0, y*) - U(a, y)) on binary levels."""
    ctx = model.context
    la, l0 = model.binary_levels(a), model.binary_levels(a0)

    def delta(i, k):
        return max(0.0, util(a0, ctx, (l0[i],)) - util(a, ctx, (la[k],)))

    return delta(0, 0) + delta(1, 1) - delta(1, 0) - delta(0, 1)


@dataclass(frozen=True)
class ShiftFamily:
    """Base model and two shifts on the (action, default) pair: ``plus``
    raises the harm of ``action`` and ``minus`` lowers it.

    The harm moves by φ times harm_shift_coefficient, which is negative
    under outcome dependence, so ``plus`` uses φ < 0.
    """

    base: CfiModel
    plus: CfiModel
    minus: CfiModel
    action: object
    phi_plus: float
    phi_minus: float

    @classmethod
    def build(cls, base, util, action, fraction=0.5):
        a0 = base.default_action
        lo, hi = phi_bounds(base, action, a0)
        coef = harm_shift_coefficient(base, util, action, a0)
        pp, pm = (fraction * hi, fraction * lo) if coef >= 0 else (fraction * lo, fraction * hi)
        return cls(base, apply_phi_shift(base, action, a0, pp), apply_phi_shift(base, action, a0, pm),
                   action, pp, pm)

    def models(self):
        return {"M0": self.base, "M+": self.plus, "M-": self.minus}

    def marginals_preserved(self):
        return all(np.array_equal(m.marginal(a), self.base.marginal(a))
                   for m in (self.plus, self.minus) for a in self.base.actions)

    def harms_ordered(self, util):
        h = [m.expected_harm(util, self.action) for m in (self.minus, self.base, self.plus)]
        return h[0] < h[1] < h[2]


# -- witnesses --------------------------------------------------------------


@dataclass
class WitnessRecord:
    """Evidence that an objective is harmful in a shifted environment.

    ``tables[env][option]`` holds (expected utility, expected harm,
    expected objective) computed by enumeration on the SCM form.
    """

    environment: str
    flagged: object
    witness: object
    options: tuple
    action: object
    default_action: object
    phi_plus: float
    phi_minus: float
    q: float | None
    family: ShiftFamily
    tables: dict
    harmful_in: dict
    scms: dict = field(default_factory=dict)

    def rows(self):
        for env, tab in self.tables.items():
            for opt, (eu, eh, ej) in tab.items():
                yield env, opt, eu, eh, ej


def _objective_on(scm, obj, context, mixed):
    if mixed:
        return Objective.for_scm(scm, lambda a, x, ry: obj(ry[0], context, (ry[1],)))
    return Objective.for_scm(scm, lambda a, x, y: obj(a, context, y))


def _evaluate(family, util, obj, options, mixture):
    tables, harmful, scms, verdicts = {}, {}, {}, {}
    for env, m in family.models().items():
        scm, ext = m.to_scm(util, mixture)
        j = _objective_on(scm, obj, m.context, mixture is not None)
        report = _harm.harm_report(scm, ext, {})
        tab = {}
        for opt in options:
            s = report.actions[opt]
            tab[opt] = (s.expected_utility, s.expected_harm, _harm.expected_objective(scm, j, opt, {}))
        tables[env] = tab
        scms[env] = (scm, ext)
        best = max(v[2] for v in tab.values())
        maximizers = [o for o in options if tab[o][2] >= best - TIE_TOL]
        stats = {o: tab[o][:2] for o in options}
        hit = next(((o, v.witness) for o in maximizers
                    for v in [needless_harm_witness(stats, o, options)] if v.flag), None)
        harmful[env] = hit is not None
        verdicts[env] = hit
    return tables, harmful, scms, verdicts


def expected_utility_witness(util, a0, a, context=None):
    """Environment where maximizing expected utility picks a needlessly harmful action.

    Both actions get equal expected utility with non-deterministic outcomes,
    so ``a`` carries positive harm while the default carries none.
    """
    ctx = _context_dict(util, context)
    if not outcome_dependent(util, ctx, (a0, a)):
        raise OutcomeDependenceError(f"utility is not outcome dependent for {(a0, a)!r} in {ctx}")
    base = binary_concentrated_model(util, ctx, (a0, a), default_action=a0)
    scm, ext = base.to_scm(util)
    obj = Objective.for_scm(scm, lambda act, x, y: ext(act, x, y))
    verdict = _harm.harmful_objective(scm, ext, obj, {})
    return base, verdict


def factual_objective_witness(util, obj, a0, a1, a2, context=None, fraction=0.5):
    """Shifted environment in which maximizing the factual objective ``obj`` is harmful.

    All three actions get equal expected utility. If a1 and a2 have equal
    harm the choice is between them and the shift acts on a1. Otherwise the
    higher-harm action is mixed with the default, with weight q chosen so the
    mixture matches the other action's harm, and the choice is between that
    mixture and the other action. The (higher-harm action, default) pair is
    shifted by ``fraction`` of the admissible φ in each direction; the
    objective's scores are the same in all three environments, so its
    maximizer is needlessly harmful in one of them.
    """
    ctx = _context_dict(util, context)
    acts = (a0, a1, a2)
    if len(set(acts)) != 3:
        raise ValueError("a0, a1, a2 must be distinct")
    if not outcome_dependent(util, ctx, acts):
        raise OutcomeDependenceError(f"utility is not outcome dependent for {acts!r} in {ctx}")
    base = binary_concentrated_model(util, ctx, acts, default_action=a0)
    h1, h2 = base.expected_harm(util, a1), base.expected_harm(util, a2)
    if h1 <= 0 or h2 <= 0:
        raise ModelError("construction needs positive harm for both non-default actions")
    if abs(h1 - h2) <= TIE_TOL:
        hi_act, lo_act, q, mixture = a1, a2, None, None
        options = (a1, a2)
    else:
        hi_act, lo_act = (a1, a2) if h1 > h2 else (a2, a1)
        q = min(1.0, max(base.expected_harm(util, lo_act) / base.expected_harm(util, hi_act), 0.0))
        mixture = (q, hi_act, a0)
        options = (MIXED_ACTION, lo_act)
    family = ShiftFamily.build(base, util, hi_act, fraction)
    tables, harmful, scms, verdicts = _evaluate(family, util, obj, options, mixture)
    env = "M+" if harmful["M+"] else "M-" if harmful["M-"] else None
    flagged, witness = verdicts[env] if env else (None, None)
    return WitnessRecord(env, flagged, witness, options, hi_act, a0, family.phi_plus, family.phi_minus,
                         q, family, tables, {"M+": harmful["M+"], "M-": harmful["M-"]}, scms)


def write_witness_csv(path, record, meta=None):
    """Demonstration table: environment, option, utility, harm, objective."""
    with open(path, "w", newline="") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["environment", "option", "expected_utility", "expected_harm", "expected_objective"])
        for env, opt, eu, eh, ej in record.rows():
            w.writerow([env, opt] + [format(float(v), ".12g") for v in (eu, eh, ej)])
