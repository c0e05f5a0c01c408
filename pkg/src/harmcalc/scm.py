"""Discrete structural causal models with exact inference by enumeration.

Every query is answered by enumerating the joint state of the exogenous
variables, evaluating each intervened world with the same noise, and
summing prior weights over the states that satisfy the requested
assignments. Sums over noise states use ``math.fsum`` so the result does
not depend on how enumeration was chunked.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from ._accel import max_workers

MAX_NOISE_STATES = 2**24
PROB_TOL = 1e-12
_CHUNK = 1 << 16


class ModelError(ValueError):
    """A model violates a structural requirement (domains, totality, DAG, roles)."""


class CapacityError(ModelError):
    """The exogenous joint is too large to enumerate exactly."""


class ZeroProbabilityError(ValueError):
    """Conditioning on an event of probability zero."""


@dataclass(frozen=True)
class Variable:
    name: str
    domain: tuple


@dataclass(frozen=True)
class Exogenous:
    name: str
    domain: tuple
    probs: tuple

    @classmethod
    def degenerate(cls, name, value=0):
        return cls(name, (value,), (1.0,))


@dataclass(frozen=True)
class Mechanism:
    """Lookup table from (parent values..., noise values...) to a value.

    ``exo`` lists the exogenous inputs; table keys are tuples of endogenous
    parent values followed by exogenous values, in declaration order.
    """

    parents: tuple
    exo: tuple
    table: Mapping

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        exo = self.exo
        if exo is None:
            exo = ()
        elif isinstance(exo, str):
            exo = (exo,)
        object.__setattr__(self, "exo", tuple(exo))


@dataclass(frozen=True)
class Roles:
    action: str
    context: tuple = ()
    outcomes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "context", tuple(self.context))
        object.__setattr__(self, "outcomes", tuple(self.outcomes))


@dataclass(frozen=True)
class Intervention:
    """do(...) as an immutable set of (variable, value) pairs; empty is do(∅)."""

    items: tuple = ()

    @classmethod
    def of(cls, iv=None):
        if iv is None:
            return cls()
        if isinstance(iv, Intervention):
            return iv
        return cls(tuple(sorted(dict(iv).items(), key=lambda kv: kv[0])))

    def as_dict(self):
        return dict(self.items)

    def __bool__(self):
        return bool(self.items)


@dataclass(frozen=True)
class CounterfactualQuery:
    """Worlds sharing one noise draw, with evidence and query per world tag."""

    worlds: tuple
    evidence: Mapping = field(default_factory=dict)
    query: Mapping = field(default_factory=dict)

    def __post_init__(self):
        worlds = tuple((tag, Intervention.of(iv)) for tag, iv in self.worlds)
        tags = [t for t, _ in worlds]
        if len(set(tags)) != len(tags):
            raise ModelError(f"world tags must be distinct, got {tags}")
        for part in (self.evidence, self.query):
            unknown = set(part) - set(tags)
            if unknown:
                raise ModelError(f"assignments reference unknown worlds {sorted(unknown)}")
        object.__setattr__(self, "worlds", worlds)


class Distribution:
    """Finite distribution over joint states of named variables."""

    def __init__(self, names, probs):
        self.names = tuple(names)
        self.probs = dict(probs)

    def __getitem__(self, state):
        return self.probs.get(tuple(state), 0.0)

    def __iter__(self):
        return iter(self.probs.items())

    def __len__(self):
        return len(self.probs)

    def total(self):
        return math.fsum(self.probs.values())

    def marginal(self, names):
        if isinstance(names, str):
            names = (names,)
        pos = [self.names.index(n) for n in names]
        acc = {}
        for state, p in self.probs.items():
            key = tuple(state[i] for i in pos)
            acc.setdefault(key, []).append(p)
        return Distribution(names, {k: math.fsum(v) for k, v in acc.items()})

    def prob(self, **assignment):
        pos = {self.names.index(n): v for n, v in assignment.items()}
        return math.fsum(p for s, p in self.probs.items() if all(s[i] == v for i, v in pos.items()))

    def expectation(self, fn):
        return math.fsum(p * fn(dict(zip(self.names, s))) for s, p in self.probs.items())

    def __repr__(self):
        return f"Distribution({self.names}, {self.probs})"


class DiscreteScm:
    """Finite-domain SCM: endogenous variables, independent categorical noise,
    tabular mechanisms, and the action/context/outcome roles.

    The action variable's mechanism is the default policy. Deterministic
    policies ignore noise (or use a single-valued exogenous variable).
    """

    def __init__(self, variables, exogenous, mechanisms, roles):
        self.variables = tuple(variables)
        self.exogenous = tuple(exogenous)
        self.mechanisms = dict(mechanisms)
        self.roles = roles
        self._worlds_cache = {}
        self._validate()

    # -- construction -----------------------------------------------------

    def _validate(self):
        names = [v.name for v in self.variables]
        exo_names = [e.name for e in self.exogenous]
        if len(set(names)) != len(names):
            raise ModelError("duplicate endogenous variable names")
        if len(set(exo_names)) != len(exo_names):
            raise ModelError("duplicate exogenous variable names")
        clash = set(names) & set(exo_names)
        if clash:
            raise ModelError(f"names used for both endogenous and exogenous variables: {sorted(clash)}")
        self.var_index = {n: i for i, n in enumerate(names)}
        self.exo_index = {n: i for i, n in enumerate(exo_names)}
        for v in list(self.variables) + list(self.exogenous):
            if len(v.domain) == 0:
                raise ModelError(f"variable {v.name!r} has an empty domain")
            if len(set(v.domain)) != len(v.domain):
                raise ModelError(f"variable {v.name!r} has repeated domain values")
            if len({str(d) for d in v.domain}) != len(v.domain):
                raise ModelError(f"variable {v.name!r} has domain values with colliding string forms")
        for e in self.exogenous:
            p = np.asarray(e.probs, dtype=float)
            if p.shape != (len(e.domain),):
                raise ModelError(f"exogenous {e.name!r}: {len(p)} probabilities for {len(e.domain)} values")
            if np.any(p < 0) or not np.all(np.isfinite(p)):
                raise ModelError(f"exogenous {e.name!r} has negative or non-finite probabilities")
            if abs(math.fsum(p) - 1.0) > PROB_TOL:
                raise ModelError(f"exogenous {e.name!r} probabilities sum to {math.fsum(p)!r}, not 1")
        missing = set(names) - set(self.mechanisms)
        if missing:
            raise ModelError(f"no mechanism for {sorted(missing)}")
        extra = set(self.mechanisms) - set(names)
        if extra:
            raise ModelError(f"mechanisms for unknown variables {sorted(extra)}")
        for n, m in self.mechanisms.items():
            for p in m.parents:
                if p not in self.var_index:
                    raise ModelError(f"mechanism {n!r}: unknown parent {p!r}")
            for e in m.exo:
                if e not in self.exo_index:
                    raise ModelError(f"mechanism {n!r}: unknown exogenous parent {e!r}")
        self.order = self._topological_order()
        self._dense = {n: self._dense_table(n) for n in names}
        self._validate_roles()

    def _topological_order(self):
        state = {}
        order = []
        stack_path = []

        def visit(n):
            s = state.get(n)
            if s == 2:
                return
            if s == 1:
                start = stack_path.index(n)
                cycle = stack_path[start:] + [n]
                raise ModelError("mechanism graph has a cycle: " + " -> ".join(cycle))
            state[n] = 1
            stack_path.append(n)
            for p in self.mechanisms[n].parents:
                visit(p)
            stack_path.pop()
            state[n] = 2
            order.append(n)

        for v in self.variables:
            visit(v.name)
        return tuple(order)

    def _dense_table(self, name):
        m = self.mechanisms[name]
        in_domains = [self.domain(p) for p in m.parents] + [self.exo_domain(e) for e in m.exo]
        out_domain = self.domain(name)
        out_pos = {v: i for i, v in enumerate(out_domain)}
        shape = tuple(len(d) for d in in_domains)
        dense = np.empty(shape, dtype=np.int64)
        table = m.table
        for idx in itertools.product(*(range(len(d)) for d in in_domains)):
            key = tuple(d[i] for d, i in zip(in_domains, idx))
            try:
                val = table[key]
            except KeyError:
                raise ModelError(f"mechanism {name!r} is not total: missing entry for {key!r}") from None
            if val not in out_pos:
                raise ModelError(f"mechanism {name!r} maps {key!r} to {val!r}, outside the domain of {name!r}")
            dense[idx] = out_pos[val]
        dense.setflags(write=False)
        return dense

    def _validate_roles(self):
        r = self.roles
        if r.action not in self.var_index:
            raise ModelError(f"action variable {r.action!r} is not an endogenous variable")
        for n in r.context + r.outcomes:
            if n not in self.var_index:
                raise ModelError(f"role references unknown variable {n!r}")
        seen = [r.action, *r.context, *r.outcomes]
        if len(set(seen)) != len(seen):
            raise ModelError("action, context and outcome sets must be disjoint")
        if set(seen) != set(self.var_index):
            raise ModelError(f"variables without a role: {sorted(set(self.var_index) - set(seen))}")
        if not r.outcomes:
            raise ModelError("at least one outcome variable is required")
        desc = self.descendants(r.action)
        bad = [x for x in r.context if x in desc]
        if bad:
            raise ModelError(f"context variables {bad} are descendants of the action")
        bad = [y for y in r.outcomes if y not in desc]
        if bad:
            raise ModelError(f"outcome variables {bad} are not descendants of the action")
        for p in self.mechanisms[r.action].parents:
            if p not in r.context:
                raise ModelError(f"default policy may depend on context only, got parent {p!r}")

    # -- structure --------------------------------------------------------

    def domain(self, name):
        return self.variables[self.var_index[name]].domain

    def exo_domain(self, name):
        return self.exogenous[self.exo_index[name]].domain

    def descendants(self, name):
        children = {v.name: [] for v in self.variables}
        for n, m in self.mechanisms.items():
            for p in m.parents:
                children[p].append(n)
        out, todo = set(), [name]
        while todo:
            for c in children[todo.pop()]:
                if c not in out:
                    out.add(c)
                    todo.append(c)
        return out

    @property
    def action(self):
        return self.roles.action

    @property
    def actions(self):
        return self.domain(self.roles.action)

    @property
    def default_policy(self):
        return self.mechanisms[self.roles.action]

    @cached_property
    def n_noise_states(self):
        n = 1
        for e in self.exogenous:
            n *= len(e.domain)
        return n

    def contexts(self):
        """All joint context assignments, in domain order."""
        ctx = self.roles.context
        return [dict(zip(ctx, vals)) for vals in itertools.product(*(self.domain(c) for c in ctx))]

    def outcome_states(self):
        return list(itertools.product(*(self.domain(y) for y in self.roles.outcomes)))

    def default_action(self, context):
        """a0(x) if the default policy is deterministic in ``context``, else None."""
        pol = self.distribution_of_action(context)
        support = [a for a, p in pol.items() if p > 0]
        return support[0] if len(support) == 1 else None

    def distribution_of_action(self, context):
        m = self.default_policy
        ctx = [context[p] for p in m.parents]
        acc = {a: [] for a in self.actions}
        for combo in itertools.product(*(range(len(self.exo_domain(e))) for e in m.exo)):
            w = 1.0
            vals = []
            for e, i in zip(m.exo, combo):
                ex = self.exogenous[self.exo_index[e]]
                w *= ex.probs[i]
                vals.append(ex.domain[i])
            acc[m.table[tuple(ctx) + tuple(vals)]].append(w)
        return {a: math.fsum(v) for a, v in acc.items()}

    def is_deterministic_policy(self):
        return all(self.default_action(c) is not None for c in self.contexts())

    # -- enumeration ------------------------------------------------------

    def _check_capacity(self):
        if self.n_noise_states > MAX_NOISE_STATES:
            raise CapacityError(
                f"exogenous joint has {self.n_noise_states} states, above the enumeration bound {MAX_NOISE_STATES}"
            )

    @cached_property
    def _compiled(self):
        names = [v.name for v in self.variables]
        n_var = len(names)
        max_in = max([len(m.parents) + len(m.exo) for m in self.mechanisms.values()] + [1])
        n_inputs = np.zeros(n_var, dtype=np.int64)
        kind = np.zeros((n_var, max_in), dtype=np.int64)
        src = np.zeros((n_var, max_in), dtype=np.int64)
        stride = np.zeros((n_var, max_in), dtype=np.int64)
        offsets = np.zeros(n_var, dtype=np.int64)
        flats = []
        pos = 0
        for i, n in enumerate(names):
            m = self.mechanisms[n]
            dense = self._dense[n]
            strides = [s // dense.itemsize for s in dense.strides] if dense.ndim else []
            k = 0
            for p in m.parents:
                kind[i, k], src[i, k] = 0, self.var_index[p]
                k += 1
            for e in m.exo:
                kind[i, k], src[i, k] = 1, self.exo_index[e]
                k += 1
            n_inputs[i] = k
            stride[i, :k] = strides[:k] if k else []
            offsets[i] = pos
            flats.append(np.ascontiguousarray(dense).ravel())
            pos += dense.size
        order = np.array([self.var_index[n] for n in self.order], dtype=np.int64)
        return dict(order=order, n_inputs=n_inputs, kind=kind, src=src, stride=stride,
                    offsets=offsets, flat=np.concatenate(flats).astype(np.int64))

    @cached_property
    def prior(self):
        """Prior probability of every exogenous joint state, in row-major index order."""
        self._check_capacity()
        p = np.ones(1)
        for e in self.exogenous:
            p = np.multiply.outer(p, np.asarray(e.probs, dtype=float)).ravel()
        p.setflags(write=False)
        return p

    def noise_states(self, idx=None):
        """Exogenous value indices for the given linear state indices (all by default)."""
        sizes = [len(e.domain) for e in self.exogenous]
        if idx is None:
            self._check_capacity()
            idx = np.arange(self.n_noise_states)
        if not sizes:
            return np.zeros((len(idx), 0), dtype=np.int64)
        return np.stack(np.unravel_index(idx, sizes), axis=1).astype(np.int64)

    def _clamp_vector(self, iv):
        clamp = np.full(len(self.variables), -1, dtype=np.int64)
        for n, v in iv.items:
            if n not in self.var_index:
                raise ModelError(f"intervention on unknown variable {n!r}")
            dom = self.domain(n)
            if v not in dom:
                raise ModelError(f"intervention value {v!r} is not in the domain of {n!r}")
            clamp[self.var_index[n]] = dom.index(v)
        return clamp

    def _run_kernel(self, noise, clamp):
        c = self._compiled
        return kernels.evaluate_worlds(noise, clamp, c["order"], c["n_inputs"], c["kind"], c["src"],
                                       c["stride"], c["offsets"], c["flat"])

    def worlds(self, iv=None):
        """Value indices of every endogenous variable for every noise state under ``iv``.

        Shape (n_noise_states, n_vars). Cached per intervention.
        """
        iv = Intervention.of(iv)
        cached = self._worlds_cache.get(iv)
        if cached is not None:
            return cached
        self._check_capacity()
        clamp = self._clamp_vector(iv)
        n = self.n_noise_states
        starts = list(range(0, n, _CHUNK))

        def run(start):
            idx = np.arange(start, min(start + _CHUNK, n))
            return self._run_kernel(self.noise_states(idx), clamp).astype(np.int32)

        workers = min(max_workers(), len(starts))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(run, starts))
        else:
            parts = [run(s) for s in starts]
        out = np.concatenate(parts, axis=0) if len(parts) > 1 else parts[0]
        out.setflags(write=False)
        self._worlds_cache[iv] = out
        return out

    def mask(self, worlds, assignment):
        """Boolean mask of noise states whose world matches a partial assignment."""
        m = np.ones(worlds.shape[0], dtype=bool)
        for n, v in dict(assignment).items():
            if n not in self.var_index:
                raise ModelError(f"unknown variable {n!r}")
            dom = self.domain(n)
            if v not in dom:
                raise ModelError(f"value {v!r} is not in the domain of {n!r}")
            m &= worlds[:, self.var_index[n]] == dom.index(v)
        return m

    def decode(self, row):
        return {v.name: v.domain[int(row[i])] for i, v in enumerate(self.variables)}


def _fsum(x):
    return math.fsum(np.asarray(x, dtype=float).ravel())


def _weighted_mass(scm, mask):
    return _fsum(scm.prior[mask])


# -- operations ----------------------------------------------------------


def evaluate_world(scm, noise, iv=None):
    """Endogenous values for one exogenous assignment, with ``iv`` clamped.

    Returns a dict covering every endogenous and exogenous variable.
    """
    iv = Intervention.of(iv)
    row = []
    for e in scm.exogenous:
        if e.name not in noise:
            raise ModelError(f"noise value missing for exogenous variable {e.name!r}")
        if noise[e.name] not in e.domain:
            raise ModelError(f"noise value {noise[e.name]!r} not in the domain of {e.name!r}")
        row.append(e.domain.index(noise[e.name]))
    vals = scm._run_kernel(np.array([row], dtype=np.int64).reshape(1, len(row)), scm._clamp_vector(iv))[0]
    out = scm.decode(vals)
    out.update({e.name: noise[e.name] for e in scm.exogenous})
    return out


def interventional_distribution(scm, iv=None, condition=None):
    """Exact P(W_iv | condition) over endogenous joint states.

    ``condition`` is a partial assignment over the context variables; its
    probability is judged under the default-policy model (contexts are not
    descendants of the action, so any intervention gives the same value).
    """
    condition = dict(condition or {})
    for n in condition:
        if n not in scm.roles.context:
            raise ModelError(f"conditioning variable {n!r} is not a context variable")
    w = scm.worlds(iv)
    m = scm.mask(w, condition)
    z = _weighted_mass(scm, m)
    if z <= 0:
        raise ZeroProbabilityError(f"condition {condition} has probability zero")
    sizes = [len(v.domain) for v in scm.variables]
    codes = np.ravel_multi_index(tuple(w[m].T), sizes) if sizes else np.zeros(int(m.sum()), dtype=np.int64)
    weights = scm.prior[m]
    uniq, inv = np.unique(codes, return_inverse=True)
    probs = {}
    for k, code in enumerate(uniq):
        p = _fsum(weights[inv == k]) / z
        if p > 0:
            state = np.unravel_index(code, sizes)
            probs[tuple(v.domain[int(i)] for v, i in zip(scm.variables, state))] = p
    return Distribution([v.name for v in scm.variables], probs)


def counterfactual_joint(scm, query):
    """P(query | evidence) where each tagged world is the SCM under its own
    intervention and all worlds share one exogenous draw."""
    mask_e = np.ones(scm.n_noise_states, dtype=bool)
    mask_q = np.ones(scm.n_noise_states, dtype=bool)
    for tag, iv in query.worlds:
        w = scm.worlds(iv)
        if tag in query.evidence:
            mask_e &= scm.mask(w, query.evidence[tag])
        if tag in query.query:
            mask_q &= scm.mask(w, query.query[tag])
    z = _weighted_mass(scm, mask_e)
    if z <= 0:
        raise ZeroProbabilityError("evidence has probability zero")
    return _weighted_mass(scm, mask_e & mask_q) / z


def posterior_array(scm, iv, evidence):
    """Posterior weights over all noise states (array form of posterior_over_noise)."""
    w = scm.worlds(iv)
    m = scm.mask(w, evidence or {})
    z = _weighted_mass(scm, m)
    if z <= 0:
        raise ZeroProbabilityError(f"evidence {dict(evidence or {})} is inconsistent under {Intervention.of(iv).as_dict()}")
    post = np.where(m, scm.prior, 0.0) / z
    return post


def posterior_over_noise(scm, iv=None, evidence=None):
    """P(e | evidence) after evaluating the evidence in the world do(iv).

    Returned as a dict from exogenous label tuples (in declaration order) to
    probability, covering every noise state.
    """
    post = posterior_array(scm, iv, evidence)
    states = scm.noise_states()
    out = {}
    for row, p in zip(states, post):
        out[tuple(e.domain[int(i)] for e, i in zip(scm.exogenous, row))] = float(p)
    return out


def _outcome_values(scm, outcome_value_map):
    ys = scm.roles.outcomes
    if outcome_value_map is None:
        if len(ys) != 1:
            raise ModelError("outcome_value_map is required with several outcome variables")
        return lambda state: float(state[ys[0]])
    if callable(outcome_value_map):
        return lambda state: float(outcome_value_map(tuple(state[y] for y in ys)))
    table = dict(outcome_value_map)

    def lookup(state):
        key = tuple(state[y] for y in ys)
        if key in table:
            return float(table[key])
        if len(key) == 1 and key[0] in table:
            return float(table[key[0]])
        raise ModelError(f"outcome_value_map has no entry for {key!r}")

    return lookup


def expected_outcome(scm, action, context=None, outcome_value_map=None):
    value = _outcome_values(scm, outcome_value_map)
    dist = interventional_distribution(scm, {scm.action: action}, context)
    return dist.expectation(value)


def cate(scm, treated, control, context=None, outcome_value_map=None):
    """E[Y_treated | x] - E[Y_control | x]."""
    for a in (treated, control):
        if a not in scm.actions:
            raise ModelError(f"{a!r} is not in the action domain {scm.actions}")
    if treated == control:
        return 0.0
    return (expected_outcome(scm, treated, context, outcome_value_map)
            - expected_outcome(scm, control, context, outcome_value_map))


def prob_necessity(scm, cause, effect, counter_cause, counter_effect, intervened=False):
    """Probability of necessity P(effect_var_{cause_var=counter_cause} = counter_effect | cause, effect).

    ``cause`` and ``effect`` are (variable, value) pairs. With
    ``intervened=True`` the factual world is do(cause) rather than an
    observation of it; use this when the cause has zero probability under
    the default policy.
    """
    (c_var, c_val), (e_var, e_val) = cause, effect
    if intervened:
        factual = ("factual", {c_var: c_val})
        evidence = {"factual": {e_var: e_val}}
    else:
        factual = ("factual", {})
        evidence = {"factual": {c_var: c_val, e_var: e_val}}
    q = CounterfactualQuery(
        worlds=(factual, ("counterfactual", {c_var: counter_cause})),
        evidence=evidence,
        query={"counterfactual": {e_var: counter_effect}},
    )
    return counterfactual_joint(scm, q)


# -- builder -------------------------------------------------------------


def table_from_function(in_domains, fn):
    """Tabulate ``fn(*inputs)`` over the product of ``in_domains``."""
    return {key: fn(*key) for key in itertools.product(*in_domains)}


class ScmBuilder:
    """Assemble a DiscreteScm from Python callables instead of literal tables.

    >>> b = ScmBuilder()
    >>> b.exogenous("u", [0, 1], [0.5, 0.5])
    >>> b.variable("A", [0, 1], parents=[], fn=lambda: 0)
    >>> b.variable("Y", [0, 1], parents=["A"], exo=["u"], fn=lambda a, u: a | u)
    >>> scm = b.build(action="A", outcomes=["Y"])
    """

    def __init__(self):
        self._vars = []
        self._exo = []
        self._mech = {}

    def exogenous(self, name, domain, probs):
        self._exo.append(Exogenous(name, tuple(domain), tuple(float(p) for p in probs)))
        return self

    def variable(self, name, domain, parents=(), exo=(), fn=None, table=None):
        if isinstance(exo, str):
            exo = (exo,)
        self._vars.append(Variable(name, tuple(domain)))
        self._mech[name] = (tuple(parents), tuple(exo), fn, table)
        return self

    def build(self, action, context=(), outcomes=()):
        doms = {v.name: v.domain for v in self._vars}
        exo_doms = {e.name: e.domain for e in self._exo}
        mechanisms = {}
        for name, (parents, exo, fn, table) in self._mech.items():
            if table is None:
                try:
                    in_domains = [doms[p] for p in parents] + [exo_doms[e] for e in exo]
                except KeyError as err:
                    raise ModelError(f"mechanism {name!r} references unknown variable {err.args[0]!r}") from None
                table = table_from_function(in_domains, fn)
            mechanisms[name] = Mechanism(parents, exo, table)
        return DiscreteScm(self._vars, self._exo, mechanisms, Roles(action, context, outcomes))
