"""Random finite SCMs and utilities for property checks."""

from __future__ import annotations

import itertools

import numpy as np

from .harm import Objective, UtilityTable
from .scm import DiscreteScm, Exogenous, Mechanism, ModelError, Roles, Variable, interventional_distribution


def _probs(rng, k):
    p = rng.dirichlet(np.ones(k))
    p[-1] = 1.0 - p[:-1].sum()
    if p[-1] < 0:
        p = np.full(k, 1.0 / k)
    return tuple(float(v) for v in p)


def random_scm(rng, max_vars=4, max_values=3, p_stochastic_policy=0.3, p_shared_noise=0.3):
    """Random model with at most ``max_vars`` endogenous variables of at most
    ``max_values`` values: optional context, one action, and outcomes that
    descend from the action. Outcomes may share a noise variable."""
    n = int(rng.integers(2, max_vars + 1))
    n_ctx = int(rng.integers(0, n - 1)) if n > 2 else 0
    n_ctx = min(n_ctx, 1)
    names = [f"X{i}" for i in range(n_ctx)] + ["A"] + [f"Y{i}" for i in range(n - n_ctx - 1)]
    domains = {v: tuple(range(int(rng.integers(2, max_values + 1)))) for v in names}
    exo, mechs = [], {}
    shared = None
    if n - n_ctx - 1 > 1 and rng.random() < p_shared_noise:
        k = int(rng.integers(2, max_values + 1))
        shared = Exogenous("U_shared", tuple(range(k)), _probs(rng, k))
        exo.append(shared)
    for i, v in enumerate(names):
        earlier = names[:i]
        if v.startswith("X"):
            parents = []
        elif v == "A":
            parents = [c for c in earlier if c.startswith("X") and rng.random() < 0.7]
        else:
            anchor = rng.choice([p for p in earlier if p == "A" or p.startswith("Y")])
            parents = [str(anchor)] + [p for p in earlier if p != anchor and rng.random() < 0.4]
        own = []
        if v != "A" or rng.random() < p_stochastic_policy:
            k = int(rng.integers(2, max_values + 1))
            e = Exogenous(f"U_{v}", tuple(range(k)), _probs(rng, k))
            exo.append(e)
            own.append(e.name)
        if shared is not None and v.startswith("Y") and rng.random() < 0.7:
            own.append(shared.name)
        in_domains = [domains[p] for p in parents] + [next(x.domain for x in exo if x.name == e) for e in own]
        out = domains[v]
        table = {key: out[int(rng.integers(len(out)))] for key in itertools.product(*in_domains)}
        mechs[v] = Mechanism(tuple(parents), tuple(own), table)
    roles = Roles("A", tuple(names[:n_ctx]), tuple(names[n_ctx + 1:]))
    try:
        return DiscreteScm([Variable(v, domains[v]) for v in names], exo, mechs, roles)
    except ModelError:
        # an outcome's anchor chain always reaches A, so this only guards edge cases
        return random_scm(rng, max_vars, max_values, p_stochastic_policy, p_shared_noise)


def random_utility(rng, scm, scale=1.0, integer=False, cls=UtilityTable):
    shape = (len(scm.actions), max(1, len(scm.contexts())), len(scm.outcome_states()))
    vals = rng.integers(-3, 4, size=shape).astype(float) if integer else rng.normal(scale=scale, size=shape)
    r = scm.roles
    return cls(scm.actions, r.context, [scm.domain(c) for c in r.context],
               r.outcomes, [scm.domain(y) for y in r.outcomes], vals)


def random_objective(rng, scm, scale=1.0):
    return random_utility(rng, scm, scale, cls=Objective)


def positive_contexts(scm):
    """Context assignments with positive probability."""
    if not scm.roles.context:
        return [{}]
    dist = interventional_distribution(scm).marginal(list(scm.roles.context))
    return [dict(zip(dist.names, s)) for s, p in dist if p > 0]
