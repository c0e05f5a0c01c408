"""JSON model files: a DiscreteScm with its utility (and optional objective).

Layout::

    {
      "variables":  [{"name": "T", "domain": [0, 1, 2]}, ...],
      "exogenous":  [{"name": "e1", "domain": [0, 1], "probs": [0.5, 0.5]}, ...],
      "mechanisms": {"Y": {"parents": ["T"], "exo": ["e1"], "table": {"0|1": 1, ...}}},
      "roles":      {"action": "T", "context": [], "outcomes": ["Y"]},
      "default_policy": {"value": 0}      or a mechanism object for the action,
      "utility":    {"a|x|y": number, ...},
      "objective":  {"a|x|y": number, ...}            (optional)
    }

Table keys are the string forms of the inputs, comma-joined, with parents
and exogenous inputs separated by "|". In utility keys x and y are the
comma-joined context and outcome labels (x is empty without context).
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass

import jsonschema
import numpy as np

from .harm import Objective, UtilityTable
from .scm import DiscreteScm, Exogenous, Mechanism, ModelError, Roles, Variable

_LABEL = {"type": ["integer", "number", "string", "boolean"]}
_NAME = {"type": "string", "minLength": 1}
_MECH = {
    "type": "object",
    "required": ["table"],
    "additionalProperties": False,
    "properties": {
        "parents": {"type": "array", "items": _NAME},
        "exo": {"anyOf": [{"type": "null"}, _NAME, {"type": "array", "items": _NAME}]},
        "table": {"type": "object", "additionalProperties": _LABEL},
    },
}
_TABLE = {"type": "object", "additionalProperties": {"type": "number"}}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["variables", "exogenous", "mechanisms", "roles", "default_policy", "utility"],
    "additionalProperties": False,
    "properties": {
        "variables": {
            "type": "array", "minItems": 1,
            "items": {"type": "object", "required": ["name", "domain"], "additionalProperties": False,
                      "properties": {"name": _NAME, "domain": {"type": "array", "minItems": 1, "items": _LABEL}}},
        },
        "exogenous": {
            "type": "array",
            "items": {"type": "object", "required": ["name", "domain", "probs"], "additionalProperties": False,
                      "properties": {"name": _NAME,
                                     "domain": {"type": "array", "minItems": 1, "items": _LABEL},
                                     "probs": {"type": "array", "items": {"type": "number", "minimum": 0}}}},
        },
        "mechanisms": {"type": "object", "additionalProperties": _MECH},
        "roles": {
            "type": "object", "required": ["action", "outcomes"], "additionalProperties": False,
            "properties": {"action": _NAME,
                           "context": {"type": "array", "items": _NAME},
                           "outcomes": {"type": "array", "minItems": 1, "items": _NAME}},
        },
        "default_policy": {"oneOf": [
            {"type": "object", "required": ["value"], "additionalProperties": False, "properties": {"value": _LABEL}},
            _MECH,
        ]},
        "utility": _TABLE,
        "objective": _TABLE,
    },
}


class ModelFileError(ModelError):
    """Schema or consistency problem in a model file; ``path`` is a JSON path."""

    def __init__(self, message, path="$"):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class LoadedModel:
    scm: DiscreteScm
    utility: UtilityTable
    objective: Objective | None = None

    def __iter__(self):
        return iter((self.scm, self.utility, self.objective))


def _key(values):
    return ",".join(str(v) for v in values)


def _split(s):
    return [] if s == "" else s.split(",")


def _lookup(domain, text, where, what):
    forms = {str(v): v for v in domain}
    if text not in forms:
        raise ModelFileError(f"{text!r} is not a value of {what}", where)
    return forms[text]


def _validate(doc):
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ModelFileError(e.message, e.json_path)


def _mechanism(spec, name, where, domains, exo_domains):
    parents = list(spec.get("parents", []))
    exo = spec.get("exo")
    exo = [] if exo is None else [exo] if isinstance(exo, str) else list(exo)
    for i, p in enumerate(parents):
        if p not in domains:
            raise ModelFileError(f"unknown parent {p!r} of {name!r}", f"{where}.parents[{i}]")
    for e in exo:
        if e not in exo_domains:
            raise ModelFileError(f"unknown exogenous input {e!r} of {name!r}", f"{where}.exo")
    table = {}
    for text, out in spec["table"].items():
        kwhere = f"{where}.table['{text}']"
        left, sep, right = text.partition("|")
        if not sep:
            raise ModelFileError("table keys must look like 'parents|exo'", kwhere)
        ps, es = _split(left), _split(right)
        if len(ps) != len(parents) or len(es) != len(exo):
            raise ModelFileError(f"expected {len(parents)} parent and {len(exo)} exogenous values", kwhere)
        key = tuple(_lookup(domains[p], t, kwhere, p) for p, t in zip(parents, ps))
        key += tuple(_lookup(exo_domains[e], t, kwhere, e) for e, t in zip(exo, es))
        if key in table:
            raise ModelFileError("duplicate table entry", kwhere)
        table[key] = _lookup(domains[name], str(out), kwhere, name) if name in domains else out
    return Mechanism(tuple(parents), tuple(exo), table)


def _utility_values(flat, scm, where, cls):
    r = scm.roles
    ctx = list(itertools.product(*(scm.domain(c) for c in r.context)))
    out = list(itertools.product(*(scm.domain(y) for y in r.outcomes)))
    vals = np.full((len(scm.actions), len(ctx), len(out)), np.nan)
    index = {f"{a}|{_key(x)}|{_key(y)}": (i, j, k)
             for i, a in enumerate(scm.actions) for j, x in enumerate(ctx) for k, y in enumerate(out)}
    for text, v in flat.items():
        if text not in index:
            raise ModelFileError("key does not name an (action, context, outcome) triple of the model",
                                 f"{where}['{text}']")
        vals[index[text]] = float(v)
    missing = [k for k, idx in index.items() if np.isnan(vals[idx])]
    if missing:
        raise ModelFileError(f"{cls.__name__.lower()} is not total: missing entry {missing[0]!r}", where)
    return cls(scm.actions, r.context, [scm.domain(c) for c in r.context],
               r.outcomes, [scm.domain(y) for y in r.outcomes], vals)


def model_from_dict(doc):
    """Validate and build (scm, utility, objective) from a parsed document."""
    _validate(doc)
    names = [v["name"] for v in doc["variables"]]
    if len(set(names)) != len(names):
        raise ModelFileError("duplicate variable names", "$.variables")
    domains = {v["name"]: tuple(v["domain"]) for v in doc["variables"]}
    exo_domains = {e["name"]: tuple(e["domain"]) for e in doc["exogenous"]}
    roles = doc["roles"]
    action = roles["action"]
    if action not in domains:
        raise ModelFileError(f"action {action!r} is not a declared variable", "$.roles.action")
    mechanisms = {}
    for name, spec in doc["mechanisms"].items():
        where = f"$.mechanisms['{name}']"
        if name == action:
            raise ModelFileError("the action's mechanism belongs in default_policy", where)
        if name not in domains:
            raise ModelFileError(f"mechanism for undeclared variable {name!r}", where)
        mechanisms[name] = _mechanism(spec, name, where, domains, exo_domains)
    pol = doc["default_policy"]
    if "value" in pol:
        v = _lookup(domains[action], str(pol["value"]), "$.default_policy.value", action)
        mechanisms[action] = Mechanism((), (), {(): v})
    else:
        mechanisms[action] = _mechanism(pol, action, "$.default_policy", domains, exo_domains)
    try:
        scm = DiscreteScm(
            [Variable(n, domains[n]) for n in names],
            [Exogenous(e["name"], tuple(e["domain"]), tuple(float(p) for p in e["probs"])) for e in doc["exogenous"]],
            mechanisms,
            Roles(action, tuple(roles.get("context", [])), tuple(roles["outcomes"])),
        )
    except ModelFileError:
        raise
    except ModelError as err:
        m = re.match(r"mechanism '([^']+)'", str(err))
        where = "$"
        if m:
            where = "$.default_policy" if m.group(1) == action else f"$.mechanisms['{m.group(1)}']"
        raise ModelFileError(str(err), where) from None
    util = _utility_values(doc["utility"], scm, "$.utility", UtilityTable)
    obj = _utility_values(doc["objective"], scm, "$.objective", Objective) if "objective" in doc else None
    return LoadedModel(scm, util, obj)


def load_model(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise ModelFileError(f"invalid JSON: {err.msg} (line {err.lineno}, column {err.colno})") from None
    return model_from_dict(doc)


def _mechanism_dict(m):
    out = {"parents": list(m.parents), "exo": list(m.exo), "table": {}}
    np_ = len(m.parents)
    for key, v in m.table.items():
        out["table"][_key(key[:np_]) + "|" + _key(key[np_:])] = v
    return out


def _flat(table):
    out = {}
    for i, a in enumerate(table.actions):
        for j, x in enumerate(table.context_states()):
            for k, y in enumerate(table.outcome_states()):
                out[f"{a}|{_key(x)}|{_key(y)}"] = float(table.values[i, j, k])
    return out


def _plain(v):
    # numpy scalars are not JSON serializable
    return v.item() if hasattr(v, "item") else v


def model_to_dict(scm, util, objective=None):
    util.check_compatible(scm)
    action = scm.roles.action
    pol = scm.mechanisms[action]
    if not pol.parents and not pol.exo:
        policy = {"value": _plain(pol.table[()])}
    else:
        policy = _mechanism_dict(pol)
    doc = {
        "variables": [{"name": v.name, "domain": [_plain(d) for d in v.domain]} for v in scm.variables],
        "exogenous": [{"name": e.name, "domain": [_plain(d) for d in e.domain], "probs": [float(p) for p in e.probs]}
                      for e in scm.exogenous],
        "mechanisms": {n: _mechanism_dict(m) for n, m in scm.mechanisms.items() if n != action},
        "roles": {"action": action, "context": list(scm.roles.context), "outcomes": list(scm.roles.outcomes)},
        "default_policy": policy,
        "utility": _flat(util),
    }
    for m in doc["mechanisms"].values():
        m["table"] = {k: _plain(v) for k, v in m["table"].items()}
    if objective is not None:
        objective.check_compatible(scm)
        doc["objective"] = _flat(objective)
    return doc


def export_model(path, scm, util, objective=None):
    with open(path, "w") as fh:
        json.dump(model_to_dict(scm, util, objective), fh, indent=2)
        fh.write("\n")
