"""Command-line interface.

Exit status: 0 success, 2 invalid input or model, 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

from . import adversary, dose, harm, hetanm, modelfile, verify, zoo
from .scm import ModelError, ZeroProbabilityError, cate, prob_necessity

EXIT_OK, EXIT_INVALID, EXIT_VERIFY = 0, 2, 3


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    model: str | None = None
    context: dict = field(default_factory=dict)
    action: str | None = None
    outcome: dict = field(default_factory=dict)
    lambdas: tuple = ()
    betas: tuple = ()
    seed: int = 0
    samples: int = 0
    out: str | None = None
    grid: str | None = None
    extra: dict = field(default_factory=dict)


def _pairs(items):
    out = {}
    for item in items or []:
        for part in item.split(","):
            k, sep, v = part.partition("=")
            if not sep or not k:
                raise UsageError(f"expected name=value, got {part!r}")
            out[k.strip()] = v.strip()
    return out


def _floats(text, what):
    if text is None or text.strip() == "":
        return ()
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise UsageError(f"{what} must be a comma-separated list of numbers, got {text!r}") from None


def _resolve(domain, text, what):
    forms = {str(v): v for v in domain}
    if text not in forms:
        raise UsageError(f"{text!r} is not a value of {what}; expected one of {list(forms)}")
    return forms[text]


def _typed(scm, assignment, allowed, role):
    out = {}
    for k, v in assignment.items():
        if k not in allowed:
            raise UsageError(f"{k!r} is not a {role} variable; expected one of {list(allowed)}")
        out[k] = _resolve(scm.domain(k), v, k)
    return out


def _load(cfg):
    if not cfg.model:
        raise UsageError(f"'{cfg.command}' needs --model")
    loaded = modelfile.load_model(cfg.model)
    ctx = _typed(loaded.scm, cfg.context, loaded.scm.roles.context, "context")
    missing = [c for c in loaded.scm.roles.context if c not in ctx]
    if missing:
        raise UsageError(f"--context must assign {missing}")
    return loaded, ctx


def _action(scm, text, flag="--action"):
    if text is None:
        raise UsageError(f"{flag} is required")
    return _resolve(scm.actions, text, scm.action)


def _fmt(x):
    return format(float(x), ".12g")


def _emit(obj):
    print(json.dumps(obj, indent=2, default=str))


# -- commands -----------------------------------------------------------------


def cmd_harm(cfg):
    (scm, util, _), ctx = _load(cfg)
    a = _action(scm, cfg.action)
    y = _typed(scm, cfg.outcome, scm.roles.outcomes, "outcome")
    if set(y) != set(scm.roles.outcomes):
        raise UsageError(f"--outcome must assign {list(scm.roles.outcomes)}")
    _emit({"action": a, "context": ctx, "outcome": y,
           "harm": harm.harm(scm, util, a, ctx, y), "benefit": harm.benefit(scm, util, a, ctx, y)})
    return EXIT_OK


def cmd_expected(cfg):
    (scm, util, _), ctx = _load(cfg)
    lam = cfg.lambdas[0] if cfg.lambdas else 0.0
    report = harm.harm_report(scm, util, ctx, lam)
    actions = [_action(scm, cfg.action)] if cfg.action is not None else list(scm.actions)
    rows = {str(a): {"expected_utility": report.actions[a].expected_utility,
                     "expected_harm": report.actions[a].expected_harm,
                     "expected_benefit": report.actions[a].expected_benefit,
                     "hpu": report.actions[a].hpu,
                     "decomposition_residual": report.residual(a)} for a in actions}
    _emit({"context": ctx, "lambda": lam, "default_expected_utility": report.default_utility, "actions": rows})
    return EXIT_OK


def cmd_policy(cfg):
    (scm, util, _), ctx = _load(cfg)
    lams = cfg.lambdas or (0.0,)
    out = []
    for lam in lams:
        a, report = harm.hpu_optimal_action(scm, util, lam, ctx)
        s = report.actions[a]
        out.append({"lambda": lam, "action": a, "hpu": s.hpu,
                    "expected_utility": s.expected_utility, "expected_harm": s.expected_harm})
    _emit({"context": ctx, "policy": out})
    return EXIT_OK


def _control(scm, cfg, ctx):
    if cfg.extra.get("control") is not None:
        return _action(scm, cfg.extra["control"], "--control")
    a0 = scm.default_action(ctx)
    if a0 is None:
        raise UsageError("default policy is stochastic here; pass --control")
    return a0


def cmd_cate(cfg):
    (scm, util, _), ctx = _load(cfg)
    a = _action(scm, cfg.action)
    c = _control(scm, cfg, ctx)
    _emit({"treated": a, "control": c, "context": ctx, "cate": cate(scm, a, c, ctx)})
    return EXIT_OK


def cmd_pn(cfg):
    (scm, util, _), ctx = _load(cfg)
    a = _action(scm, cfg.action)
    c = _control(scm, cfg, ctx)
    y = _typed(scm, cfg.outcome, scm.roles.outcomes, "outcome")
    if len(y) != 1:
        raise UsageError("--outcome must name exactly one outcome variable for pn")
    (y_var, y_val), = y.items()
    dom = scm.domain(y_var)
    if cfg.extra.get("counter_outcome") is not None:
        y_cf = _resolve(dom, cfg.extra["counter_outcome"], y_var)
    elif len(dom) == 2:
        y_cf = dom[1 - dom.index(y_val)]
    else:
        raise UsageError("--counter-outcome is required for non-binary outcomes")
    if ctx:
        raise UsageError("pn is defined without context conditioning; omit --context")
    pn = prob_necessity(scm, (scm.action, a), (y_var, y_val), c, y_cf, intervened=cfg.extra.get("intervened", False))
    _emit({"cause": {scm.action: a}, "effect": y, "counter_cause": c, "counter_effect": y_cf, "pn": pn})
    return EXIT_OK


def _grid(cfg):
    lams = cfg.lambdas or (0.0, 10.0, 100.0)
    return dose.DoseGrid.parse(cfg.grid, lams) if cfg.grid else dose.DoseGrid(lambdas=lams)


def _out_paths(out):
    root, ext = os.path.splitext(out)
    return out, f"{root}_tradeoff{ext or '.csv'}"


def cmd_dose(cfg):
    grid = _grid(cfg)
    table = dose.dose_table(grid=grid)
    curve = dose.tradeoff_curve(grid=grid)
    meta = {"grid": f"{grid.lo}:{grid.hi}:{grid.step}", "lambdas": ",".join(_fmt(l) for l in grid.lambdas)}
    optima = {_fmt(l): table.optimum(l) for l in table.hpu}
    summary = {"optimal_dose": optima,
               "utility_kept_at_50pct_harm_cut": dose.utility_at_harm_reduction(curve, 0.5),
               "utility_kept_at_90pct_harm_cut": dose.utility_at_harm_reduction(curve, 0.9)}
    if cfg.samples > 0:
        model = dose.dose_model()
        meta.update({"seed": cfg.seed, "samples": cfg.samples, "generator": hetanm.GENERATOR})
        summary["monte_carlo_harm_at_optimum"] = {}
        for l, a in optima.items():
            mc = hetanm.mc_expected_harm(model, a, n=cfg.samples, seed=cfg.seed)
            summary["monte_carlo_harm_at_optimum"][l] = {"dose": a, "estimate": mc.estimate, "stderr": mc.stderr,
                                                        "closed_form": dose.expected_harm_dose(a)}
    if cfg.betas:
        lams = tuple(l for l in cfg.lambdas if l > 0) or (1.0, 10.0, 100.0)
        rep = dose.shifted_model_analysis(betas=cfg.betas, lambdas=lams, grid=grid)
        summary["shifted_model"] = {"mu_argmax": rep.mu_argmax, "hpu_argmax": rep.hpu_argmax,
                                    "risk_averse_argmax": rep.risk_argmax,
                                    "risk_averse_needlessly_harmful": rep.risk_needlessly_harmful}
    if cfg.out is None:
        meta.update({f"optimal_dose_lambda_{l}": a for l, a in optima.items()})
        dose.write_dose_csv(sys.stdout, table, meta)
        return EXIT_OK
    main, trade = _out_paths(cfg.out)
    dose.write_dose_csv(main, table, meta)
    dose.write_tradeoff_csv(trade, curve, meta)
    summary["files"] = [main, trade]
    _emit(summary)
    return EXIT_OK


def cmd_adversary(cfg):
    (scm, util, obj), ctx = _load(cfg)
    a0 = scm.default_action(ctx)
    if a0 is None:
        raise UsageError("witness construction needs a deterministic default policy in this context")
    if cfg.action is None:
        raise UsageError("--action takes one action (expected utility) or two actions (any objective)")
    acts = [_resolve(scm.actions, t.strip(), scm.action) for t in cfg.action.split(",")]
    out_dir = cfg.out
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    if len(acts) == 1:
        base, verdict = adversary.expected_utility_witness(util, a0, acts[0], ctx)
        m_scm, m_util = base.to_scm(util)
        result = {"kind": "expected-utility", "default_action": a0, "action": acts[0],
                  "harmful": verdict.flag, "witness": verdict.witness,
                  "stats": {str(a): {"expected_utility": u, "expected_harm": h}
                            for a, (u, h) in base.stats(util).items()}}
        if out_dir:
            path = os.path.join(out_dir, "witness_M0.json")
            modelfile.export_model(path, m_scm, m_util)
            result["files"] = [path]
    elif len(acts) == 2:
        j = obj if obj is not None else harm.Objective(util.actions, util.context_vars, util.context_domains,
                                                       util.outcome_vars, util.outcome_domains, util.values)
        rec = adversary.factual_objective_witness(util, j, a0, acts[0], acts[1], ctx)
        result = {"kind": "factual-objective", "default_action": a0, "options": list(rec.options),
                  "mixing_weight": rec.q, "phi_plus": rec.phi_plus, "phi_minus": rec.phi_minus,
                  "environment": rec.environment, "flagged": rec.flagged, "witness": rec.witness,
                  "harmful_in": rec.harmful_in,
                  "tables": {env: {str(o): dict(zip(("expected_utility", "expected_harm", "expected_objective"), v))
                                   for o, v in tab.items()} for env, tab in rec.tables.items()}}
        if out_dir:
            files = []
            for env, (s, u) in rec.scms.items():
                tag = {"M0": "M0", "M+": "Mplus", "M-": "Mminus"}[env]
                path = os.path.join(out_dir, f"witness_{tag}.json")
                jj = adversary._objective_on(s, j, rec.family.base.context, rec.q is not None)
                modelfile.export_model(path, s, u, jj)
                files.append(path)
            csv_path = os.path.join(out_dir, "witness_table.csv")
            adversary.write_witness_csv(csv_path, rec, {"default_action": a0, "options": list(rec.options)})
            result["files"] = files + [csv_path]
    else:
        raise UsageError("--action takes one or two actions")
    _emit(result)
    return EXIT_OK


def _zoo_treatment(cfg):
    scm, util = zoo.treatment_model()
    res = {"expected_outcome": {str(a): harm.expected_utility(scm, util, a, {}) for a in scm.actions},
           "expected_harm": {str(a): harm.expected_harm(scm, util, a, {}) for a in scm.actions},
           "published": {"expected_outcome": {"0": 0.5, "1": 0.8, "2": 0.8}, "expected_harm": {"1": 0.0, "2": 0.1}}}
    return scm, util, res


def _zoo_preemption(cfg):
    scm, util = zoo.preemption_model()
    eu = {str(a): harm.expected_utility(scm, util, a, {}) for a in scm.actions}
    res = {"expected_harm": {str(a): harm.expected_harm(scm, util, a, {}) for a in scm.actions},
           "expected_utility": eu, "default_expected_utility": harm.default_expected_utility(scm, util, {}),
           "published": {"expected_harm": {"1": 1.0}, "expected_utility": {"0": 2.0, "1": 1.0}}}
    return scm, util, res


def _zoo_assistant(cfg):
    lams = cfg.lambdas or (0.001, 0.004, 5.0, 20.0)
    decisions = []
    for agent in ("eu-max", "risk-averse", "harm-averse"):
        for lam in ((0.0,) if agent == "eu-max" else lams):
            d = zoo.assistant_decision(agent, lam)
            decisions.append({"agent": agent, "lambda": lam, "action": d.action, "k": d.k,
                              "objective": d.value, "expected_return": d.expected_return})
    res = {"decisions": decisions, "thresholds": zoo.assistant_thresholds(),
           "published": {"risk_averse_cancel": 0.003125, "harm_averse_switch": 11.93,
                         "eu_max": {"action": 1, "k": 20}}}
    return None, None, res


ZOO = {"treatment": _zoo_treatment, "assistant": _zoo_assistant, "preemption": _zoo_preemption}


def cmd_zoo(cfg):
    name = cfg.extra["name"]
    scm, util, res = ZOO[name](cfg)
    if cfg.out:
        if scm is None:
            raise UsageError(f"the {name} model has continuous actions and no model file form")
        modelfile.export_model(cfg.out, scm, util)
        res["file"] = cfg.out
    _emit({"model": name, **res})
    return EXIT_OK


def cmd_verify(cfg):
    results = verify.run_all(cfg.extra.get("checks") or None)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name:32s} {r.seconds:7.2f}s  {r.detail}")
    failed = [r.name for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


COMMANDS = {"harm": cmd_harm, "expected": cmd_expected, "policy": cmd_policy, "cate": cmd_cate, "pn": cmd_pn,
            "dose": cmd_dose, "adversary": cmd_adversary, "zoo": cmd_zoo, "verify": cmd_verify}


def run(cfg):
    """Execute one command; returns the exit status."""
    try:
        return COMMANDS[cfg.command](cfg)
    except BrokenPipeError:
        raise
    except (ModelError, ZeroProbabilityError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="model file (JSON)")
    common.add_argument("--context", action="append", metavar="K=V", help="context assignment")
    common.add_argument("--action", help="action value (comma-separated for adversary)")
    common.add_argument("--outcome", action="append", metavar="K=V", help="outcome assignment")
    common.add_argument("--lambda", dest="lambdas", metavar="A,B,C", help="harm aversion values")
    common.add_argument("--beta", dest="betas", metavar="A,B,C", help="risk aversion values")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--samples", type=int, default=0, help="Monte Carlo sample count")
    common.add_argument("--out", help="output path")
    common.add_argument("--grid", metavar="MIN:MAX:STEP", help="dose grid")

    p = argparse.ArgumentParser(prog="harmcalc", description="Counterfactual harm calculations.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("harm", parents=[common], help="h(a, x, y) and b(a, x, y) for one outcome")
    sub.add_parser("expected", parents=[common], help="expected utility, harm, benefit per action")
    sub.add_parser("policy", parents=[common], help="harm-penalized optimal action per λ")
    for name, text in (("cate", "conditional average treatment effect"), ("pn", "probability of necessity")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--control", help="comparison action (default: the default policy's action)")
        if name == "pn":
            sp.add_argument("--counter-outcome", dest="counter_outcome", help="outcome value in the counterfactual")
            sp.add_argument("--intervened", action="store_true", help="treat the cause as do(A=a), not an observation")
    sub.add_parser("dose", parents=[common], help="dose-response CSVs and optimal doses")
    sub.add_parser("adversary", parents=[common], help="construct a shifted environment exposing a harmful objective")
    z = sub.add_parser("zoo", parents=[common], help="canned models with their published numbers")
    z.add_argument("name", choices=sorted(ZOO))
    v = sub.add_parser("verify", parents=[common], help="run the invariant suite")
    v.add_argument("--check", dest="checks", action="append", choices=sorted(verify.CHECKS))
    return p


def config_from_args(ns):
    extra = {k: getattr(ns, k) for k in ("control", "counter_outcome", "intervened", "name", "checks") if hasattr(ns, k)}
    return RunConfig(command=ns.command, model=ns.model, context=_pairs(ns.context), action=ns.action,
                     outcome=_pairs(ns.outcome), lambdas=_floats(ns.lambdas, "--lambda"),
                     betas=_floats(ns.betas, "--beta"), seed=ns.seed, samples=ns.samples, out=ns.out,
                     grid=ns.grid, extra=extra)


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return run(cfg)
    except BrokenPipeError:
        # output closed early, e.g. piped into head
        sys.stderr.close()
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
