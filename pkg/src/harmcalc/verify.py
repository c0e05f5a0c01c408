"""Invariant suite run by ``harmcalc verify``.

Each check returns a CheckResult; the suite passes only if all do.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass

import numpy as np

from . import adversary, dose, harm, hetanm, kernels, modelfile, zoo
from .scm import Intervention
from .random_models import positive_contexts, random_scm, random_utility


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str
    seconds: float = 0.0


def check_treatment():
    scm, util = zoo.treatment_model()
    got = [harm.expected_utility(scm, util, a, {}) for a in (0, 1, 2)]
    h = [harm.expected_harm(scm, util, a, {}) for a in (1, 2)]
    err = max(abs(got[0] - 0.5), abs(got[1] - 0.8), abs(got[2] - 0.8), abs(h[0]), abs(h[1] - 0.1))
    return err <= 1e-12, f"E[Y_a]={got}, harm(1)={h[0]:.3g}, harm(2)={h[1]:.3g}"


def _random_family(seed, n):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        scm = random_scm(rng)
        yield rng, scm, random_utility(rng, scm)


def check_decomposition(n=100, seed=0):
    worst = 0.0
    for _, scm, util in _random_family(seed, n):
        for ctx in positive_contexts(scm):
            r = harm.harm_report(scm, util, ctx)
            worst = max(worst, max(abs(r.residual(a)) for a in scm.actions))
    return worst <= 1e-10, f"max residual {worst:.3g} over {n} models"


def check_hpu_not_harmful(n=100, seed=1):
    bad = 0
    for rng, scm, util in _random_family(seed, n):
        lam = 10.0 - rng.uniform(0.0, 10.0)
        for ctx in positive_contexts(scm):
            a, _ = harm.hpu_optimal_action(scm, util, lam, ctx)
            bad += harm.needlessly_harmful(scm, util, a, ctx).flag
    return bad == 0, f"{bad} needlessly harmful HPU choices over {n} models"


def check_closed_form(pairs=10, n=200_000, seed=2):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(pairs):
        sd = rng.uniform(0.1, 5.0)
        m = hetanm.single_noise_model(sd * rng.uniform(-3.0, 3.0), sd)
        cf = hetanm.expected_harm(m, 1)
        mc = hetanm.mc_expected_harm(m, 1, n=n, seed=seed + i)
        gap = abs(cf - mc.estimate)
        worst = max(worst, gap / mc.stderr if mc.stderr > 0 else (0.0 if gap <= 1e-12 else math.inf))
    unit = hetanm.closed_form_expected_harm(hetanm.HarmInputs(1.0, 1.0))
    ok = worst < 4.0 and round(unit, 4) == 0.0833
    return ok, f"max |closed - MC| = {worst:.2f} SE; h(1, 1) = {unit:.6f}"


def check_assistant():
    t = zoo.assistant_thresholds()
    lams = np.linspace(1e-4, 1.0, 200)
    picks = {zoo.assistant_decision("risk-averse", lam).action for lam in lams}
    ok = (2 not in picks and abs(t["risk_averse_cancel"] - 0.003125) <= 1e-4
          and abs(t["harm_averse_switch"] - 11.93) <= 0.05)
    return ok, f"risk-averse picks {sorted(picks)}; switches {t['risk_averse_cancel']:.6f}, {t['harm_averse_switch']:.4f}"


def check_dose():
    o0, o100 = dose.optimal_dose(0.0), dose.optimal_dose(100.0)
    curve = dose.tradeoff_curve()
    u90 = dose.utility_at_harm_reduction(curve, 0.9)
    u50 = dose.utility_at_harm_reduction(curve, 0.5)
    ok = abs(o0 - 19.3) <= 0.1 and abs(o100 - 17.3) <= 0.1 and u90 >= 0.975 and u50 >= 0.996
    return ok, f"optima {o0}, {o100}; utility kept at 90%/50% harm cut: {u90:.4f}, {u50:.4f}"


def check_phi_shift(cases=30, seed=3):
    rng = np.random.default_rng(seed)
    worst = 0.0
    kept = True
    for _ in range(cases):
        util = _overlapping_utility(rng, 2)
        base = adversary.binary_concentrated_model(util, {}, (0, 1), default_action=0,
                                                   weights={0: rng.uniform(0.05, 0.95), 1: rng.uniform(0.05, 0.95)})
        lo, hi = adversary.phi_bounds(base, 1, 0)
        phi = rng.uniform(lo, hi)
        shifted = adversary.apply_phi_shift(base, 1, 0, phi)
        scm, ext = shifted.to_scm(util)
        got = harm.expected_harm(scm, ext, 1, {}) - base.expected_harm(util, 1)
        want = phi * adversary.harm_shift_coefficient(base, util, 1, 0)
        worst = max(worst, abs(got - want))
        kept &= all(np.array_equal(shifted.marginal(a), base.marginal(a)) for a in base.actions)
    return worst <= 1e-12 and kept, f"max harm-delta error {worst:.3g}; marginals preserved: {kept}"


def _overlapping_utility(rng, n_actions, n_outcomes=3):
    while True:
        vals = rng.normal(size=(n_actions, 1, n_outcomes))
        util = harm.UtilityTable(tuple(range(n_actions)), (), (), ("Y",), (tuple(range(n_outcomes)),), vals)
        if adversary.outcome_dependent(util, {}, tuple(range(n_actions))):
            return util


def check_factual_objective_witness(cases=20, seed=4):
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(cases):
        util = _overlapping_utility(rng, 3)
        obj = harm.Objective(util.actions, (), (), ("Y",), util.outcome_domains, rng.normal(size=util.values.shape))
        hits += adversary.factual_objective_witness(util, obj, 0, 1, 2).environment is not None
    return hits == cases, f"{hits}/{cases} objectives flagged"


def check_preemption():
    h1, h0 = zoo.preemption_harm(1), zoo.preemption_harm(0)
    return h1 == 1.0 and h0 == 0.0, f"harm(shoot)={h1}, harm(default)={h0}"


def check_kernels(seed=5):
    rng = np.random.default_rng(seed)
    scm = random_scm(rng)
    noise = scm.noise_states()
    clamp = scm._clamp_vector(Intervention.of(None))
    c = scm._compiled
    args = (noise, clamp, c["order"], c["n_inputs"], c["kind"], c["src"], c["stride"], c["offsets"], c["flat"])
    same = np.array_equal(kernels.evaluate_worlds_numpy(*args), kernels.evaluate_worlds(*args))
    eps = rng.standard_normal((1000, 3))
    d = rng.normal(size=3)
    a = kernels.mc_harm_moments_numpy(eps, d, 0.3, 1.0)
    b = kernels.mc_harm_moments(eps, d, 0.3, 1.0)
    close = all(math.isclose(x, y, rel_tol=1e-12, abs_tol=1e-12) for x, y in zip(a, b))
    return same and close, f"accelerated={kernels.ACCELERATED}; worlds equal: {same}; moments equal: {close}"


def check_roundtrip():
    scm, util = zoo.treatment_model()
    doc = json.loads(json.dumps(modelfile.model_to_dict(scm, util)))
    again = modelfile.model_from_dict(doc)
    same = modelfile.model_to_dict(again.scm, again.utility) == doc
    h = harm.expected_harm(again.scm, again.utility, 2, {})
    return same and abs(h - 0.1) <= 1e-12, f"round trip stable: {same}; reloaded harm(2)={h:.3g}"


CHECKS = {
    "treatment-model": check_treatment,
    "decomposition": check_decomposition,
    "hpu-never-needlessly-harmful": check_hpu_not_harmful,
    "closed-form-vs-monte-carlo": check_closed_form,
    "assistant-thresholds": check_assistant,
    "dose-response": check_dose,
    "phi-shift": check_phi_shift,
    "factual-objective-witness": check_factual_objective_witness,
    "preemption": check_preemption,
    "kernel-agreement": check_kernels,
    "model-file-round-trip": check_roundtrip,
}


def run_all(names=None):
    results = []
    for name in names or CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = CHECKS[name]()
        except Exception as err:  # a crashing check is a failed check
            ok, detail = False, f"{type(err).__name__}: {err}"
        results.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return results
