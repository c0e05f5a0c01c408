"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import time

import numpy as np
import pytest

from harmcalc import adversary as A
from harmcalc import dose as D
from harmcalc import harm as H
from harmcalc import scm as S
from harmcalc import zoo as Z
from harmcalc.hetanm import HarmInputs, closed_form_expected_harm, mc_expected_harm, single_noise_model
from harmcalc.random_models import positive_contexts, random_scm, random_utility
from test_adversary import dependent_utility


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail

    return emit


def random_family(n_models, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n_models):
        scm = random_scm(rng)
        yield rng, scm, random_utility(rng, scm, integer=bool(rng.integers(2)))


def test_treatment_model(report):
    t0 = time.perf_counter()
    scm, util = Z.treatment_model()
    rep = H.harm_report(scm, util, {})
    got = [rep.default_utility] + [rep.actions[a].expected_utility for a in (1, 2)] \
        + [rep.actions[a].expected_harm for a in (1, 2)]
    want = [0.5, 0.8, 0.8, 0.0, 0.1]
    err = max(abs(g - w) for g, w in zip(got, want))
    dt = time.perf_counter() - t0
    report(1, err <= 1e-12 and dt < 1.0, f"max error {err:.1e}, {dt:.3f}s")


def test_decomposition(report):
    t0 = time.perf_counter()
    worst = 0.0
    for _, scm, util in random_family(500, 2024):
        for ctx in positive_contexts(scm):
            rep = H.harm_report(scm, util, ctx)
            worst = max(worst, max(abs(rep.residual(a)) for a in scm.actions))
    dt = time.perf_counter() - t0
    report(2, worst <= 1e-10 and dt < 60.0, f"max residual {worst:.1e} over 500 models, {dt:.1f}s")


def test_hpu_never_needlessly_harmful(report):
    violations = 0
    for rng, scm, util in random_family(500, 2024):
        lam = 10.0 - rng.uniform(0.0, 10.0)
        for ctx in positive_contexts(scm):
            a, _ = H.hpu_optimal_action(scm, util, lam, ctx)
            violations += H.needlessly_harmful(scm, util, a, ctx).flag
    report(3, violations == 0, f"{violations} violations / 500 models")


def test_closed_form_matches_monte_carlo(report):
    rng = np.random.default_rng(77)
    outside = 0
    for i in range(50):
        sd = rng.uniform(0.1, 5.0)
        du = sd * rng.uniform(-3.0, 3.0)
        est = mc_expected_harm(single_noise_model(du, sd), 1, n=1_000_000, seed=1000 + i)
        exact = closed_form_expected_harm(HarmInputs(du, sd))
        outside += abs(est.estimate - exact) > 3 * est.stderr
    ref = closed_form_expected_harm(HarmInputs(1.0, 1.0))
    ok = outside == 0 and round(ref, 5) == 0.08332
    report(4, ok, f"{50 - outside}/50 pairs within 3 SE; E[h](1, 1) = {ref:.5f}")


def test_assistant_thresholds(report):
    t0 = time.perf_counter()
    grid = np.linspace(1e-4, 1.0, 10_000)
    acts = [Z.assistant_decision("risk-averse", lam).action for lam in grid]
    bonus_chosen = sum(a == 2 for a in acts)
    cancel_at = next(lam for lam, a in zip(grid, acts) if a == 3)
    switch = Z.assistant_thresholds()["harm_averse_switch"]
    below = Z.assistant_decision("harm-averse", switch - 0.05).action
    above = Z.assistant_decision("harm-averse", switch + 0.05).action
    dt = time.perf_counter() - t0
    ok = (bonus_chosen == 0 and abs(cancel_at - 0.003125) <= 1e-4 and abs(switch - 11.93) <= 0.05
          and (below, above) == (1, 2) and dt < 10.0)
    report(5, ok, f"action 2 chosen {bonus_chosen} times; cancel at λ={cancel_at:.6f}; "
                  f"harm-averse switch at λ={switch:.4f}; {dt:.2f}s")


def test_dose_response(report):
    t0 = time.perf_counter()
    d0, d100 = D.optimal_dose(0.0), D.optimal_dose(100.0)
    curve = D.tradeoff_curve()
    u50 = D.utility_at_harm_reduction(curve, 0.5)
    u90 = D.utility_at_harm_reduction(curve, 0.9)
    dt = time.perf_counter() - t0
    ok = (abs(d0 - 19.3) <= 0.1 + 1e-9 and abs(d100 - 17.3) <= 0.1 + 1e-9
          and u90 is not None and 1 - u90 <= 0.025 and u50 is not None and 1 - u50 <= 0.004 and dt < 30.0)
    report(6, ok, f"optima {d0} / {d100} mg/day; utility loss {100 * (1 - u50):.2f}% at 50% "
                  f"and {100 * (1 - u90):.2f}% at 90% harm cut; {dt:.2f}s")


def test_shifted_dose_model(report):
    rep = D.shifted_model_analysis(betas=(0.001, 0.01, 0.1), lambdas=(1.0, 10.0, 100.0))
    exceptions = sum(v != rep.mu_argmax for v in rep.hpu_argmax.values())
    ok = rep.risk_exceeds_mu and rep.risk_flagged and exceptions == 0
    report(7, ok, f"mu argmax {rep.mu_argmax}; risk-averse {rep.risk_argmax} flagged "
                  f"{rep.risk_needlessly_harmful}; HPU {rep.hpu_argmax} ({exceptions} exceptions)")


def test_adversary(report):
    rng = np.random.default_rng(99)
    bad_marginal = bad_linear = flagged = 0
    for _ in range(100):
        u = dependent_utility(rng)
        m = A.binary_concentrated_model(u, {}, (0, 1, 2))
        lo, hi = A.phi_bounds(m, 1, 0)
        phi = rng.uniform(lo, hi)
        shifted = A.apply_phi_shift(m, 1, 0, phi)
        scm, _ = shifted.to_scm(u)
        for a in m.actions:
            dist = S.interventional_distribution(scm, {"A": a}).marginal("Y")
            got = np.array([dist[(y,)] for y in m.outcome_domain])
            bad_marginal += not (np.array_equal(shifted.marginal(a), m.marginal(a))
                                 and np.max(np.abs(got - m.marginal(a))) <= 1e-15)
        moved = shifted.expected_harm(u, 1) - m.expected_harm(u, 1)
        bad_linear += abs(moved - phi * A.harm_shift_coefficient(m, u, 1, 0)) > 1e-12
        obj = H.Objective(u.actions, [], [], ["Y"], u.outcome_domains, rng.normal(size=u.values.shape))
        flagged += A.factual_objective_witness(u, obj, 0, 1, 2).environment is not None
    ok = bad_marginal == 0 and bad_linear == 0 and flagged == 100
    report(8, ok, f"marginal mismatches {bad_marginal}, nonlinear harm moves {bad_linear}, "
                  f"witnesses {flagged}/100")


def test_preemption(report):
    shoot, wait = Z.preemption_harm(1), Z.preemption_harm(0)
    report(9, shoot == 1.0 and wait == 0.0, f"harm of shooting {shoot}, default {wait}")
