import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from harmcalc import adversary as A
from harmcalc import harm as H
from harmcalc import scm as S
from harmcalc.scm import ModelError, ScmBuilder

seeds = st.integers(0, 2**32 - 1)


def outcome_scm(n, actions=(0, 1, 2)):
    b = ScmBuilder()
    b.exogenous("e", list(range(n)), [1.0 / n] * n)
    b.variable("A", list(actions), fn=lambda: actions[0])
    b.variable("Y", list(range(n)), parents=["A"], exo=["e"], fn=lambda a, e: e)
    return b.build(action="A", outcomes=["Y"])


def dependent_utility(rng, actions=(0, 1, 2), cls=H.UtilityTable):
    """Random utility on a 2-4 label outcome whose action ranges overlap."""
    while True:
        n = int(rng.integers(2, 5))
        scm = outcome_scm(n, actions)
        vals = rng.normal(size=(len(actions), 1, n))
        u = cls(scm.actions, [], [], ["Y"], [tuple(range(n))], vals)
        if A.outcome_dependent(u, {}, actions):
            return u


def binary_utility(table):
    scm = outcome_scm(2, tuple(table))
    vals = np.array([[table[a]] for a in table], dtype=float)
    return H.UtilityTable(scm.actions, [], [], ["Y"], [(0, 1)], vals)


def cf_pair(scm, a, b, ya, yb):
    q = S.CounterfactualQuery(worlds=(("wa", {"A": a}), ("wb", {"A": b})),
                              query={"wa": {"Y": ya}, "wb": {"Y": yb}})
    return S.counterfactual_joint(scm, q)


class TestCfiModel:
    def test_counterfactual_outcomes_independent(self):
        m = A.build_cfi_model({0: [0.3, 0.7], 1: [0.6, 0.4], 2: {1: 1.0}}, (0, 1), 0)
        u = binary_utility({0: [0, 1], 1: [0, 1], 2: [0, 1]})
        scm, _ = m.to_scm(u)
        for a, b in [(0, 1), (1, 2), (0, 2)]:
            for ya in (0, 1):
                for yb in (0, 1):
                    want = m.marginal(a)[ya] * m.marginal(b)[yb]
                    assert cf_pair(scm, a, b, ya, yb) == pytest.approx(want, abs=1e-15)
                    assert m.pair_joint(a, b)[ya, yb] == pytest.approx(want, abs=1e-15)

    def test_treatment_marginals(self):
        # CFI model with the trial's marginals: independent outcomes give equal harm
        m = A.build_cfi_model({0: [0.5, 0.5], 1: [0.2, 0.8], 2: [0.2, 0.8]}, (0, 1), 0)
        u = binary_utility({0: [0, 1], 1: [0, 1], 2: [0, 1]})
        assert m.expected_harm(u, 1) == pytest.approx(0.1, abs=1e-15)
        assert m.expected_harm(u, 2) == pytest.approx(0.1, abs=1e-15)
        assert m.expected_harm(u, 0) == 0.0

    def test_validation(self):
        with pytest.raises(ModelError, match="sums"):
            A.build_cfi_model({0: [0.5, 0.6]}, (0, 1), 0)
        with pytest.raises(ModelError, match="default"):
            A.build_cfi_model({0: [0.5, 0.5]}, (0, 1), 1)
        with pytest.raises(ModelError, match="entries"):
            A.build_cfi_model({0: [1.0]}, (0, 1), 0)
        with pytest.raises(ModelError, match="not in the domain"):
            A.build_cfi_model({0: {5: 1.0}}, (0, 1), 0)

    def test_multilabel_needs_levels(self):
        m = A.build_cfi_model({0: [0.2, 0.3, 0.5], 1: [1.0, 0.0, 0.0]}, (0, 1, 2), 0)
        with pytest.raises(ModelError, match="binary levels"):
            A.phi_bounds(m, 1, 0)

    @given(seeds)
    def test_enumeration_agrees_with_direct_sums(self, seed):
        rng = np.random.default_rng(seed)
        u = dependent_utility(rng)
        m = A.binary_concentrated_model(u, {}, (0, 1, 2))
        lo, hi = A.phi_bounds(m, 1, 0)
        m = A.apply_phi_shift(m, 1, 0, rng.uniform(lo, hi))
        scm, ext = m.to_scm(u)
        rep = H.harm_report(scm, ext, {})
        for a in m.actions:
            assert rep.actions[a].expected_utility == pytest.approx(m.expected_utility(u, a), abs=1e-12)
            assert rep.actions[a].expected_harm == pytest.approx(m.expected_harm(u, a), abs=1e-12)
            assert rep.actions[a].expected_benefit == pytest.approx(m.expected_benefit(u, a), abs=1e-12)


class TestConcentratedModel:
    @given(seeds)
    def test_equal_utilities_and_positive_harm(self, seed):
        u = dependent_utility(np.random.default_rng(seed))
        m = A.binary_concentrated_model(u, {}, (0, 1, 2))
        eus = [m.expected_utility(u, a) for a in m.actions]
        assert max(eus) - min(eus) < 1e-12
        assert m.expected_harm(u, 1) > 0 and m.expected_harm(u, 2) > 0

    def test_constant_utility_rejected(self):
        u = binary_utility({0: [1, 1], 1: [0, 1]})
        with pytest.raises(A.OutcomeDependenceError):
            A.binary_concentrated_model(u, {}, (0, 1))

    def test_disjoint_ranges_rejected(self):
        u = binary_utility({0: [0, 1], 1: [2, 3]})
        assert not A.outcome_dependent(u, {}, (0, 1))
        with pytest.raises(A.OutcomeDependenceError, match="overlap"):
            A.binary_concentrated_model(u, {}, (0, 1))

    def test_explicit_weights(self):
        u = binary_utility({0: [0, 1], 1: [0, 1]})
        m = A.binary_concentrated_model(u, {}, (0, 1), weights={0: 0.5, 1: 0.8})
        np.testing.assert_allclose(m.marginal(1), [0.2, 0.8], atol=1e-15)
        with pytest.raises(ValueError):
            A.binary_concentrated_model(u, {}, (0, 1), weights={0: 1.5, 1: 0.5})


class TestPhiShift:
    def test_bounds_examples(self):
        u = binary_utility({0: [0, 1], 1: [0, 1]})
        half = A.binary_concentrated_model(u, {}, (0, 1), weights={0: 0.5, 1: 0.5})
        assert A.phi_bounds(half, 1, 0) == pytest.approx((-0.25, 0.25))
        skew = A.binary_concentrated_model(u, {}, (0, 1), weights={0: 0.8, 1: 0.5})
        assert A.phi_bounds(skew, 1, 0) == pytest.approx((-0.1, 0.1))
        sure = A.binary_concentrated_model(u, {}, (0, 1), weights={0: 1.0, 1: 0.5})
        assert A.phi_bounds(sure, 1, 0) == (0.0, 0.0)

    def test_out_of_bounds_rejected(self):
        u = binary_utility({0: [0, 1], 1: [0, 1]})
        m = A.binary_concentrated_model(u, {}, (0, 1), weights={0: 0.5, 1: 0.5})
        with pytest.raises(ValueError, match="admissible"):
            A.apply_phi_shift(m, 1, 0, 0.3)
        with pytest.raises(ModelError):
            A.apply_phi_shift(m, 0, 0, 0.1)

    def test_shifts_compose(self):
        u = binary_utility({0: [0, 1], 1: [0, 1]})
        m = A.binary_concentrated_model(u, {}, (0, 1), weights={0: 0.5, 1: 0.5})
        twice = A.apply_phi_shift(A.apply_phi_shift(m, 1, 0, 0.1), 1, 0, 0.05)
        once = A.apply_phi_shift(m, 1, 0, 0.15)
        np.testing.assert_allclose(twice.coupled.joint, once.coupled.joint, atol=1e-15)
        assert twice.coupled.phi == pytest.approx(0.15)
        with pytest.raises(ModelError, match="already coupled"):
            A.apply_phi_shift(once, 0, 1, 0.01)

    @given(seeds, st.floats(-1.0, 1.0))
    def test_marginals_preserved_by_enumeration(self, seed, frac):
        rng = np.random.default_rng(seed)
        u = dependent_utility(rng)
        m = A.binary_concentrated_model(u, {}, (0, 1, 2))
        lo, hi = A.phi_bounds(m, 1, 0)
        shifted = A.apply_phi_shift(m, 1, 0, frac * (hi if frac > 0 else -lo))
        scm, _ = shifted.to_scm(u)
        for a in m.actions:
            dist = S.interventional_distribution(scm, {"A": a}).marginal("Y")
            for i, y in enumerate(m.outcome_domain):
                assert dist[(y,)] == pytest.approx(m.marginal(a)[i], abs=1e-15)

    @given(seeds, st.floats(-1.0, 1.0))
    def test_harm_moves_linearly(self, seed, frac):
        rng = np.random.default_rng(seed)
        u = dependent_utility(rng)
        m = A.binary_concentrated_model(u, {}, (0, 1, 2))
        lo, hi = A.phi_bounds(m, 1, 0)
        phi = frac * (hi if frac > 0 else -lo)
        coef = A.harm_shift_coefficient(m, u, 1, 0)
        moved = A.apply_phi_shift(m, 1, 0, phi).expected_harm(u, 1) - m.expected_harm(u, 1)
        assert moved == pytest.approx(phi * coef, abs=1e-12)

    @given(seeds)
    def test_coefficient_strictly_negative_under_overlap(self, seed):
        u = dependent_utility(np.random.default_rng(seed))
        m = A.binary_concentrated_model(u, {}, (0, 1, 2))
        assert A.harm_shift_coefficient(m, u, 1, 0) < 0
        assert A.harm_shift_coefficient(m, u, 2, 0) < 0

    @given(seeds)
    def test_family_orders_harm(self, seed):
        u = dependent_utility(np.random.default_rng(seed))
        fam = A.ShiftFamily.build(A.binary_concentrated_model(u, {}, (0, 1, 2)), u, 1)
        assert fam.marginals_preserved()
        assert fam.harms_ordered(u)
        assert fam.phi_plus < 0 < fam.phi_minus


class TestMixedAction:
    @given(seeds, st.floats(0.0, 1.0))
    def test_mixture_harm_is_weighted(self, seed, q):
        rng = np.random.default_rng(seed)
        u = dependent_utility(rng)
        m = A.binary_concentrated_model(u, {}, (0, 1, 2))
        scm, ext = m.to_scm(u, mixture=(q, 1, 0))
        rep = H.harm_report(scm, ext, {})
        tau = rep.actions[A.MIXED_ACTION]
        assert tau.expected_harm == pytest.approx(q * m.expected_harm(u, 1), abs=1e-12)
        want_eu = q * m.expected_utility(u, 1) + (1 - q) * m.expected_utility(u, 0)
        assert tau.expected_utility == pytest.approx(want_eu, abs=1e-12)

    def test_bad_weight(self):
        u = binary_utility({0: [0, 1], 1: [0, 1]})
        m = A.binary_concentrated_model(u, {}, (0, 1))
        with pytest.raises(ValueError):
            m.to_scm(u, mixture=(1.5, 1, 0))


class TestWitnesses:
    def test_expected_utility_maximizer_is_harmful(self):
        u = binary_utility({0: [0, 1], 1: [0, 1]})
        base, verdict = A.expected_utility_witness(u, 0, 1)
        assert base.expected_harm(u, 1) == pytest.approx(0.25)
        assert verdict.flag and verdict.witness == 1 and verdict.maximizers == (0, 1)

    def test_expected_utility_witness_needs_overlap(self):
        u = binary_utility({0: [0, 1], 1: [2, 3]})
        with pytest.raises(A.OutcomeDependenceError):
            A.expected_utility_witness(u, 0, 1)

    @given(seeds)
    def test_random_factual_objectives_flagged(self, seed):
        rng = np.random.default_rng(seed)
        u = dependent_utility(rng)
        obj_vals = rng.normal(size=u.values.shape)
        obj = H.Objective(u.actions, [], [], ["Y"], u.outcome_domains, obj_vals)
        rec = A.factual_objective_witness(u, obj, 0, 1, 2)
        assert rec.environment in ("M+", "M-")
        assert rec.harmful_in[rec.environment]
        assert rec.flagged in rec.options and rec.witness in rec.options
        # a factual objective cannot tell the environments apart
        for opt in rec.options:
            ej = [rec.tables[env][opt][2] for env in ("M0", "M+", "M-")]
            assert max(ej) - min(ej) < 1e-12

    def test_tied_harms_compare_pure_actions(self):
        u = binary_utility({0: [0, 1], 1: [0, 1], 2: [0, 1]})
        obj = H.Objective(u.actions, [], [], ["Y"], u.outcome_domains, u.values)
        rec = A.factual_objective_witness(u, obj, 0, 1, 2)
        assert rec.options == (1, 2) and rec.q is None
        assert rec.environment is not None

    def test_distinct_actions_required(self):
        u = binary_utility({0: [0, 1], 1: [0, 1]})
        with pytest.raises(ValueError):
            A.factual_objective_witness(u, u, 0, 1, 1)

    def test_witness_csv(self, tmp_path):
        rng = np.random.default_rng(4)
        u = dependent_utility(rng)
        rec = A.factual_objective_witness(u, u, 0, 1, 2)
        p = tmp_path / "w.csv"
        A.write_witness_csv(p, rec, {"seed": 4})
        lines = p.read_text().splitlines()
        assert lines[0] == "# seed: 4"
        rows = list(csv.DictReader(lines[1:]))
        assert {r["environment"] for r in rows} == {"M0", "M+", "M-"}
        assert len(rows) == 3 * len(rec.options)
