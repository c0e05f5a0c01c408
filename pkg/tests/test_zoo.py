import numpy as np
import pytest

from harmcalc import harm as H
from harmcalc import zoo as Z
from harmcalc.hetanm import HarmInputs, closed_form_expected_harm, mc_expected_harm, single_noise_model


class TestPreemption:
    def test_shooting_harm_is_one(self):
        assert Z.preemption_harm(1) == 1.0
        assert Z.preemption_harm(0) == 0.0

    def test_utility_paths(self):
        scm, util = Z.preemption_model()
        # default: alive at t=0 and t=1, killed by the fireball at t=2
        assert H.default_expected_utility(scm, util, {}) == 2.0
        assert H.expected_utility(scm, util, 1, {}) == 1.0


class TestAssistant:
    def test_harm_of_unit_step(self):
        spec = Z.AssistantSpec()
        unit = closed_form_expected_harm(HarmInputs(100.0, 100.0))
        for k in (2.0, 5.0, 20.0):
            assert spec.expected_harm(1, k) == pytest.approx((k - 1) * unit, rel=1e-12)
        assert spec.expected_harm(1, 1.0) == 0.0

    def test_scaled_down_branch(self):
        spec = Z.AssistantSpec()
        # K < 1: dU = -100(1-K), s = 100(1-K), so harm = 100(1-K)·E[max(0, 1 + Z)]
        per_unit = 100.0 * closed_form_expected_harm(HarmInputs(-1.0, 1.0))
        assert per_unit == pytest.approx(108.33, abs=0.005)
        assert spec.expected_harm(1, 0.5) == pytest.approx(0.5 * per_unit, rel=1e-12)

    def test_bonus_and_cancel_harm(self):
        spec = Z.AssistantSpec()
        assert spec.expected_harm(2) == 0.0
        assert spec.expected_harm(3) == pytest.approx(closed_form_expected_harm(HarmInputs(-20.0, 100.0)))

    def test_cancel_harm_by_monte_carlo(self):
        # cancelling swaps the random return for the sure principal
        est = mc_expected_harm(single_noise_model(-20.0, -100.0), 1, n=500_000, seed=1)
        assert abs(est.estimate - Z.AssistantSpec().expected_harm(3)) < 3 * est.stderr

    def test_thresholds(self):
        t = Z.assistant_thresholds()
        assert t["risk_averse_cancel"] == pytest.approx(0.003125, abs=1e-12)
        assert t["risk_averse_bonus"] > t["risk_averse_cancel"]
        assert t["harm_averse_switch"] == pytest.approx(11.93, abs=0.05)
        assert t["harm_averse_slope"] > t["harm_averse_switch"]

    def test_expected_return_maximizer(self):
        d = Z.assistant_decision("eu-max")
        assert (d.action, d.k, d.expected_return) == (1, 20.0, 2000.0)

    def test_risk_averse_switches_to_cancel(self):
        t = Z.assistant_thresholds()["risk_averse_cancel"]
        assert Z.assistant_decision("risk-averse", t * 0.99).action == 1
        assert Z.assistant_decision("risk-averse", t * 1.01).action == 3

    def test_risk_averse_interior_scale(self):
        d = Z.assistant_decision("risk-averse", 0.001)
        assert d.k == pytest.approx(5.0)

    def test_harm_averse_switches_to_bonus(self):
        t = Z.assistant_thresholds()["harm_averse_switch"]
        assert Z.assistant_decision("harm-averse", t - 0.01).action == 1
        assert Z.assistant_decision("harm-averse", t + 0.01).action == 2

    def test_harm_averse_value_matches_grid_search(self):
        spec = Z.AssistantSpec()
        for lam in (0.5, 11.0, 30.0):
            ks = np.linspace(spec.k_min, spec.k_max, 2001)
            best = max(100 * k - lam * spec.expected_harm(1, k) for k in ks)
            assert Z.assistant_decision("harm-averse", lam).candidates[1][1] == pytest.approx(best, abs=1e-9)

    def test_errors(self):
        with pytest.raises(ValueError):
            Z.assistant_decision("gambler")
        with pytest.raises(ValueError):
            Z.assistant_decision("harm-averse", -1.0)
        with pytest.raises(ValueError):
            Z.AssistantSpec(k_min=2.0)
        with pytest.raises(ValueError):
            Z.AssistantSpec().mean_sd(1, 25.0)
