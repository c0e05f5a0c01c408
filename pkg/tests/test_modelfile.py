import copy
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from harmcalc import harm as H
from harmcalc.modelfile import LoadedModel, ModelFileError, export_model, load_model, model_from_dict, model_to_dict
from harmcalc.random_models import positive_contexts, random_objective, random_scm, random_utility
from harmcalc.scm import ModelError

seeds = st.integers(0, 2**32 - 1)


@pytest.fixture
def treatment_doc(treatment):
    scm, util = treatment
    return model_to_dict(scm, util)


class TestRoundTrip:
    @given(seeds)
    def test_random_models_survive(self, seed):
        rng = np.random.default_rng(seed)
        scm = random_scm(rng)
        util = random_utility(rng, scm)
        obj = random_objective(rng, scm)
        doc = model_to_dict(scm, util, obj)
        back = model_from_dict(json.loads(json.dumps(doc)))
        assert model_to_dict(back.scm, back.utility, back.objective) == doc
        ctx = positive_contexts(scm)[0]
        r0, r1 = H.harm_report(scm, util, ctx), H.harm_report(back.scm, back.utility, ctx)
        for a in scm.actions:
            assert r0.actions[a] == r1.actions[a]

    def test_file_round_trip(self, tmp_path, treatment):
        scm, util = treatment
        p = tmp_path / "m.json"
        export_model(p, scm, util)
        loaded = load_model(p)
        assert isinstance(loaded, LoadedModel)
        s, u, o = loaded
        assert o is None
        assert H.expected_harm(s, u, 2) == pytest.approx(0.1, abs=1e-12)

    def test_default_policy_forms(self, treatment_doc):
        assert treatment_doc["default_policy"] == {"value": 0}
        assert "T" not in treatment_doc["mechanisms"]


class TestErrors:
    def test_schema_violation_has_path(self, treatment_doc):
        doc = copy.deepcopy(treatment_doc)
        doc["exogenous"][0]["probs"] = "half"
        with pytest.raises(ModelFileError, match=r"\$\.exogenous\[0\]\.probs"):
            model_from_dict(doc)

    def test_unknown_top_level_key(self, treatment_doc):
        doc = dict(treatment_doc, extra=1)
        with pytest.raises(ModelFileError):
            model_from_dict(doc)

    def test_missing_table_entry(self, treatment_doc):
        doc = copy.deepcopy(treatment_doc)
        table = doc["mechanisms"]["Y"]["table"]
        del table[next(iter(table))]
        with pytest.raises(ModelFileError, match=r"\$\.mechanisms\['Y'\].*not total"):
            model_from_dict(doc)

    def test_cycle(self):
        doc = {
            "variables": [{"name": "A", "domain": [0, 1]}, {"name": "Y", "domain": [0, 1]},
                          {"name": "Z", "domain": [0, 1]}],
            "exogenous": [],
            "mechanisms": {"Y": {"parents": ["A", "Z"], "table": {f"{a},{z}|": a for a in (0, 1) for z in (0, 1)}},
                           "Z": {"parents": ["Y"], "table": {"0|": 0, "1|": 1}}},
            "roles": {"action": "A", "outcomes": ["Y", "Z"]},
            "default_policy": {"value": 0},
            "utility": {},
        }
        with pytest.raises(ModelError, match="cycle"):
            model_from_dict(doc)

    def test_bad_label(self, treatment_doc):
        doc = copy.deepcopy(treatment_doc)
        doc["default_policy"] = {"value": 7}
        with pytest.raises(ModelError):
            model_from_dict(doc)

    def test_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ModelFileError):
            load_model(p)
