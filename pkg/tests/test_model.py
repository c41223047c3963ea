import json

import numpy as np
import pytest

from hatalloc import (
    load_scenario,
    scenario_from_document,
    serialize_scenario,
    stack_dimensions,
)
from hatalloc.errors import (
    DimensionMismatchError,
    MissingHumanModelError,
    NotPositiveDefiniteError,
    ScenarioFormatError,
)
from hatalloc.model import (
    CustomCost,
    QuadraticCost,
    SolverOptions,
    gradient_consistency_error,
    midpoint_convexity_gap,
)

MINIMAL_DOC = {
    "agents": [{"id": "a1", "kind": "autonomous", "dim": 1}],
    "edges": [],
    "costs": {"a1": {"type": "quadratic", "weight": [[1.0]]}},
    "constraint": {"rows": 1, "a_blocks": {"a1": [[1.0]]}, "b_blocks": {}, "c": [-1.0]},
}


def reference_dims_doc():
    """m=5, h=2 with the reference dimensions, on a star-ish connected graph."""
    dims = {"r1": 3, "r2": 5, "r3": 4, "r4": 2, "r5": 1, "h1": 3, "h2": 5}
    agents = [
        {"id": a, "kind": "human" if a.startswith("h") else "autonomous", "dim": d}
        for a, d in dims.items()
    ]
    edges = [["r1", "r2"], ["r2", "r3"], ["r3", "r4"], ["r4", "r5"],
             ["r1", "h1"], ["r2", "h2"]]
    rng = np.random.default_rng(0)
    costs = {
        a: {"type": "quadratic", "weight": np.diag(rng.uniform(1, 4, d)).tolist()}
        for a, d in dims.items()
    }
    constraint = {
        "rows": 2,
        "a_blocks": {a: rng.uniform(0, 1, (2, dims[a])).tolist() for a in
                     ("r1", "r2", "r3", "r4", "r5")},
        "b_blocks": {k: rng.uniform(0, 1, (2, dims[k])).tolist() for k in ("h1", "h2")},
        "c": [-1.0, 0.5],
    }
    human_models = {
        "h1": {
            "family": "affine",
            "base": [0.1, 0.2, 0.3],
            "gains": {"r1": rng.uniform(0, 0.2, (3, 3)).tolist()},
            "attitude": {"kind": "risk_seeking", "magnitude": 1.0},
        },
        "h2": {
            "family": "affine",
            "base": [0.1] * 5,
            "gains": {"r2": rng.uniform(0, 0.2, (5, 5)).tolist()},
            "attitude": {"kind": "risk_averse", "magnitude": 1.0},
        },
    }
    return {
        "agents": agents,
        "edges": edges,
        "costs": costs,
        "constraint": constraint,
        "human_models": human_models,
        "solver": {"dt": 1e-3, "tolerance": 1e-6, "max_time": 200.0},
    }


class TestLoad:
    def test_minimal_document(self):
        scenario = scenario_from_document(MINIMAL_DOC)
        assert stack_dimensions(scenario) == (1, 0, 1, 1, 0)

    def test_reference_dimensions(self):
        scenario = scenario_from_document(reference_dims_doc())
        assert stack_dimensions(scenario) == (15, 8, 2, 5, 2)

    def test_load_from_json_text(self):
        scenario = load_scenario(json.dumps(MINIMAL_DOC))
        assert scenario.dims["a1"] == 1

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(MINIMAL_DOC))
        scenario = load_scenario(str(path))
        assert scenario.constraint.rows == 1

    def test_dimension_mismatch_names_agent(self):
        doc = reference_dims_doc()
        doc["constraint"]["a_blocks"]["r2"] = np.zeros((2, 4)).tolist()
        with pytest.raises(DimensionMismatchError, match="r2"):
            scenario_from_document(doc)

    def test_non_pd_cost_names_agent(self):
        doc = reference_dims_doc()
        doc["costs"]["r3"] = {"type": "quadratic", "weight": np.zeros((4, 4)).tolist()}
        with pytest.raises(NotPositiveDefiniteError, match="r3"):
            scenario_from_document(doc)

    def test_missing_human_model_names_agent(self):
        doc = reference_dims_doc()
        del doc["human_models"]["h2"]
        with pytest.raises(MissingHumanModelError, match="h2"):
            scenario_from_document(doc)

    def test_schema_violation(self):
        with pytest.raises(ScenarioFormatError):
            scenario_from_document({"agents": []})

    def test_nonfinite_entries_rejected(self):
        doc = reference_dims_doc()
        doc["constraint"]["c"] = [float("nan"), 0.5]
        with pytest.raises(ScenarioFormatError, match="finite"):
            scenario_from_document(doc)

    def test_model_neighbor_list_must_match_topology(self):
        doc = reference_dims_doc()
        doc["human_models"]["h1"]["gains"] = {"r2": np.zeros((3, 5)).tolist()}
        with pytest.raises(Exception, match="h1"):
            scenario_from_document(doc)


class TestStackDimensions:
    def test_offsets_increase_to_total(self):
        scenario = scenario_from_document(reference_dims_doc())
        lay = scenario.layout
        offsets = [lay.x_offsets[i] for i in lay.autonomous_ids]
        assert offsets == sorted(offsets)
        total = offsets[-1] + scenario.dims[lay.autonomous_ids[-1]]
        assert total == lay.x_dim == 15
        assert sum(scenario.dims[k] for k in lay.human_ids) == lay.y_dim == 8


class TestCosts:
    def test_quadratic_requires_symmetry(self):
        with pytest.raises(NotPositiveDefiniteError, match="symmetric"):
            QuadraticCost(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_quadratic_requires_positive_definite(self):
        with pytest.raises(NotPositiveDefiniteError):
            QuadraticCost(np.array([[1.0, 0.0], [0.0, -0.1]]))

    def test_midpoint_convexity_sampling(self):
        rng = np.random.default_rng(1)
        cost = QuadraticCost(np.diag([1.0, 3.0]))
        assert midpoint_convexity_gap(cost, rng, samples=200) <= 1e-9

    def test_gradient_consistency(self):
        rng = np.random.default_rng(2)
        weight = np.array([[2.0, 0.3], [0.3, 1.0]])
        cost = QuadraticCost(weight)
        assert gradient_consistency_error(cost, rng, points=50) <= 1e-5

    def test_custom_cost_callbacks(self):
        cost = CustomCost(
            dim=2,
            value_fn=lambda v: float(np.sum(v ** 4)),
            gradient_fn=lambda v: 4.0 * v ** 3,
        )
        rng = np.random.default_rng(3)
        assert gradient_consistency_error(cost, rng, points=30) <= 1e-5
        assert midpoint_convexity_gap(cost, rng, samples=100) <= 1e-9


class TestRoundTrip:
    def test_serialize_load_is_bit_exact(self):
        scenario = scenario_from_document(reference_dims_doc())
        text = json.dumps(serialize_scenario(scenario))
        again = load_scenario(text)
        for agent_id, cost in scenario.costs.items():
            np.testing.assert_array_equal(cost.weight, again.costs[agent_id].weight)
        for agent_id, block in scenario.constraint.a_blocks.items():
            np.testing.assert_array_equal(block, again.constraint.a_blocks[agent_id])
        for agent_id, block in scenario.constraint.b_blocks.items():
            np.testing.assert_array_equal(block, again.constraint.b_blocks[agent_id])
        np.testing.assert_array_equal(scenario.constraint.c, again.constraint.c)
        for k, model in scenario.human_models.items():
            other = again.human_models[k]
            np.testing.assert_array_equal(model.base, other.base)
            assert model.attitude == other.attitude
            for j, gain in model.gains.items():
                np.testing.assert_array_equal(gain, other.gains[j])


class TestSolverOptions:
    def test_defaults(self):
        opts = SolverOptions()
        assert opts.dt == 1e-3
        assert opts.tolerance == 1e-6
        assert opts.max_time == 200.0

    def test_rejects_bad_policy(self):
        with pytest.raises(ValueError):
            SolverOptions(offset_split="sideways")

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ValueError):
            SolverOptions(dt=0.0)

    def test_unknown_solver_key_in_document(self):
        doc = dict(MINIMAL_DOC)
        doc["solver"] = {"dtt": 1e-3}
        with pytest.raises(ScenarioFormatError, match="solver"):
            scenario_from_document(doc)


class TestSlaterFlag:
    def test_load_with_check_slater_passes_on_interior(self):
        doc = dict(MINIMAL_DOC)
        doc["solver"] = {"check_slater": True}
        scenario = load_scenario(json.dumps(doc))
        assert scenario.solver.check_slater

    def test_load_with_check_slater_rejects_pinched_interior(self):
        doc = dict(MINIMAL_DOC)
        doc["constraint"] = {
            "rows": 2,
            "a_blocks": {"a1": [[1.0], [-1.0]]},
            "b_blocks": {},
            "c": [0.0, 0.0],
        }
        from hatalloc.errors import SlaterConditionError

        with pytest.raises(SlaterConditionError):
            load_scenario(json.dumps(doc), check_slater=True)


class TestOffsets:
    def test_random_scenarios_have_consistent_offsets(self):
        from hatalloc.experiments import random_scenario

        for seed in range(6):
            scenario = random_scenario(seed)
            lay = scenario.layout
            running = 0
            for i in lay.autonomous_ids:
                assert lay.x_offsets[i] == running
                running += scenario.dims[i]
            assert running == lay.x_dim
            running = 0
            for k in lay.human_ids:
                assert lay.y_offsets[k] == running
                running += scenario.dims[k]
            assert running == lay.y_dim
