import numpy as np
import pytest

from hatalloc import (
    build_decoupled,
    initial_state,
    integrate,
    lift_to_saddle,
    saddle_distance,
    solve_centralized,
    squared_deviation,
    workload_report,
)
from hatalloc.dynamics import FlowEngine



class TestSquaredDeviation:
    def test_zero_at_reference(self, path_team):
        x_star, y_star, _, _ = solve_centralized(path_team)
        lay = path_team.layout
        state = initial_state(path_team)
        state.x = lay.unstack_x(x_star)
        assert squared_deviation(path_team, state, (x_star, y_star)) \
            == pytest.approx(0.0, abs=1e-24)

    def test_scalar_offset_squares(self, single_agent):
        state = initial_state(single_agent)
        state.x["a1"] = np.array([2.0])
        ref = (np.array([0.0]), np.zeros(0))
        assert squared_deviation(single_agent, state, ref) == pytest.approx(4.0)

    def test_matches_blockwise_resummation(self, path_team):
        rng = np.random.default_rng(0)
        lay = path_team.layout
        state = initial_state(path_team)
        for i in lay.autonomous_ids:
            state.x[i] = rng.normal(size=path_team.dims[i])
        x_ref = rng.normal(size=lay.x_dim)
        y_ref = rng.normal(size=lay.y_dim)
        value = squared_deviation(path_team, state, (x_ref, y_ref))

        engine = FlowEngine(path_team)
        x = lay.stack_x(state.x)
        y, _ = engine.response(x, 0.0)
        manual = float(np.sum((x - x_ref) ** 2) + np.sum((y - y_ref) ** 2))
        assert value == pytest.approx(manual, rel=1e-12)


class TestSaddleDistance:
    def test_zero_at_saddle(self, path_team):
        dc = build_decoupled(path_team)
        x_star, _, mu_star, _ = solve_centralized(path_team)
        z_star, lam_star, eta_star = lift_to_saddle(path_team, dc, x_star, mu_star)
        lay = path_team.layout
        state = initial_state(path_team)
        state.x = lay.unstack_x(x_star)
        state.z = lay.unstack_nodes(z_star)
        state.lam = lay.unstack_nodes(lam_star)
        assert saddle_distance(path_team, state, (eta_star, lam_star)) \
            == pytest.approx(0.0, abs=1e-20)

    def test_unit_multiplier_offset_is_half(self, path_team):
        lay = path_team.layout
        state = initial_state(path_team)
        eta_ref = np.zeros(lay.x_dim + 2 * len(lay.node_order))
        lam_ref = np.zeros(2 * len(lay.node_order))
        lam_ref[0] = 1.0
        assert saddle_distance(path_team, state, (eta_ref, lam_ref)) \
            == pytest.approx(0.5)


class TestWorkloads:
    def test_zero_states(self, path_team):
        state = initial_state(path_team)
        report = workload_report(path_team, state)
        assert report.by_agent["a1"] == 0.0
        # the human responds from its base even at zero autonomous activity
        assert report.by_agent["k1"] == pytest.approx(1.8)

    def test_one_norm(self, path_team):
        state = initial_state(path_team)
        state.x["a1"] = np.array([1.0, -2.0])
        report = workload_report(path_team, state)
        assert report.by_agent["a1"] == pytest.approx(3.0)
        assert report.autonomous_total == pytest.approx(3.0)


class TestTrajectoryRecord:
    def test_csv_columns_and_reproducibility(self, path_team):
        scenario = path_team.with_solver(max_time=0.5, record_stride=100)
        dc = build_decoupled(scenario)
        x_star, y_star, mu_star, _ = solve_centralized(scenario)
        _, lam_star, eta_star = lift_to_saddle(scenario, dc, x_star, mu_star)
        _, rec1 = integrate(scenario, dc=dc, reference=(x_star, y_star),
                            saddle=(eta_star, lam_star))
        _, rec2 = integrate(scenario, dc=dc, reference=(x_star, y_star),
                            saddle=(eta_star, lam_star))
        text1, text2 = rec1.to_csv(), rec2.to_csv()
        assert text1 == text2  # byte-identical reruns
        header = text1.splitlines()[0].split(",")
        assert header[:6] == ["t", "deviation", "saddle_dist",
                              "max_coupled_residual", "min_multiplier",
                              "lagrangian"]
        assert header[6:] == [f"workload_{a}" for a in scenario.layout.node_order]

    def test_reference_free_record_omits_columns(self, path_team):
        scenario = path_team.with_solver(max_time=0.2)
        _, rec = integrate(scenario)
        header = rec.to_csv().splitlines()[0].split(",")
        assert "deviation" not in header
        assert "saddle_dist" not in header

    def test_final_sample_matches_returned_state(self, path_team):
        scenario = path_team.with_solver(max_time=1.0, record_stride=77)
        x_star, y_star, _, _ = solve_centralized(scenario)
        final, rec = integrate(scenario, reference=(x_star, y_star))
        recomputed = squared_deviation(scenario, final, (x_star, y_star))
        assert abs(rec.samples[-1].deviation - recomputed) <= 1e-12

    def test_time_strictly_increasing(self, path_team):
        scenario = path_team.with_solver(max_time=1.0, record_stride=50)
        _, rec = integrate(scenario)
        times = [s.t for s in rec.samples]
        assert all(b > a for a, b in zip(times, times[1:]))
