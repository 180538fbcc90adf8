"""Metrics, parameter sweeps, and the hub-count study."""
import dataclasses
import math

import pytest

from modal_market.analytics import (
    hub_study,
    metrics,
    sweep,
    total_relocation_time,
)
from modal_market.scenario import MODES


class TestMetrics:
    def test_mode_shares_sum_to_one(self, five_node, five_node_solution):
        rep = metrics(five_node, five_node_solution)
        for rs, shares in rep.mode_share.items():
            assert abs(sum(shares.values()) - 1.0) <= 1e-12

    def test_5node_share_ordering(self, five_node, five_node_solution):
        rep = metrics(five_node, five_node_solution)
        for shares in rep.mode_share.values():
            assert shares["ride"] > shares["drive"] > shares["multi"]

    def test_relocation_time_matches_brute_force(self, five_node, five_node_solution):
        rep = metrics(five_node, five_node_solution)
        brute = 0.0
        for n in five_node.network.nodes:
            for pair in five_node.driver_pairs:
                r = pair[0]
                t_nr = 0.0 if n == r else five_node.relocation_time(n, r)
                brute += five_node_solution.driver.q[n][pair] * t_nr
        assert rep.total_relocation_time == brute
        assert rep.empty_vmt_proxy == rep.total_relocation_time

    def test_all_staying_drivers_zero_relocation(self, five_node, five_node_solution):
        q = {
            n: {pair: (1.0 if pair[0] == n else 0.0) for pair in five_node.driver_pairs}
            for n in five_node.network.nodes
        }
        stay_home = dataclasses.replace(five_node_solution.driver, q=q)
        sol = dataclasses.replace(five_node_solution, driver=stay_home)
        assert total_relocation_time(five_node, sol) == 0.0

    def test_recomputation_bit_identical(self, five_node, five_node_solution):
        a = metrics(five_node, five_node_solution)
        b = metrics(five_node, five_node_solution)
        assert a == b

    def test_negative_price_raises_subsidy_flag(self, five_node):
        from modal_market.scenario import with_param
        from modal_market.equilibrium import solve

        sc = with_param(five_node, "traveler_params.beta2", 0.1)
        sol = solve(sc)
        rep = metrics(sc, sol)
        assert all(rep.subsidy.values())
        assert all(rep.rho_hub[rs] < 0 for rs in sc.rs_pairs)


class TestSweep:
    def test_single_value_equals_plain_solve(self, five_node, five_node_solution):
        cells = sweep(five_node, "traveler_params.beta2", [1.0])
        assert len(cells) == 1
        cell = cells[0]
        assert cell.converged
        totals = {
            mode: sum(q[mode] for q in five_node_solution.traveler.q.values())
            for mode in MODES
        }
        assert cell.total_ride == pytest.approx(totals["ride"], rel=1e-12)
        assert cell.winner == "ride"

    def test_three_values_three_cells_in_input_order(self, five_node):
        cells = sweep(five_node, "traveler_params.beta2", [0.1, 1.0, 10.0])
        assert [c.value for c in cells] == [0.1, 1.0, 10.0]

    def test_sensitivity_narrative(self, five_node):
        lo, mid, hi = sweep(five_node, "traveler_params.beta2", [0.1, 1.0, 10.0])
        assert lo.winner == "drive"
        assert lo.min_rho_hub < 0
        assert mid.winner == "ride"
        assert hi.winner == "ride"
        assert hi.total_drive < 0.01 * (hi.total_drive + hi.total_ride + hi.total_multi)

    def test_failures_recorded_not_raised(self, five_node):
        cells = sweep(
            five_node, "traveler_params.beta2", [1.0, -1.0], max_iter=200
        )
        assert cells[0].converged
        assert not cells[1].converged
        assert cells[1].error is not None
        assert math.isnan(cells[1].total_ride)

    def test_bad_path_recorded(self, five_node):
        cells = sweep(five_node, "traveler_params.nope", [1.0])
        assert not cells[0].converged
        assert "nope" in cells[0].error


class TestHubStudy:
    def test_three_scenarios(self):
        study = hub_study()
        assert [t.scenario for t in study.totals] == [1, 2, 3]
        assert [t.n_hubs for t in study.totals] == [2, 3, 7]
        assert len(study.rows) == 21  # 7 ODs x 3 scenarios

    def test_aggregate_monotonicity(self):
        study = hub_study()
        assert study.summary["multi_strictly_increasing"]
        assert study.summary["drive_strictly_decreasing"]
        assert study.summary["relocation_strictly_increasing"]

    def test_totals_match_rows(self):
        study = hub_study()
        for t in study.totals:
            rows = [r for r in study.rows if r.scenario == t.scenario]
            assert t.total_multi == pytest.approx(sum(r.multi for r in rows), rel=1e-12)
