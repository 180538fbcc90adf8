"""Builtin instances, validation, and the JSON schema round-trips."""
import dataclasses
import json

import pytest

from modal_market.netgraph import shortest_time
from modal_market.scenario import (
    SchemaViolation,
    UnknownScenarioId,
    builtin,
    builtin_sioux,
    load,
    save,
    to_document,
    validate,
    with_param,
)


class TestBuiltin5Node:
    def test_validates_clean(self, five_node):
        assert validate(five_node) == []

    def test_fixed_quantities(self, five_node):
        assert five_node.od(1, 2).demand == 100.0
        assert five_node.od(2, 1).demand == 100.0
        assert five_node.signin_at(5) == 20.0
        assert five_node.od(1, 2).transit_time == 40.0
        assert five_node.od(1, 2).hub == 3
        assert five_node.od(2, 1).hub == 4

    def test_coefficients(self, five_node):
        tp = five_node.traveler_params
        assert (tp.beta0_drive, tp.beta0_ride, tp.beta0_multi) == (4.0, 2.0, 1.0)
        assert (tp.beta1_drive, tp.beta1_ride, tp.beta1_multi) == (0.3, 0.2, 0.1)
        assert tp.beta1_wait == 0.2
        assert tp.beta2 == 1.0
        dp = five_node.driver_params
        assert dp.beta0_H == 2.0
        assert dp.beta1 == 0.3
        assert dp.beta3 == 1.0
        assert dp.beta0_at(3) == 0.0

    def test_bystander_relocation_time(self, five_node):
        assert five_node.relocation_time(5, 1) == 15.0
        assert five_node.relocation_time(5, 2) == 15.0

    def test_derived_sets(self, five_node):
        assert five_node.origins == (1, 2)
        assert five_node.dests == (1, 2)
        assert five_node.hubs == (3, 4)
        assert five_node.dropoffs == (1, 2, 3, 4)
        assert five_node.driver_pairs == ((1, 2), (2, 1), (1, 3), (2, 4))

    def test_label_swap_symmetry(self, five_node):
        """Relabeling 1<->2 and 3<->4 maps the scenario onto itself."""
        swap = {1: 2, 2: 1, 3: 4, 4: 3, 5: 5}
        links = {(l.frm, l.to): l.free_flow_time for l in five_node.network.links}
        assert links == {
            (swap[a], swap[b]): t for (a, b), t in links.items()
        }
        ods = {
            (od.r, od.s): (od.demand, od.hub, od.drive_time, od.hub_access_time)
            for od in five_node.ods
        }
        swapped = {
            (swap[r], swap[s]): (demand, swap[hub], t1, t2)
            for (r, s), (demand, hub, t1, t2) in ods.items()
        }
        assert ods == swapped
        reloc = five_node.relocation_times
        assert all(
            reloc[(n, r)] == reloc[(swap[n], swap[r])] for (n, r) in reloc
        )
        assert all(
            five_node.signin_at(n) == five_node.signin_at(swap[n])
            for n in five_node.network.nodes
        )


class TestBuiltinSioux:
    def test_validates_clean(self, sioux_scenarios):
        for sc in sioux_scenarios.values():
            assert validate(sc) == []

    def test_hub_sets(self, sioux_scenarios):
        assert sioux_scenarios[1].hubs == (10, 15)
        assert sioux_scenarios[2].hubs == (11, 15, 16)
        assert sioux_scenarios[3].hubs == (10, 11, 12, 15, 16, 18, 22)

    def test_hub_mapping(self, sioux_scenarios):
        assert sioux_scenarios[2].od(7, 20).hub == 16
        assert sioux_scenarios[3].od(23, 9).hub == 22
        assert sioux_scenarios[1].od(1, 13).hub == 10

    def test_hub_sharing(self, sioux_scenarios):
        assert len(sioux_scenarios[1].ods_of_hub[10]) == 5

    def test_hub_groups_partition_the_od_set(self, sioux_scenarios):
        for sc in sioux_scenarios.values():
            indices = sorted(
                i for group in sc.ods_of_hub.values() for i in group
            )
            assert indices == list(range(len(sc.ods)))

    def test_demands(self, sioux_scenarios):
        sc = sioux_scenarios[1]
        expected = {
            (1, 13): 500.0, (4, 24): 200.0, (5, 22): 200.0, (6, 21): 100.0,
            (7, 20): 500.0, (19, 5): 100.0, (23, 9): 500.0,
        }
        assert {rs: sc.od(*rs).demand for rs in sc.rs_pairs} == expected

    def test_times_from_shortest_paths(self, sioux_scenarios):
        sc = sioux_scenarios[2]
        net = sc.network
        for od in sc.ods:
            assert od.drive_time == shortest_time(net, od.r, od.s)
            assert od.hub_access_time == shortest_time(net, od.r, od.hub)
            assert od.transit_time == 2.0 * shortest_time(net, od.hub, od.s)

    def test_node_22_is_both_destination_and_hub_in_scenario_3(self, sioux_scenarios):
        sc = sioux_scenarios[3]
        assert 22 in sc.dests and 22 in sc.hubs

    def test_unknown_scenario_id(self):
        with pytest.raises(UnknownScenarioId):
            builtin_sioux(4)
        with pytest.raises(UnknownScenarioId):
            builtin("builtin:siouxfalls")

    def test_builtin_resolver(self, five_node):
        assert builtin("builtin:5node") == five_node
        assert builtin("builtin:sioux2").name == "sioux2"


class TestValidate:
    def test_zero_demand_names_the_od(self, five_node):
        ods = list(five_node.ods)
        ods[1] = dataclasses.replace(ods[1], demand=0.0)
        sc = dataclasses.replace(five_node, ods=tuple(ods))
        violations = validate(sc)
        assert len(violations) == 1
        assert "(2,1)" in violations[0] and "demand" in violations[0]

    def test_absent_hub_node(self, five_node):
        ods = list(five_node.ods)
        ods[0] = dataclasses.replace(ods[0], hub=9)
        sc = dataclasses.replace(five_node, ods=tuple(ods))
        violations = validate(sc)
        assert any("/hub" in v and "9" in v for v in violations)

    def test_duplicate_hub_leg_flagged(self, five_node):
        # second OD from node 1 whose hub leg collides with (1, 3)
        extra = dataclasses.replace(five_node.ods[0], s=4, hub=3)
        sc = dataclasses.replace(five_node, ods=five_node.ods + (extra,))
        assert any("ambiguous" in v for v in validate(sc))

    def test_hub_leg_collision_with_direct_pair(self, five_node):
        # make OD (1,2) use hub 2: the hub leg (1,2) is also the direct pair
        ods = list(five_node.ods)
        ods[0] = dataclasses.replace(ods[0], hub=2)
        sc = dataclasses.replace(five_node, ods=tuple(ods))
        assert any("collides" in v for v in validate(sc))

    def test_zero_signin_at_bystander_node(self, five_node):
        signin = dict(five_node.signin)
        signin[5] = 0.0
        sc = dataclasses.replace(five_node, signin=signin)
        assert any("unsatisfiable" in v for v in validate(sc))

    def test_zero_signin_at_dropoff_node_is_fine(self, five_node):
        signin = dict(five_node.signin)
        signin[3] = 0.0
        sc = dataclasses.replace(five_node, signin=signin)
        assert validate(sc) == []

    def test_nonpositive_beta2(self, five_node):
        sc = with_param(five_node, "traveler_params.beta2", 0.0)
        assert any("beta2" in v for v in validate(sc))

    def test_missing_relocation_entry(self, five_node):
        reloc = dict(five_node.relocation_times)
        del reloc[(5, 1)]
        sc = dataclasses.replace(five_node, relocation_times=reloc)
        assert any("relocation_times/5/1" in v for v in validate(sc))


class TestJsonSchema:
    def test_round_trip_5node(self, five_node):
        assert load(save(five_node)) == five_node

    def test_round_trip_sioux(self, sioux_scenarios):
        sc = sioux_scenarios[3]
        assert load(save(sc)) == sc

    def test_canonical_document_round_trip(self, five_node):
        doc = to_document(five_node)
        assert to_document(load(json.dumps(doc))) == doc

    def test_missing_beta2_pointer(self, five_node):
        doc = to_document(five_node)
        del doc["traveler_params"]["beta2"]
        with pytest.raises(SchemaViolation) as err:
            load(json.dumps(doc))
        assert err.value.pointer == "/traveler_params/beta2"

    def test_negative_fare_rejected(self, five_node):
        doc = to_document(five_node)
        doc["ods"][0]["transit_fare"] = -1.0
        with pytest.raises(SchemaViolation) as err:
            load(json.dumps(doc))
        assert err.value.pointer == "/ods/0/transit_fare"

    def test_bad_json(self):
        with pytest.raises(SchemaViolation):
            load(b"{not json")

    def test_wrong_type_for_nodes(self, five_node):
        doc = to_document(five_node)
        doc["network"]["nodes"] = "all"
        with pytest.raises(SchemaViolation) as err:
            load(json.dumps(doc))
        assert err.value.pointer == "/network/nodes"

    def test_driver_beta2_warns_and_is_ignored(self, five_node):
        doc = to_document(five_node)
        doc["driver_params"]["beta2"] = 0.2
        with pytest.warns(UserWarning, match="beta2"):
            sc = load(json.dumps(doc))
        assert sc == five_node

    def test_scalar_beta0_r(self, five_node):
        doc = to_document(five_node)
        doc["driver_params"]["beta0_r"] = 0.5
        sc = load(json.dumps(doc))
        assert sc.driver_params.beta0_at(1) == 0.5

    def test_signout_bonus_round_trip(self, five_node):
        sc = dataclasses.replace(five_node, signout_bonus={1: 2.5})
        assert load(save(sc)) == sc
        assert load(save(sc)).signout_bonus_at(1) == 2.5

    def test_auto_shortest_path_relocation(self, five_node):
        doc = to_document(five_node)
        doc["relocation_times"] = {"auto_shortest_path": True, "overrides": []}
        sc = load(json.dumps(doc))
        assert sc.relocation_times == five_node.relocation_times


class TestWithParam:
    def test_replaces_nested_scalar(self, five_node):
        sc = with_param(five_node, "traveler_params.beta2", 7.0)
        assert sc.traveler_params.beta2 == 7.0
        assert five_node.traveler_params.beta2 == 1.0

    def test_unknown_path(self, five_node):
        with pytest.raises(ValueError):
            with_param(five_node, "traveler_params.bogus", 1.0)

    def test_non_scalar_target(self, five_node):
        with pytest.raises(ValueError):
            with_param(five_node, "network", 1.0)
