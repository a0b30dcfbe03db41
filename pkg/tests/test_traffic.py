import math

import pytest

from conftest import build_flowset, make_flow
from rlnoc.topology import NotOnRingError, generate_multi_ring
from rlnoc.traffic import (
    BenchmarkParams,
    Flowset,
    TrafficError,
    classify_switch_flows,
    flowset_to_doc,
    generate_flowset,
    interference_sets,
    interference_table,
    load_flowset,
)

# The canonical five-flow scenario: all four interference sets per flow.
EXPECTED_SETS = {
    1: ({2}, {3}, {5}, {4}),
    2: ({4}, {1, 5}, set(), set()),
    3: ({1}, set(), set(), {2, 5}),
    4: (set(), {2}, set(), set()),
    5: ({2}, set(), {1}, {4}),
}


class TestFiveFlowScenario:
    def test_all_twenty_entries_exact(self, five_flow_fixture):
        table = interference_table(five_flow_fixture)
        for fid, (up, down, in_ring, upind) in EXPECTED_SETS.items():
            sets = table[fid]
            assert sets.up == frozenset(up), fid
            assert sets.down == frozenset(down), fid
            assert sets.in_ring == frozenset(in_ring), fid
            assert sets.upind == frozenset(upind), fid

    def test_single_flow_api_matches_table(self, five_flow_fixture):
        table = interference_table(five_flow_fixture)
        for flow in five_flow_fixture.flows:
            assert interference_sets(five_flow_fixture, flow) == table[flow.id]

    def test_in_core_and_ring_all(self, five_flow_fixture):
        table = interference_table(five_flow_fixture)
        assert table[1].in_core == frozenset({5})
        assert table[5].in_core == frozenset({1})
        assert table[3].in_core == frozenset()
        for fid in EXPECTED_SETS:
            assert table[fid].ring_all == frozenset(EXPECTED_SETS) - {fid}


class TestClassifySwitchFlows:
    def test_injection_switch_of_two_flows(self, five_flow_fixture):
        into, out, thru = classify_switch_flows(five_flow_fixture, 0, (2, 0))
        assert (into, out, thru) == ({1, 5}, {4}, {2})

    def test_unused_switch_is_empty(self, six_ring_topology):
        flowset = build_flowset(six_ring_topology, make_flow(1, (0, 0), (1, 0)))
        assert classify_switch_flows(flowset, 0, (1, 1)) == (set(), set(), set())

    def test_union_over_switches_covers_the_ring_traffic(self, five_flow_fixture):
        ring = five_flow_fixture.topology.rings[0]
        seen = set()
        for sw in ring.switches:
            for part in classify_switch_flows(five_flow_fixture, 0, sw):
                seen |= part
        assert seen == {1, 2, 3, 4, 5}

    def test_switch_not_on_ring(self, ten_ring_fixture):
        flowset = Flowset((), ten_ring_fixture)
        with pytest.raises(NotOnRingError):
            classify_switch_flows(flowset, 0, (0, 3))


class TestInterferenceProperties:
    def build_random(self, seed, flows=18):
        params = BenchmarkParams(flows_per_set=flows, width=4, height=4, seed=seed)
        return generate_flowset(params)

    def test_disjointness_and_no_self(self):
        for seed in range(8):
            flowset = self.build_random(seed)
            table = interference_table(flowset)
            for flow in flowset.flows:
                s = table[flow.id]
                assert flow.id not in s.up | s.down | s.in_ring | s.in_core | s.upind
                assert not (s.up & s.down) and not (s.up & s.in_ring)
                assert not (s.down & s.in_ring) and not (s.upind & (s.up | s.down | s.in_ring))
                assert s.in_ring <= s.in_core

    def test_co_injection_is_symmetric(self):
        for seed in range(8):
            flowset = self.build_random(seed)
            table = interference_table(flowset)
            for flow in flowset.flows:
                for other in table[flow.id].in_ring:
                    assert flow.id in table[other].in_ring

    def test_down_members_inject_on_the_downstream_path(self):
        from rlnoc.topology import dpath
        for seed in range(4):
            flowset = self.build_random(seed)
            table = interference_table(flowset)
            for flow in flowset.flows:
                ring = flowset.topology.ring(flow.ring)
                interior = set(dpath(ring, flow.src, flow.dst)[:-1])
                for other in table[flow.id].down:
                    assert flowset.flow(other).src in interior

    def test_removing_a_flow_never_grows_sets(self):
        flowset = self.build_random(3)
        table = interference_table(flowset)
        victim = flowset.flows[4].id
        reduced = Flowset(tuple(f for f in flowset.flows if f.id != victim),
                          flowset.topology)
        smaller = interference_table(reduced)
        for flow in reduced.flows:
            before, after = table[flow.id], smaller[flow.id]
            assert after.up <= before.up
            assert after.down <= before.down
            assert after.in_ring <= before.in_ring
            assert after.in_core <= before.in_core
            assert after.ring_all <= before.ring_all


class TestGenerator:
    def test_deterministic(self):
        params = BenchmarkParams(flows_per_set=30, seed=99)
        a = generate_flowset(params)
        b = generate_flowset(params)
        assert a.flows == b.flows

    def test_prefix_property(self):
        small = generate_flowset(BenchmarkParams(flows_per_set=10, seed=5))
        large = generate_flowset(BenchmarkParams(flows_per_set=25, seed=5))
        assert large.flows[:10] == small.flows

    def test_parameter_ranges(self):
        params = BenchmarkParams(flows_per_set=300, seed=11,
                                 packet_range=(16, 48),
                                 period_range=(1_000, 100_000))
        flowset = generate_flowset(params)
        for f in flowset.flows:
            assert 1_000 <= f.period <= 100_000
            assert f.deadline == f.period
            assert 16 <= f.length <= 48
            assert 0 <= f.jitter <= 0.5 * f.period
            assert f.src != f.dst
            ring = flowset.topology.ring(f.ring)
            assert f.src in ring and f.dst in ring

    def test_packet_sizes_uniform_within_three_sigma(self):
        # 10000 draws over 33 equiprobable bins against the multinomial law.
        params = BenchmarkParams(flows_per_set=10_000, seed=2, packet_range=(16, 48))
        flowset = generate_flowset(params)
        counts = {}
        for f in flowset.flows:
            counts[f.length] = counts.get(f.length, 0) + 1
        n, bins = 10_000, 33
        expected = n / bins
        sigma = math.sqrt(n * (1 / bins) * (1 - 1 / bins))
        for size in range(16, 49):
            assert abs(counts.get(size, 0) - expected) <= 3 * sigma, size

    def test_microsecond_scale_periods(self):
        # 1-100 us at 1 GHz means 1000-100000 cycles.
        params = BenchmarkParams(flows_per_set=50, seed=7)
        assert params.period_range == (1_000, 100_000)


class TestFlowsetValidation:
    def test_deadline_greater_than_period_rejected(self, six_ring_topology):
        with pytest.raises(TrafficError):
            build_flowset(six_ring_topology,
                          make_flow(1, (0, 0), (1, 0), period=100, deadline=200))

    def test_equal_endpoints_rejected(self, six_ring_topology):
        with pytest.raises(TrafficError):
            build_flowset(six_ring_topology, make_flow(1, (0, 0), (0, 0)))

    def test_duplicate_ids_rejected(self, six_ring_topology):
        with pytest.raises(TrafficError):
            build_flowset(six_ring_topology,
                          make_flow(1, (0, 0), (1, 0)),
                          make_flow(1, (1, 0), (0, 0)))

    def test_ring_must_contain_endpoints(self, ten_ring_fixture):
        with pytest.raises(TrafficError):
            build_flowset(ten_ring_fixture, make_flow(1, (0, 0), (0, 3), ring=0))


class TestFlowsetFiles:
    def test_roundtrip(self, five_flow_fixture):
        doc = flowset_to_doc(five_flow_fixture, seed=1, embed_topology=True)
        again = load_flowset(doc)
        assert again.flows == five_flow_fixture.flows

    def test_ring_recomputed_when_absent(self, six_ring_topology):
        doc = {"width": 3, "height": 2, "flows": [
            {"id": 1, "T": 100, "D": 100, "L": 4, "J": 0, "src": [0, 0], "dst": [2, 0]}]}
        flowset = load_flowset(doc, six_ring_topology)
        assert flowset.flows[0].ring == 0

    def test_unknown_fields_rejected(self):
        with pytest.raises(TrafficError):
            load_flowset({"width": 2, "height": 2, "flows": [], "junk": 1})
        with pytest.raises(TrafficError):
            load_flowset({"width": 2, "height": 2, "flows": [
                {"id": 1, "T": 10, "D": 10, "L": 1, "J": 0,
                 "src": [0, 0], "dst": [1, 0], "priority": 3}]})

    def test_generated_topology_fallback(self):
        doc = {"width": 2, "height": 2, "flows": [
            {"id": 1, "T": 50, "D": 50, "L": 2, "J": 0, "src": [0, 0], "dst": [1, 1]}]}
        flowset = load_flowset(doc)
        assert flowset.topology.width == 2
        assert flowset.flows[0].ring == 0
