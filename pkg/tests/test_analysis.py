import random

import pytest

from conftest import build_flowset, make_flow
from rlnoc.analysis import (
    AnalysisConfig,
    AnalysisError,
    AnalysisRecord,
    analyze,
    basic_latency,
    buffer_bound,
    idle_cycle_wait,
    loop_latency,
    parse_profile,
    post_injection_interference,
    pre_injection_basic,
    pre_injection_deflected,
    pre_injection_shared,
    profile_name,
    queue_wait,
    resolve_maxloop,
    results_to_csv,
    ring_capacity,
    _fixed_point,
)
from rlnoc.topology import generate_multi_ring
from rlnoc.traffic import BenchmarkParams, Flowset, generate_flowset, interference_table


def single_up_flowset(topology, up_period=100, up_length=5, length=2):
    """A flow (2,0)->(2,1) whose injection switch is crossed by one thru flow."""
    focus = make_flow(1, (2, 0), (2, 1), period=1_000, length=length)
    upstream = make_flow(2, (1, 0), (1, 1), period=up_period, length=up_length)
    return build_flowset(topology, focus, upstream)


class TestNoLoadLatencies:
    def test_values_from_path_and_length(self, six_ring_topology):
        flowset = build_flowset(six_ring_topology,
                                make_flow(1, (2, 0), (0, 0), length=4),
                                make_flow(2, (2, 0), (2, 1), length=1))
        long_way, adjacent = flowset.flows
        assert basic_latency(flowset, long_way) == 5 + 4 - 1
        assert basic_latency(flowset, adjacent) == 2 + 1 - 1
        assert loop_latency(flowset, long_way) == 6 + 4
        assert loop_latency(flowset, adjacent) == 6 + 1

    def test_loop_latency_ignores_endpoints(self, six_ring_topology):
        a = build_flowset(six_ring_topology, make_flow(1, (0, 0), (1, 0), length=4))
        b = build_flowset(six_ring_topology, make_flow(1, (1, 0), (0, 0), length=4))
        assert loop_latency(a, a.flows[0]) == loop_latency(b, b.flows[0])

    def test_no_load_below_loop_when_path_shorter_than_circuit(self):
        flowset = generate_flowset(BenchmarkParams(flows_per_set=40, seed=3))
        for f in flowset.flows:
            ring = flowset.topology.ring(f.ring)
            if ring.hops(f.src, f.dst) + 1 < ring.size + 1:
                assert basic_latency(flowset, f) < loop_latency(flowset, f)


class TestBufferBounds:
    def test_largest_payload_of_local_injectors(self, six_ring_topology):
        flowset = build_flowset(six_ring_topology,
                                make_flow(1, (0, 0), (2, 0), length=5),
                                make_flow(2, (0, 0), (1, 1), length=9),
                                make_flow(3, (1, 0), (0, 1), length=7))
        assert buffer_bound(flowset, 0, (0, 0)) == 8
        assert buffer_bound(flowset, 0, (1, 0)) == 6
        assert buffer_bound(flowset, 0, (2, 1)) == 0

    def test_bound_below_ring_capacity(self):
        flowset = generate_flowset(BenchmarkParams(flows_per_set=30, seed=9))
        for ring in flowset.topology.rings:
            cap = ring_capacity(flowset, ring.id)
            for sw in ring.switches:
                assert buffer_bound(flowset, ring.id, sw) <= cap - 1

    def test_capacity_override_validated(self, six_ring_topology):
        from dataclasses import replace
        small = replace(six_ring_topology.rings[0], buffer_capacity=4)
        from rlnoc.topology import build_topology
        topo = build_topology(3, 2, [small])
        flowset = build_flowset(topo, make_flow(1, (0, 0), (1, 0), length=8))
        with pytest.raises(AnalysisError):
            ring_capacity(flowset, 0)


class TestPostInjectionInterference:
    def test_zero_without_downstream_injectors(self, six_ring_topology):
        flowset = build_flowset(six_ring_topology, make_flow(1, (0, 0), (2, 0)))
        assert post_injection_interference(flowset, flowset.flows[0]) == 0

    def test_coarse_is_downstream_switches_times_capacity(self, six_ring_topology):
        flowset = build_flowset(six_ring_topology,
                                make_flow(1, (2, 0), (0, 0), length=16))
        flow = flowset.flows[0]
        cfg = AnalysisConfig(ipos_formula="coarse")
        assert post_injection_interference(flowset, flow, cfg) == 4 * 16

    def test_tight_never_exceeds_coarse_over_1000_flowsets(self):
        topo = generate_multi_ring(4, 4)
        tight = AnalysisConfig(ipos_formula="tight")
        coarse = AnalysisConfig(ipos_formula="coarse")
        for seed in range(1000):
            flowset = generate_flowset(BenchmarkParams(flows_per_set=12, seed=seed),
                                       topo)
            for f in flowset.flows:
                assert (post_injection_interference(flowset, f, tight)
                        <= post_injection_interference(flowset, f, coarse))

    def test_destination_exclusion_variant_is_tighter(self, five_flow_fixture):
        default = AnalysisConfig()
        variant = AnalysisConfig(exclude_destination_buffer=True)
        for f in five_flow_fixture.flows:
            assert (post_injection_interference(five_flow_fixture, f, variant)
                    <= post_injection_interference(five_flow_fixture, f, default))

    def test_deflections_add_whole_ring_bound(self, five_flow_fixture):
        cfg = AnalysisConfig(ejection="shared", maxloop_mode="fixed", maxloop=2)
        flow = five_flow_fixture.flow(3)
        base = post_injection_interference(five_flow_fixture, flow, maxloop=0)
        ring_sum = sum(buffer_bound(five_flow_fixture, 0, sw)
                       for sw in five_flow_fixture.topology.rings[0].switches)
        assert (post_injection_interference(five_flow_fixture, flow, cfg)
                == base + 2 * ring_sum)


class TestBusyPeriods:
    def test_isolated_flow_needs_one_idle_cycle(self, six_ring_topology):
        flowset = build_flowset(six_ring_topology, make_flow(1, (0, 0), (2, 0)))
        assert pre_injection_basic(flowset, flowset.flows[0], {}) == 1
        assert idle_cycle_wait(flowset, flowset.flows[0], {}) == 1

    def test_single_upstream_interferer(self, six_ring_topology):
        flowset = single_up_flowset(six_ring_topology)
        focus = flowset.flow(1)
        assert pre_injection_basic(flowset, focus, {2: 0}) == 6
        assert idle_cycle_wait(flowset, focus, {2: 0}) == 6

    def test_saturated_output_port_diverges(self, six_ring_topology):
        focus = make_flow(1, (2, 0), (2, 1), period=1_000, length=2)
        up1 = make_flow(2, (1, 0), (1, 1), period=10, length=5, deadline=10)
        up2 = make_flow(3, (0, 0), (0, 1), period=10, length=5, deadline=10)
        flowset = build_flowset(six_ring_topology, focus, up1, up2)
        assert pre_injection_basic(flowset, focus, {2: 0, 3: 0}) is None

    def test_iterates_strictly_increase_until_cutoff(self):
        trace = []
        result = _fixed_point(1, ((10, 5, 0, 2, 1), (10, 5, 0, 3, 1)),
                              {2: 0, 3: 0}, budget=60, trace=trace)
        assert result is None
        assert trace == sorted(trace)
        assert all(b > a for a, b in zip(trace, trace[1:]))

    def test_deflecting_interferer_adds_one_replica(self, six_ring_topology):
        flowset = single_up_flowset(six_ring_topology)
        focus = flowset.flow(1)
        cfg = AnalysisConfig(injection="independent", ejection="shared",
                             maxloop_mode="fixed", maxloop=1)
        jk = {1: 0, 2: 0}
        assert pre_injection_deflected(flowset, focus, jk, cfg,
                                       maxloops={2: 1}) == 11
        assert idle_cycle_wait(flowset, focus, jk, cfg, maxloops={2: 1}) == 11

    def test_zero_maxloops_reduce_to_basic(self, six_ring_topology):
        flowset = single_up_flowset(six_ring_topology)
        focus = flowset.flow(1)
        cfg = AnalysisConfig(injection="independent", ejection="shared",
                             maxloop_mode="fixed", maxloop=1)
        assert (pre_injection_deflected(flowset, focus, {2: 0}, cfg, maxloops={})
                == pre_injection_basic(flowset, focus, {2: 0}))

    def test_monotone_in_maxloop(self, six_ring_topology):
        flowset = single_up_flowset(six_ring_topology)
        focus = flowset.flow(1)
        cfg = AnalysisConfig(injection="independent", ejection="shared",
                             maxloop_mode="fixed", maxloop=3)
        previous = 0
        for loops in range(4):
            value = pre_injection_deflected(flowset, focus, {2: 0}, cfg,
                                            maxloops={2: loops})
            assert value >= previous
            previous = value


class TestQueueWait:
    def test_empty_core(self, six_ring_topology):
        flowset = build_flowset(six_ring_topology, make_flow(1, (0, 0), (2, 0)))
        assert queue_wait(flowset, flowset.flows[0], {1: 1}) == 0

    def test_one_co_located_packet(self, six_ring_topology):
        flowset = build_flowset(six_ring_topology,
                                make_flow(1, (0, 0), (2, 0)),
                                make_flow(2, (0, 0), (1, 1), length=4))
        assert queue_wait(flowset, flowset.flows[0], {2: 3}) == 7

    def test_shared_total_is_the_sum(self):
        assert pre_injection_shared(1, 0) == 1
        assert pre_injection_shared(6, 7) == 13

    def test_shared_formulation_never_below_basic(self, six_ring_topology):
        # On a single-ring topology the queue and the co-injection term cover
        # the same flows, making the two formulations directly comparable.
        rng = random.Random(7)
        cells = list(six_ring_topology.cores())
        checked = 0
        for trial in range(1000):
            flows = []
            for fid in range(1, rng.randint(2, 7)):
                src, dst = rng.sample(cells, 2)
                flows.append(make_flow(fid, src, dst, period=rng.randint(200, 2000),
                                       length=rng.randint(1, 12),
                                       jitter=rng.randint(0, 50)))
            flowset = build_flowset(six_ring_topology, *flows)
            jk = {f.id: 0 for f in flowset.flows}
            idle = {f.id: idle_cycle_wait(flowset, f, jk) for f in flowset.flows}
            if any(v is None for v in idle.values()):
                continue
            for f in flowset.flows:
                basic = pre_injection_basic(flowset, f, jk)
                if basic is None:
                    continue
                shared = idle[f.id] + queue_wait(flowset, f, idle)
                assert shared >= basic, (trial, f.id)
                checked += 1
        assert checked > 1000


class TestResolveMaxloop:
    def test_independent_ejection_never_deflects(self, five_flow_fixture):
        cfg = AnalysisConfig(ejection="independent")
        for f in five_flow_fixture.flows:
            assert resolve_maxloop(five_flow_fixture, f, cfg) == 0

    def test_oldest_first_counts_other_same_destination_flows(self, six_ring_topology):
        flows = [make_flow(1, (0, 0), (2, 1)), make_flow(2, (1, 0), (2, 1)),
                 make_flow(3, (0, 1), (2, 1)), make_flow(4, (2, 1), (0, 0))]
        flowset = build_flowset(six_ring_topology, *flows)
        cfg = AnalysisConfig(ejection="shared", maxloop_mode="oldest_first")
        for fid in (1, 2, 3):
            assert resolve_maxloop(flowset, flowset.flow(fid), cfg) == 2
        assert resolve_maxloop(flowset, flowset.flow(4), cfg) == 0
        inclusive = AnalysisConfig(ejection="shared", maxloop_mode="oldest_first",
                                   oldest_first_inclusive=True)
        assert resolve_maxloop(flowset, flowset.flow(1), inclusive) == 3

    def test_fixed_bound_applies_to_every_flow(self, five_flow_fixture):
        cfg = AnalysisConfig(ejection="shared", maxloop_mode="fixed", maxloop=3)
        for f in five_flow_fixture.flows:
            assert resolve_maxloop(five_flow_fixture, f, cfg) == 3


class TestProfiles:
    @pytest.mark.parametrize("name", ["0D_NI_II", "0D_IU_II", "0D_NI_SI",
                                      "0D_IU_SI", "1D_IU_SI", "2D_IU_SI",
                                      "3D_IU_SI", "OF_IU_SI", "OF_NI_II"])
    def test_roundtrip(self, name):
        assert profile_name(parse_profile(name)) == name

    def test_unknown_profile(self):
        with pytest.raises(AnalysisError):
            parse_profile("4X_IU_SI")

    def test_config_validation(self):
        with pytest.raises(AnalysisError):
            AnalysisConfig(ejection="independent", maxloop=1)
        with pytest.raises(AnalysisError):
            AnalysisConfig(ejection="shared", maxloop_mode="fixed", maxloop=0)
        with pytest.raises(AnalysisError):
            AnalysisConfig(injection="both")


class TestAnalyze:
    def test_isolated_flows_cost_exactly_one_idle_cycle(self):
        # Two flows on disjoint row-band rings sharing no switch or core.
        topo = generate_multi_ring(4, 4)
        flowset = Flowset((make_flow(1, (0, 0), (3, 0), ring=2),
                           make_flow(2, (0, 3), (3, 3), ring=6)), topo)
        table = interference_table(flowset)
        for fid in (1, 2):
            sets = table[fid]
            assert not (sets.up | sets.down | sets.in_ring | sets.in_core)
        for config in (parse_profile("0D_IU_II"), parse_profile("0D_IU_SI")):
            result = analyze(flowset, config)
            assert result.schedulable
            for fid, r in result.results.items():
                assert r.bound == r.no_load + 1

    def test_five_flow_fixture_iterative_dominates_simplified(self, five_flow_fixture):
        iterative = analyze(five_flow_fixture, parse_profile("0D_IU_II"))
        simplified = analyze(five_flow_fixture, parse_profile("0D_NI_II"))
        assert iterative.schedulable and simplified.schedulable
        for fid in iterative.results:
            assert iterative.results[fid].bound <= simplified.results[fid].bound

    def test_unschedulable_returns_empty_results(self, six_ring_topology):
        focus = make_flow(1, (2, 0), (2, 1), period=1_000, length=2)
        up1 = make_flow(2, (1, 0), (1, 1), period=10, length=5, deadline=10)
        up2 = make_flow(3, (0, 0), (0, 1), period=10, length=5, deadline=10)
        flowset = build_flowset(six_ring_topology, focus, up1, up2)
        result = analyze(flowset, parse_profile("0D_IU_II"))
        assert result.verdict == "unschedulable"
        assert result.results == {}
        assert result.failing_flow in {1, 2, 3}

    def test_iteration_cap_verdict(self, five_flow_fixture):
        config = parse_profile("0D_IU_II", iteration_cap=1)
        result = analyze(five_flow_fixture, config)
        assert result.verdict == "iteration_cap_exceeded"

    def test_empty_flowset_is_schedulable(self, six_ring_topology):
        result = analyze(Flowset((), six_ring_topology), parse_profile("0D_IU_SI"))
        assert result.schedulable and result.results == {}

    def test_bound_traces_monotone_and_components_account(self):
        record = AnalysisRecord()
        flowset = generate_flowset(BenchmarkParams(flows_per_set=30, seed=21))
        result = analyze(flowset, parse_profile("0D_IU_SI"), record=record)
        assert result.schedulable
        for trace in record.bound_traces.values():
            assert trace == sorted(trace)
        for trace in record.busy_traces:
            assert trace == sorted(trace)
        for fid, r in result.results.items():
            assert r.bound == (r.no_load + r.loop * r.maxloop
                               + r.pre_injection + r.post_injection)
            assert r.pre_injection == r.pre_idle + r.pre_queue

    def test_independent_injection_reports_no_queue_split(self, five_flow_fixture):
        result = analyze(five_flow_fixture, parse_profile("0D_IU_II"))
        for r in result.results.values():
            assert (r.pre_idle, r.pre_queue) == (0, 0)

    def test_shared_injection_accounts_idle_plus_queue(self, five_flow_fixture):
        result = analyze(five_flow_fixture, parse_profile("0D_IU_SI"))
        for r in result.results.values():
            assert r.pre_injection == r.pre_idle + r.pre_queue


class TestDominance:
    def schedulable_families(self, count=10, flows=25):
        out = []
        for seed in range(100, 100 + 3 * count):
            flowset = generate_flowset(BenchmarkParams(flows_per_set=flows, seed=seed))
            if analyze(flowset, parse_profile("1D_IU_SI")).schedulable:
                out.append(flowset)
            if len(out) == count:
                break
        assert len(out) >= 5
        return out

    def test_bounds_grow_with_maxloop(self):
        for flowset in self.schedulable_families():
            base = analyze(flowset, parse_profile("0D_IU_SI"))
            defl = analyze(flowset, parse_profile("1D_IU_SI"))
            for fid in base.results:
                assert base.results[fid].bound <= defl.results[fid].bound

    def test_bounds_grow_with_interferer_jitter_and_length(self, five_flow_fixture):
        from dataclasses import replace
        config = parse_profile("0D_IU_SI")
        base = analyze(five_flow_fixture, config)
        flows = {f.id: f for f in five_flow_fixture.flows}
        bumped_j = Flowset(tuple(
            replace(f, jitter=f.jitter + 500) if f.id == 2 else f
            for f in five_flow_fixture.flows), five_flow_fixture.topology)
        bumped_l = Flowset(tuple(
            replace(f, length=f.length + 8) if f.id == 2 else f
            for f in five_flow_fixture.flows), five_flow_fixture.topology)
        for bumped in (bumped_j, bumped_l):
            grown = analyze(bumped, config)
            for fid in base.results:
                assert grown.results[fid].bound >= base.results[fid].bound

    def test_adding_a_flow_never_shrinks_bounds(self):
        config = parse_profile("0D_IU_SI")
        small = generate_flowset(BenchmarkParams(flows_per_set=20, seed=77))
        large = generate_flowset(BenchmarkParams(flows_per_set=21, seed=77))
        res_small = analyze(small, config)
        res_large = analyze(large, config)
        assert res_small.schedulable and res_large.schedulable
        for fid in res_small.results:
            assert res_large.results[fid].bound >= res_small.results[fid].bound

    def test_iterative_never_above_simplified_random(self):
        for seed in range(30):
            flowset = generate_flowset(BenchmarkParams(flows_per_set=30, seed=seed))
            simplified = analyze(flowset, parse_profile("0D_NI_SI"))
            if not simplified.schedulable:
                continue
            iterative = analyze(flowset, parse_profile("0D_IU_SI"))
            assert iterative.schedulable
            for fid in iterative.results:
                assert (iterative.results[fid].bound
                        <= simplified.results[fid].bound)


def test_results_csv_shape(five_flow_fixture):
    config = parse_profile("0D_IU_SI")
    result = analyze(five_flow_fixture, config)
    text = results_to_csv(result, config, seed=4,
                          diagnostics=interference_table(five_flow_fixture))
    lines = text.strip().split("\n")
    assert lines[0].startswith("# verdict=schedulable")
    assert "seed=4" in lines[0]
    assert any(line.startswith("# interference flow=1 up=2 down=3 in=5 upind=4")
               for line in lines)
    header_at = next(i for i, l in enumerate(lines) if not l.startswith("#"))
    assert lines[header_at] == ("flow,C,C_loop,maxloop,I_pre_idle,I_pre_queue,"
                                "I_pre,I_pos,Jk,R,D,schedulable")
    assert len(lines) == header_at + 1 + 5
