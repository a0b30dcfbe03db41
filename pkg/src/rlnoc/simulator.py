"""Cycle-accurate simulation of the routerless switch protocol.

The simulator exists to check the analysis from the outside: observed packet
latencies and deflection counts must never exceed the analytical bounds for a
flowset the analysis declares schedulable.

Per network cycle, from the state at the start of the cycle:

* a flit that arrived during the previous cycle leaves its flit buffer, going
  to the ejection link when addressed to the local core, otherwise to the
  ring output port, or into the packet buffer when a local payload injection
  or a buffer drain holds that port;
* the output port serves, in priority order, an ongoing packet injection
  (non-preemptive), the packet-buffer head, the flit-buffer flit, and only
  then a fresh header from the injection queue, admitted only when the
  ring's packet buffer is empty and no ring traffic used the port this
  cycle (a flit leaving over the ejection link frees the port and so does
  not block injection);
* an ejection link carries one flit per cycle; a header that is denied the
  link (another packet is ejecting, or an older simultaneous header wins)
  deflects, taking its whole packet once more around the ring. Arbitration is
  Oldest-First on the release timestamp, ties broken by flow id.

A flit sent on a link during cycle t is processed by the downstream switch in
cycle t+1, so in an empty network the last flit of a packet crosses the
ejection link hops + length - 1 cycles after release.

Because utilisation is typically low, the engine fast-forwards through two
exactly-predictable situations: a packet released into an empty network with
no other release due before it drains, and the tail of a congestion episode
where a single packet remains in flight. Both shortcuts reproduce the
cycle-accurate outcome bit for bit (tests compare the two modes directly).
"""

from __future__ import annotations

import hashlib
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Literal

from .analysis import AnalysisConfig, FlowsetResult, ring_capacity
from .seeds import derive_seed
from .traffic import Flowset

_IDX_BITS = 10
_IDX_MASK = (1 << _IDX_BITS) - 1


class ProtocolViolation(RuntimeError):
    """The engine reached a state the switch protocol rules out."""


@dataclass(frozen=True)
class HardwareProfile:
    """Link-sharing layout of the simulated platform.

    ``partition_limit`` only applies to shared ejection: flows addressed to a
    core are split round-robin over just enough ejection links that no link
    serves more than the limit, realising the multiple-ejection-link
    trade-off. ``None`` means a single link per core.
    """

    injection: Literal["independent", "shared"] = "shared"
    ejection: Literal["independent", "shared"] = "independent"
    partition_limit: int | None = None


def hardware_from_config(config: AnalysisConfig) -> HardwareProfile:
    """Platform matching an analysis configuration.

    A fixed deflection bound of k is realised by partitioning each core's
    flows over ejection links serving at most k flows each. The count is
    deliberately inclusive: a packet can circle more than once per competing
    packet when packets are longer than their ring (the competitor's ejection
    outlasts whole loops), so only the per-flow-link endpoint (k = 1) or light
    sharing keeps the modelled bound structural. The Oldest-First mode keeps
    the single shared link whose deflections the flow-count analysis targets.
    """
    if config.ejection == "independent":
        return HardwareProfile(config.injection, "independent")
    if config.maxloop_mode == "oldest_first":
        return HardwareProfile(config.injection, "shared", None)
    return HardwareProfile(config.injection, "shared", config.maxloop)


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    horizon: int = 1_000_000
    release: Literal["periodic", "sporadic"] = "sporadic"
    drain: bool = True
    fast_forward: bool = True
    collect_trace: bool = False
    # Exact first-release offsets per flow id; switches the periodic driver to
    # a jitter-free schedule for constructed scenarios.
    release_offsets: dict[int, int] | None = None


@dataclass(frozen=True)
class FlowStats:
    packets: int
    max_latency: int
    mean_latency: float
    max_deflections: int


@dataclass
class SimOutcome:
    per_flow: dict[int, FlowStats]
    released: int
    delivered: int
    flits_injected: int
    flits_ejected: int
    deflections: int
    drained: bool
    digest: str
    trace: list = field(default_factory=list)


class _RingState:
    __slots__ = ("ring_id", "size", "capacity", "fb", "pb", "defl", "inj")

    def __init__(self, ring_id: int, size: int, capacity: int):
        self.ring_id = ring_id
        self.size = size
        self.capacity = capacity
        self.fb: dict[int, int] = {}
        self.pb: dict[int, deque] = {}
        self.defl: dict[int, int] = {}
        self.inj: dict[int, list] = {}

    def busy(self) -> bool:
        return bool(self.fb or self.pb or self.inj)


def _release_schedule(flowset: Flowset, cfg: SimConfig) -> list[tuple[int, int]]:
    out: list[tuple[int, int]] = []
    for f in flowset.flows:
        rng = random.Random(derive_seed(cfg.seed, "rel", f.id))
        times: list[int] = []
        if cfg.release_offsets is not None:
            start = cfg.release_offsets.get(f.id, 0)
            n = 0
            while start + n * f.period < cfg.horizon:
                times.append(start + n * f.period)
                n += 1
        elif cfg.release == "periodic":
            offset = rng.randrange(f.period)
            n = 0
            while offset + n * f.period < cfg.horizon:
                times.append(offset + n * f.period + rng.randrange(f.jitter + 1))
                n += 1
            times.sort()
        else:
            t = rng.randrange(f.period + 1)
            while t < cfg.horizon:
                times.append(t)
                t += f.period + rng.randrange(f.period + 1)
        out.extend((t, f.id) for t in times)
    out.sort()
    return out


def simulate(flowset: Flowset, cfg: SimConfig, hw: HardwareProfile) -> SimOutcome:
    """Run one deterministic simulation and collect per-flow statistics.

    Observed latency of a packet is the cycle its last flit crosses the
    ejection link minus its release cycle. With drain enabled the run
    continues past the horizon until every released packet is delivered.
    """
    return _Engine(flowset, cfg, hw).run()


class _Engine:
    def __init__(self, flowset: Flowset, cfg: SimConfig, hw: HardwareProfile):
        self.flowset = flowset
        self.cfg = cfg
        self.hw = hw
        topo = flowset.topology
        width = topo.width

        if any(f.length >= 1 << _IDX_BITS for f in flowset.flows):
            raise ProtocolViolation("packet length exceeds the engine's flit index range")

        self.rings: dict[int, _RingState] = {
            ring.id: _RingState(ring.id, ring.size, ring_capacity(flowset, ring.id))
            for ring in topo.rings
        }
        # Per flow: ring id, source/destination positions, hop count, queue
        # key and ejection-link key. Keys are tuples so they sort uniformly.
        self.flow_info: dict[int, tuple] = {}
        dst_groups: dict[int, list[int]] = {}
        for f in sorted(flowset.flows, key=lambda f: f.id):
            dst_groups.setdefault(f.dst.row * width + f.dst.col, []).append(f.id)
        elinks: dict[int, tuple] = {}
        for core, fids in sorted(dst_groups.items()):
            if hw.ejection == "independent":
                continue
            if hw.partition_limit is None:
                for fid in fids:
                    elinks[fid] = (core, 0)
            else:
                n_links = -(-len(fids) // hw.partition_limit)
                for i, fid in enumerate(fids):
                    elinks[fid] = (core, i % n_links)
        for f in flowset.flows:
            ring = topo.ring(f.ring)
            srcpos = ring.position(f.src)
            dstpos = ring.position(f.dst)
            core_src = f.src.row * width + f.src.col
            core_dst = f.dst.row * width + f.dst.col
            qkey = (core_src,) if hw.injection == "shared" else (core_src, f.ring)
            ekey = elinks.get(f.id, (core_dst, f.ring)) if hw.ejection == "shared" \
                else (core_dst, f.ring)
            self.flow_info[f.id] = (f.ring, srcpos, dstpos,
                                    ring.hops(f.src, f.dst), f.length, qkey, ekey)

        self.queues: dict[tuple, deque] = {}
        self.busy_queues: set[tuple] = set()
        self.ebusy: dict[tuple, list] = {}

        # Packet registry, indexed by packet id in release order.
        self.pkt_flow: list[int] = []
        self.pkt_release: list[int] = []
        self.pkt_deflections: list[int] = []
        self.pkt_delivery: list[int] = []

        self.flow_stats: dict[int, list] = {f.id: [0, 0, 0, 0] for f in flowset.flows}
        self.released = 0
        self.delivered = 0
        self.flits_injected = 0
        self.flits_ejected = 0
        self.deflection_events = 0
        self.trace: list = []
        self.fast = cfg.fast_forward and not cfg.collect_trace

    # -- packet bookkeeping -------------------------------------------------

    def _new_packet(self, flow_id: int, release: int) -> int:
        pkt = len(self.pkt_flow)
        self.pkt_flow.append(flow_id)
        self.pkt_release.append(release)
        self.pkt_deflections.append(0)
        self.pkt_delivery.append(-1)
        self.released += 1
        if self.cfg.collect_trace:
            self.trace.append(("release", release, pkt, flow_id))
        return pkt

    def _deliver(self, pkt: int, cycle: int) -> None:
        flow_id = self.pkt_flow[pkt]
        latency = cycle - self.pkt_release[pkt]
        stats = self.flow_stats[flow_id]
        stats[0] += 1
        stats[1] += latency
        if latency > stats[2]:
            stats[2] = latency
        if self.pkt_deflections[pkt] > stats[3]:
            stats[3] = self.pkt_deflections[pkt]
        self.pkt_delivery[pkt] = cycle
        self.delivered += 1
        if self.cfg.collect_trace:
            self.trace.append(("deliver", cycle, pkt, latency))

    # -- main loop ------------------------------------------------------------

    def run(self) -> SimOutcome:
        releases = _release_schedule(self.flowset, self.cfg)
        n_rel = len(releases)
        ptr = 0
        t = 0
        guard = 2 * self.cfg.horizon + 10_000_000
        while True:
            if not self._network_busy():
                if ptr >= n_rel:
                    break
                rel_t, flow_id = releases[ptr]
                info = self.flow_info[flow_id]
                solo_end = rel_t + info[3] + info[4] - 1
                if self.fast and (ptr + 1 >= n_rel or releases[ptr + 1][0] > solo_end):
                    pkt = self._new_packet(flow_id, rel_t)
                    self.flits_injected += info[4]
                    self.flits_ejected += info[4]
                    self._deliver(pkt, solo_end)
                    ptr += 1
                    t = solo_end + 1
                    continue
                t = rel_t
            elif self.fast and ptr < n_rel and releases[ptr][0] > t:
                skip = self._try_solo_fast_forward(t, releases[ptr][0])
                if skip is not None:
                    t = skip
                    continue
            elif self.fast and ptr >= n_rel:
                skip = self._try_solo_fast_forward(t, None)
                if skip is not None:
                    t = skip
                    continue
            if not self.cfg.drain and t >= self.cfg.horizon:
                break
            if t > guard:
                raise ProtocolViolation("simulation failed to drain within its guard window")
            while ptr < n_rel and releases[ptr][0] == t:
                flow_id = releases[ptr][1]
                pkt = self._new_packet(flow_id, t)
                qkey = self.flow_info[flow_id][5]
                self.queues.setdefault(qkey, deque()).append(pkt)
                ptr += 1
            self._cycle(t)
            t += 1
        return self._finish()

    def _network_busy(self) -> bool:
        if self.queues or self.ebusy:
            return True
        return any(r.busy() for r in self.rings.values())

    def _try_solo_fast_forward(self, t: int, next_release: int | None) -> int | None:
        """When a single packet remains in flight with a clear road, deliver it
        analytically and jump past its completion."""
        if self.queues or self.ebusy and len(self.ebusy) > 1:
            return None
        live = None
        for ring in self.rings.values():
            if ring.pb or ring.inj or ring.defl:
                return None
            if ring.fb:
                if live is not None:
                    return None
                live = ring
        if live is None:
            return None
        pkts = {flit >> _IDX_BITS for flit in live.fb.values()}
        if len(pkts) != 1:
            return None
        pkt = pkts.pop()
        if self.ebusy:
            busy = next(iter(self.ebusy.values()))
            if busy[0] != pkt:
                return None
        info = self.flow_info[self.pkt_flow[pkt]]
        if info[0] != live.ring_id:
            return None
        dstpos, size = info[2], live.size
        finish = t + max((dstpos - pos) % size for pos in live.fb)
        if next_release is not None and next_release <= finish:
            return None
        self.flits_ejected += len(live.fb)
        live.fb.clear()
        self.ebusy.clear()
        self._deliver(pkt, finish)
        return finish + 1

    # -- one cycle ------------------------------------------------------------

    def _cycle(self, t: int) -> None:
        flow_info = self.flow_info
        pkt_flow = self.pkt_flow
        trace = self.trace if self.cfg.collect_trace else None

        # Route every flit that sits in a flit buffer: ejection candidates
        # (grouped per ejection link) or thru traffic wanting the output port.
        eject_cands: dict[tuple, list] = {}
        thru: dict[int, dict[int, int]] = {}
        pb_occupied = {rid: set(r.pb) for rid, r in self.rings.items() if r.pb}
        inj_occupied = {rid: set(r.inj) for rid, r in self.rings.items() if r.inj}
        for rid in sorted(self.rings):
            ring = self.rings[rid]
            if not ring.fb:
                continue
            ring_thru: dict[int, int] = {}
            for pos in sorted(ring.fb):
                flit = ring.fb[pos]
                pkt = flit >> _IDX_BITS
                idx = flit & _IDX_MASK
                info = flow_info[pkt_flow[pkt]]
                if info[2] == pos and info[0] == rid:
                    if ring.defl.get(pos) == pkt:
                        ring_thru[pos] = flit
                        if idx == info[4] - 1:
                            del ring.defl[pos]
                    else:
                        eject_cands.setdefault(info[6], []).append((rid, pos, pkt, idx))
                else:
                    ring_thru[pos] = flit
            ring.fb = {}
            if ring_thru:
                thru[rid] = ring_thru

        # Resolve ejection links: one flit per link per cycle, Oldest-First.
        consumed: set[tuple] = set()
        for ekey in sorted(eject_cands):
            cands = eject_cands[ekey]
            busy = self.ebusy.get(ekey)
            if busy is not None:
                for rid, pos, pkt, idx in cands:
                    if pkt == busy[0]:
                        if idx != busy[1]:
                            raise ProtocolViolation("ejection lost packet contiguity")
                        self._eject(ekey, rid, pos, pkt, idx, t, trace)
                        consumed.add(ekey)
                    elif idx == 0:
                        self._deflect(rid, pos, pkt, t, thru, trace)
                    else:
                        raise ProtocolViolation("payload flit arrived for a denied packet")
            else:
                headers = [c for c in cands if c[3] == 0]
                if len(headers) != len(cands):
                    raise ProtocolViolation("mid-packet flit arrived on a free ejection link")
                key = lambda c: (self.pkt_release[c[2]], pkt_flow[c[2]])
                winner = min(headers, key=key)
                for cand in headers:
                    rid, pos, pkt, idx = cand
                    if cand is winner:
                        self._eject(ekey, rid, pos, pkt, idx, t, trace)
                        consumed.add(ekey)
                    else:
                        self._deflect(rid, pos, pkt, t, thru, trace)
        for ekey in self.ebusy:
            if ekey not in consumed:
                raise ProtocolViolation("ejecting packet missed a cycle")

        # Ring traffic that holds the output port this cycle; a flit leaving
        # over the ejection link frees the port, so it does not gate header
        # injection (the buffer-empty rule protects the port, not the slot).
        thru_positions = {rid: set(d) for rid, d in thru.items()}

        # Resolve output ports and commit the flits they emit.
        for rid in sorted(self.rings):
            ring = self.rings[rid]
            ring_thru = thru.get(rid, {})
            new_fb: dict[int, int] = {}
            positions = set(ring.inj) | set(ring.pb) | set(ring_thru)
            for pos in sorted(positions):
                nxt = (pos + 1) % ring.size
                if pos in ring.inj:
                    state = ring.inj[pos]
                    pkt, idx, qkey = state[0], state[1], state[2]
                    new_fb[nxt] = (pkt << _IDX_BITS) | idx
                    self.flits_injected += 1
                    if trace is not None:
                        trace.append(("out", t, rid, pos, pkt, idx))
                    length = flow_info[pkt_flow[pkt]][4]
                    if idx + 1 == length:
                        del ring.inj[pos]
                        self.busy_queues.discard(qkey)
                        queue = self.queues[qkey]
                        queue.popleft()
                        if not queue:
                            del self.queues[qkey]
                    else:
                        state[1] = idx + 1
                    if pos in ring_thru:
                        self._buffer(ring, pos, ring_thru.pop(pos))
                elif pos in ring.pb:
                    buf = ring.pb[pos]
                    flit = buf.popleft()
                    new_fb[nxt] = flit
                    if trace is not None:
                        trace.append(("out", t, rid, pos, flit >> _IDX_BITS, flit & _IDX_MASK))
                    if pos in ring_thru:
                        buf.append(ring_thru.pop(pos))
                    if not buf:
                        del ring.pb[pos]
                else:
                    flit = ring_thru.pop(pos)
                    new_fb[nxt] = flit
                    if trace is not None:
                        trace.append(("out", t, rid, pos, flit >> _IDX_BITS, flit & _IDX_MASK))
            if ring_thru:
                raise ProtocolViolation("a flit was left behind in a flit buffer")
            ring.fb = new_fb

        # Fresh header injections: head of each idle queue, provided the
        # ring's flit buffer was empty this cycle and its packet buffer is.
        for qkey in sorted(self.queues):
            if qkey in self.busy_queues:
                continue
            pkt = self.queues[qkey][0]
            info = flow_info[pkt_flow[pkt]]
            rid, pos, length = info[0], info[1], info[4]
            ring = self.rings[rid]
            # Blocked whenever the output port carried ring traffic this
            # cycle: a thru or deflected flit, a packet buffer that was
            # draining at cycle start (even if it emptied this cycle), or an
            # ongoing payload injection (even one that finished this cycle).
            if (pos in thru_positions.get(rid, ()) or pos in pb_occupied.get(rid, ())
                    or pos in inj_occupied.get(rid, ())):
                continue
            nxt = (pos + 1) % ring.size
            if nxt in ring.fb:
                raise ProtocolViolation("output port emitted two flits in one cycle")
            ring.fb[nxt] = pkt << _IDX_BITS
            self.flits_injected += 1
            if trace is not None:
                trace.append(("inject", t, pkt, rid, pos))
                trace.append(("out", t, rid, pos, pkt, 0))
            if length == 1:
                queue = self.queues[qkey]
                queue.popleft()
                if not queue:
                    del self.queues[qkey]
            else:
                ring.inj[pos] = [pkt, 1, qkey]
                self.busy_queues.add(qkey)

    def _buffer(self, ring: _RingState, pos: int, flit: int) -> None:
        buf = ring.pb.get(pos)
        if buf is None:
            buf = ring.pb[pos] = deque()
        buf.append(flit)
        if len(buf) > ring.capacity:
            raise ProtocolViolation(
                f"packet buffer overflow at ring {ring.ring_id} position {pos}"
            )

    def _eject(self, ekey: tuple, rid: int, pos: int, pkt: int, idx: int,
               t: int, trace) -> None:
        length = self.flow_info[self.pkt_flow[pkt]][4]
        self.flits_ejected += 1
        if trace is not None:
            trace.append(("eject", t, ekey, pkt, idx))
        if idx == length - 1:
            self.ebusy.pop(ekey, None)
            self._deliver(pkt, t)
        else:
            self.ebusy[ekey] = [pkt, idx + 1]

    def _deflect(self, rid: int, pos: int, pkt: int, t: int, thru, trace) -> None:
        self.pkt_deflections[pkt] += 1
        self.deflection_events += 1
        length = self.flow_info[self.pkt_flow[pkt]][4]
        if length > 1:
            self.rings[rid].defl[pos] = pkt
        thru.setdefault(rid, {})[pos] = pkt << _IDX_BITS
        if trace is not None:
            trace.append(("deflect", t, rid, pos, pkt))

    def _finish(self) -> SimOutcome:
        drained = not self._network_busy()
        if self.cfg.drain and not drained:
            raise ProtocolViolation("network failed to drain after the last release")
        per_flow = {}
        for fid in sorted(self.flow_stats):
            count, total, worst, defl = self.flow_stats[fid]
            per_flow[fid] = FlowStats(
                packets=count,
                max_latency=worst,
                mean_latency=total / count if count else 0.0,
                max_deflections=defl,
            )
        blob = ";".join(
            f"{pkt}:{self.pkt_delivery[pkt]}:{self.pkt_deflections[pkt]}"
            for pkt in range(len(self.pkt_flow))
        )
        digest = hashlib.sha256(blob.encode("ascii")).hexdigest()
        return SimOutcome(
            per_flow=per_flow,
            released=self.released,
            delivered=self.delivered,
            flits_injected=self.flits_injected,
            flits_ejected=self.flits_ejected,
            deflections=self.deflection_events,
            drained=drained,
            digest=digest,
            trace=self.trace,
        )


@dataclass(frozen=True)
class OracleViolation:
    flow: int
    kind: Literal["latency", "deflections"]
    observed: int
    limit: int


@dataclass(frozen=True)
class OracleReport:
    violations: tuple[OracleViolation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def oracle_check(flowset: Flowset, analysis: FlowsetResult,
                 outcome: SimOutcome) -> OracleReport:
    """Compare observed behaviour against the analytical bounds.

    Every delivered packet of every flow must stay at or below its flow's
    latency bound and deflection bound; any excess is a violation. Requires a
    schedulable analysis result, since only then are the bounds valid.
    """
    if not analysis.schedulable:
        raise ValueError("oracle_check needs a schedulable analysis result")
    violations = []
    for fid, stats in sorted(outcome.per_flow.items()):
        if stats.packets == 0:
            continue
        result = analysis.results[fid]
        if stats.max_latency > result.bound:
            violations.append(OracleViolation(fid, "latency", stats.max_latency,
                                              result.bound))
        if stats.max_deflections > result.maxloop:
            violations.append(OracleViolation(fid, "deflections",
                                              stats.max_deflections, result.maxloop))
    return OracleReport(tuple(violations))


def outcome_to_csv(outcome: SimOutcome, cfg: SimConfig, hw: HardwareProfile) -> str:
    lines = [
        "# seed={} horizon={} release={} injection={} ejection={} drained={}".format(
            cfg.seed, cfg.horizon, cfg.release, hw.injection, hw.ejection,
            "true" if outcome.drained else "false")
    ]
    lines.append("flow,packets,max_latency,mean_latency,max_deflections")
    for fid in sorted(outcome.per_flow):
        s = outcome.per_flow[fid]
        lines.append(f"{fid},{s.packets},{s.max_latency},{s.mean_latency:.3f},"
                     f"{s.max_deflections}")
    return "\n".join(lines) + "\n"
