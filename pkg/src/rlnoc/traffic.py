"""Sporadic traffic flows, random benchmark generation and interference sets.

Each flow ships packets of at most ``length`` flits from a source core to a
destination core over one assigned ring. The interference sets classify, for
a flow under analysis, which other flows can delay it before injection
(upstream thru-traffic, co-injected traffic), after injection (downstream
injectors), or only indirectly (jitter amplification of its upstream
interferers).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Iterable

from .topology import (
    Coord,
    NotOnRingError,
    Topology,
    generate_multi_ring,
    load_topology,
    select_ring,
    topology_to_doc,
)


class TrafficError(ValueError):
    pass


@dataclass(frozen=True)
class Flow:
    """One sporadic packet flow. All times are in cycles, sizes in flits."""

    id: int
    period: int
    deadline: int
    length: int
    jitter: int
    src: Coord
    dst: Coord
    ring: int


@dataclass(frozen=True)
class Flowset:
    flows: tuple[Flow, ...]
    topology: Topology

    def __post_init__(self):
        ids = [f.id for f in self.flows]
        if len(set(ids)) != len(ids):
            raise TrafficError("flow ids must be unique")
        for f in self.flows:
            if f.deadline > f.period:
                raise TrafficError(f"flow {f.id}: deadline exceeds period")
            if f.length < 1:
                raise TrafficError(f"flow {f.id}: packet length must be >= 1")
            if f.jitter < 0 or f.period < 1 or f.deadline < 1:
                raise TrafficError(f"flow {f.id}: negative or zero timing parameter")
            if f.src == f.dst:
                raise TrafficError(f"flow {f.id}: source equals destination")
            ring = self.topology.ring(f.ring)
            if f.src not in ring or f.dst not in ring:
                raise TrafficError(f"flow {f.id}: ring {f.ring} does not contain both endpoints")

    def flow(self, flow_id: int) -> Flow:
        for f in self.flows:
            if f.id == flow_id:
                return f
        raise KeyError(f"no flow with id {flow_id}")

    def on_ring(self, ring_id: int) -> tuple[Flow, ...]:
        return tuple(f for f in self.flows if f.ring == ring_id)


@dataclass(frozen=True)
class InterferenceSets:
    """Flow-id sets describing who can delay the flow under analysis.

    up       thru-traffic at the injection switch (upstream direct)
    down     same-ring flows injected along the downstream path, destination
             switch excluded (downstream direct)
    in_ring  other flows injected at the same switch into the same ring
    in_core  other flows sharing the source core, regardless of ring
    upind    link-disjoint flows that delay a member of ``up`` (upstream indirect)
    ring_all every other flow assigned to the same ring
    """

    up: frozenset[int]
    down: frozenset[int]
    in_ring: frozenset[int]
    in_core: frozenset[int]
    upind: frozenset[int]
    ring_all: frozenset[int]


@dataclass(frozen=True)
class BenchmarkParams:
    """Knobs for random flowset generation; ranges are inclusive."""

    flows_per_set: int
    width: int = 4
    height: int = 4
    packet_range: tuple[int, int] = (16, 48)
    period_range: tuple[int, int] = (1_000, 100_000)
    jitter_fraction_range: tuple[float, float] = (0.0, 0.5)
    seed: int = 0

    def __post_init__(self):
        if self.flows_per_set < 0:
            raise TrafficError("flows_per_set must be >= 0")
        if self.packet_range[0] < 1 or self.packet_range[0] > self.packet_range[1]:
            raise TrafficError("invalid packet range")
        if self.period_range[0] < 1 or self.period_range[0] > self.period_range[1]:
            raise TrafficError("invalid period range")
        lo, hi = self.jitter_fraction_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise TrafficError("invalid jitter fraction range")


def generate_flowset(params: BenchmarkParams, topology: Topology | None = None) -> Flowset:
    """Uniformly sample a flowset; deterministic for a fixed seed.

    Flows are drawn one after another with a fixed number of RNG draws each,
    so for the same seed a larger flowset extends a smaller one flow-for-flow
    (the prefix property the paired sweeps rely on). Deadlines equal periods.
    """
    if topology is None:
        topology = generate_multi_ring(params.width, params.height)
    rng = random.Random(params.seed)
    cells = params.width * params.height
    flows = []
    for k in range(params.flows_per_set):
        period = rng.randint(*params.period_range)
        length = rng.randint(*params.packet_range)
        fraction = rng.uniform(*params.jitter_fraction_range)
        src_i = rng.randrange(cells)
        dst_i = rng.randrange(cells - 1)
        if dst_i >= src_i:
            dst_i += 1
        src = Coord(src_i % params.width, src_i // params.width)
        dst = Coord(dst_i % params.width, dst_i // params.width)
        flows.append(Flow(
            id=k + 1,
            period=period,
            deadline=period,
            length=length,
            jitter=int(fraction * period),
            src=src,
            dst=dst,
            ring=select_ring(topology, src, dst),
        ))
    return Flowset(tuple(flows), topology)


def classify_switch_flows(flowset: Flowset, ring_id: int, switch) -> tuple[set, set, set]:
    """Partition a switch's traffic on one ring into (injected, ejected, thru) flow ids."""
    switch = Coord(*switch)
    ring = flowset.topology.ring(ring_id)
    if switch not in ring:
        raise NotOnRingError(f"switch {tuple(switch)} is not on ring {ring_id}")
    pos = ring.position(switch)
    into, out, thru = set(), set(), set()
    for f in flowset.on_ring(ring_id):
        if f.src == switch:
            into.add(f.id)
        elif f.dst == switch:
            out.add(f.id)
        elif 0 < (pos - ring.position(f.src)) % ring.size < ring.hops(f.src, f.dst):
            thru.add(f.id)
    return into, out, thru


def _link_profile(ring, flow) -> tuple[int, Coord, Coord]:
    # Ring links occupied by the flow, as a bitmask over link positions
    # (link p runs from switch p to switch p+1), plus its injection and
    # ejection link identities (the source and destination switches).
    start = ring.position(flow.src)
    mask = 0
    for d in range(ring.hops(flow.src, flow.dst)):
        mask |= 1 << ((start + d) % ring.size)
    return mask, flow.src, flow.dst


def interference_table(flowset: Flowset) -> dict[int, InterferenceSets]:
    """Interference sets for every flow of the flowset in one pass."""
    topo = flowset.topology
    by_core: dict[Coord, set[int]] = {}
    for f in flowset.flows:
        by_core.setdefault(f.src, set()).add(f.id)

    table: dict[int, InterferenceSets] = {}
    up_map: dict[int, frozenset[int]] = {}
    in_ring_map: dict[int, frozenset[int]] = {}
    profiles: dict[int, tuple[int, Coord, Coord]] = {}

    for ring in topo.rings:
        members = flowset.on_ring(ring.id)
        if not members:
            continue
        thru_at: dict[int, set[int]] = {}
        in_at: dict[int, set[int]] = {}
        for f in members:
            profiles[f.id] = _link_profile(ring, f)
            start = ring.position(f.src)
            in_at.setdefault(start, set()).add(f.id)
            for d in range(1, ring.hops(f.src, f.dst)):
                thru_at.setdefault((start + d) % ring.size, set()).add(f.id)
        for f in members:
            start = ring.position(f.src)
            up = frozenset(thru_at.get(start, ()))
            in_ring = frozenset(in_at.get(start, set()) - {f.id})
            down = set()
            for d in range(1, ring.hops(f.src, f.dst)):
                down |= in_at.get((start + d) % ring.size, set())
            # A wrapping flow can both cross the injection switch and inject
            # downstream; it is classified as upstream interference, keeping
            # the four classes mutually exclusive. No bound consumes the down
            # set, so the precedence is free of analytical consequences.
            up_map[f.id] = up
            in_ring_map[f.id] = in_ring
            table[f.id] = InterferenceSets(
                up=up,
                down=frozenset(down - {f.id} - up),
                in_ring=in_ring,
                in_core=frozenset(by_core[f.src] - {f.id}),
                upind=frozenset(),
                ring_all=frozenset(g.id for g in members if g.id != f.id),
            )

    # Upstream indirect interference: one level of indirection only. A flow
    # qualifies when it delays some member of up (as upstream or injection
    # direct interference) while sharing no link with the flow under analysis.
    for f in flowset.flows:
        sets = table[f.id]
        mask_f, src_f, dst_f = profiles[f.id]
        upind = set()
        for j in sets.up:
            for k in up_map[j] | in_ring_map[j]:
                if k == f.id or k in upind:
                    continue
                mask_k, src_k, dst_k = profiles[k]
                if mask_k & mask_f == 0 and src_k != src_f and dst_k != dst_f:
                    upind.add(k)
        table[f.id] = InterferenceSets(
            up=sets.up, down=sets.down, in_ring=sets.in_ring,
            in_core=sets.in_core, upind=frozenset(upind), ring_all=sets.ring_all,
        )
    return table


def interference_sets(flowset: Flowset, flow: Flow | int) -> InterferenceSets:
    flow_id = flow if isinstance(flow, int) else flow.id
    return interference_table(flowset)[flow_id]


_FLOW_FIELDS = {"id", "T", "D", "L", "J", "src", "dst", "ring"}
_SET_FIELDS = {"width", "height", "seed", "topology", "flows"}


def flowset_to_doc(flowset: Flowset, seed: int | None = None,
                   embed_topology: bool = False) -> dict:
    doc: dict = {"width": flowset.topology.width, "height": flowset.topology.height}
    if seed is not None:
        doc["seed"] = seed
    if embed_topology:
        doc["topology"] = topology_to_doc(flowset.topology)
    doc["flows"] = [
        {"id": f.id, "T": f.period, "D": f.deadline, "L": f.length, "J": f.jitter,
         "src": [f.src.col, f.src.row], "dst": [f.dst.col, f.dst.row], "ring": f.ring}
        for f in flowset.flows
    ]
    return doc


def load_flowset(doc: dict, topology: Topology | None = None) -> Flowset:
    """Rebuild a flowset from a document; rings are recomputed when absent."""
    if not isinstance(doc, dict):
        raise TrafficError("flowset document must be a mapping")
    unknown = set(doc) - _SET_FIELDS
    if unknown:
        raise TrafficError(f"unknown flowset fields: {sorted(unknown)}")
    if topology is None:
        if "topology" in doc:
            topology = load_topology(doc["topology"])
        else:
            for key in ("width", "height"):
                if not isinstance(doc.get(key), int):
                    raise TrafficError(f"missing or non-integer field {key!r}")
            topology = generate_multi_ring(doc["width"], doc["height"])
    flows = []
    for entry in doc.get("flows", ()):
        if not isinstance(entry, dict):
            raise TrafficError("each flow must be a mapping")
        unknown = set(entry) - _FLOW_FIELDS
        if unknown:
            raise TrafficError(f"unknown flow fields: {sorted(unknown)}")
        try:
            src = Coord(*entry["src"])
            dst = Coord(*entry["dst"])
            ring = entry.get("ring")
            if ring is None:
                ring = select_ring(topology, src, dst)
            flows.append(Flow(
                id=entry["id"], period=entry["T"], deadline=entry["D"],
                length=entry["L"], jitter=entry["J"], src=src, dst=dst, ring=ring,
            ))
        except KeyError as exc:
            raise TrafficError(f"flow entry missing field {exc}") from None
    return Flowset(tuple(flows), topology)


def load_flowset_file(path_str: str, topology: Topology | None = None) -> Flowset:
    with open(path_str, "r", encoding="utf-8") as handle:
        return load_flowset(json.load(handle), topology)


def save_flowset_file(flowset: Flowset, path_str: str, seed: int | None = None,
                      embed_topology: bool = False) -> None:
    with open(path_str, "w", encoding="utf-8") as handle:
        json.dump(flowset_to_doc(flowset, seed, embed_topology), handle, indent=2)
        handle.write("\n")
