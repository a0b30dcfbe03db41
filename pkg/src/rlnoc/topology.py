"""Multi-ring grid topologies: cores, unidirectional rings and shortest-hop routing.

A topology is a 2D grid of cores (one switch per core) connected by a set of
directed rings. Packets never change rings, so every ordered pair of cores
must share at least one ring. Routing picks, per (source, destination) pair,
the ring that reaches the destination in the fewest hops.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple


class Coord(NamedTuple):
    """Grid position of a core and its switch (column, row), row 0 at the top."""

    col: int
    row: int


class TopologyError(ValueError):
    """Base class for all topology validation failures."""


class InvalidDimensionError(TopologyError):
    pass


class NotOnRingError(TopologyError):
    pass


class DuplicateSwitchError(TopologyError):
    pass


class AdjacencyError(TopologyError):
    """Consecutive ring switches are not grid neighbours."""


class ConnectivityError(TopologyError):
    """Some ordered core pair shares no ring."""


class SchemaError(TopologyError):
    """Topology document violates the file schema."""


@dataclass(frozen=True)
class Ring:
    """A directed ring: an ordered cyclic sequence of switches.

    Direction is encoded purely by the switch order (the last switch wraps to
    the first). ``buffer_capacity`` is an optional per-ring override of the
    packet-buffer size; when absent the capacity defaults to the largest
    packet assigned to the ring by the flowset under analysis.
    """

    id: int
    switches: tuple[Coord, ...]
    buffer_capacity: int | None = None

    @property
    def size(self) -> int:
        return len(self.switches)

    def __contains__(self, coord) -> bool:
        return Coord(*coord) in self.switches

    def position(self, coord) -> int:
        coord = Coord(*coord)
        try:
            return self.switches.index(coord)
        except ValueError:
            raise NotOnRingError(f"switch {tuple(coord)} is not on ring {self.id}") from None

    def hops(self, src, dst) -> int:
        """Number of ring links crossed from src's switch to dst's switch."""
        return (self.position(dst) - self.position(src)) % self.size


@dataclass(frozen=True)
class Topology:
    """Immutable grid-plus-rings layout with a precomputed routing table."""

    width: int
    height: int
    rings: tuple[Ring, ...]
    routing: dict[tuple[Coord, Coord], int] = field(repr=False)

    def ring(self, ring_id: int) -> Ring:
        for ring in self.rings:
            if ring.id == ring_id:
                return ring
        raise KeyError(f"no ring with id {ring_id}")

    def cores(self) -> Iterable[Coord]:
        for row in range(self.height):
            for col in range(self.width):
                yield Coord(col, row)


def path(ring: Ring, src, dst) -> tuple[Coord, ...]:
    """Ordered switches from src's switch to dst's switch, inclusive, in ring order."""
    src, dst = Coord(*src), Coord(*dst)
    if src == dst:
        raise ValueError("path requires distinct source and destination")
    start = ring.position(src)
    hops = ring.hops(src, dst)
    return tuple(ring.switches[(start + k) % ring.size] for k in range(hops + 1))


def dpath(ring: Ring, src, dst) -> tuple[Coord, ...]:
    """The downstream path: same as path() minus its first switch."""
    return path(ring, src, dst)[1:]


def select_ring(topology: Topology, src, dst) -> int:
    """Routing-table lookup: hop-minimal ring for the pair, lowest id on ties."""
    src, dst = Coord(*src), Coord(*dst)
    if src == dst:
        raise ValueError("select_ring requires distinct source and destination")
    return topology.routing[(src, dst)]


def _build_routing(width: int, height: int, rings: tuple[Ring, ...]) -> dict:
    membership: dict[Coord, list[Ring]] = {}
    for ring in rings:
        for coord in ring.switches:
            membership.setdefault(coord, []).append(ring)
    routing: dict[tuple[Coord, Coord], int] = {}
    cells = [Coord(c, r) for r in range(height) for c in range(width)]
    for src in cells:
        for dst in cells:
            if src == dst:
                continue
            best: tuple[int, int] | None = None
            for ring in membership.get(src, ()):
                if dst in ring.switches:
                    cand = (ring.hops(src, dst), ring.id)
                    if best is None or cand < best:
                        best = cand
            if best is None:
                raise ConnectivityError(
                    f"cores {tuple(src)} and {tuple(dst)} share no ring"
                )
            routing[(src, dst)] = best[1]
    return routing


def _validate_ring(ring: Ring, width: int, height: int) -> None:
    if ring.size < 2:
        raise AdjacencyError(f"ring {ring.id} has fewer than 2 switches")
    seen = set()
    for coord in ring.switches:
        if not (0 <= coord.col < width and 0 <= coord.row < height):
            raise SchemaError(f"ring {ring.id} switch {tuple(coord)} is outside the grid")
        if coord in seen:
            raise DuplicateSwitchError(f"ring {ring.id} lists switch {tuple(coord)} twice")
        seen.add(coord)
    for a, b in zip(ring.switches, ring.switches[1:] + ring.switches[:1]):
        if abs(a.col - b.col) + abs(a.row - b.row) != 1:
            raise AdjacencyError(
                f"ring {ring.id}: switches {tuple(a)} and {tuple(b)} are not neighbours"
            )
    if ring.buffer_capacity is not None and ring.buffer_capacity < 1:
        raise SchemaError(f"ring {ring.id} buffer_capacity must be >= 1")


def build_topology(width: int, height: int, rings: Iterable[Ring]) -> Topology:
    """Validate all invariants and construct a topology with its routing table."""
    rings = tuple(rings)
    if width < 1 or height < 1:
        raise InvalidDimensionError("grid dimensions must be positive")
    ids = [ring.id for ring in rings]
    if len(set(ids)) != len(ids):
        raise SchemaError("ring ids must be unique")
    for ring in rings:
        _validate_ring(ring, width, height)
    routing = _build_routing(width, height, rings)
    return Topology(width, height, rings, routing)


def validate(topology: Topology) -> None:
    """Re-check every invariant of an already-built topology."""
    build_topology(topology.width, topology.height, topology.rings)


def _perimeter(c1: int, r1: int, c2: int, r2: int) -> tuple[Coord, ...]:
    """Clockwise rectangle border: needs c2 > c1 and r2 > r1."""
    top = [Coord(c, r1) for c in range(c1, c2 + 1)]
    right = [Coord(c2, r) for r in range(r1 + 1, r2 + 1)]
    bottom = [Coord(c, r2) for c in range(c2 - 1, c1 - 1, -1)]
    left = [Coord(c1, r) for r in range(r2 - 1, r1, -1)]
    return tuple(top + right + bottom + left)


def _canonical(switches: tuple[Coord, ...]) -> tuple[Coord, ...]:
    # Rotate the cycle to start at its smallest coordinate; direction is kept,
    # so a ring and its reversal stay distinct.
    pivot = switches.index(min(switches))
    return switches[pivot:] + switches[:pivot]


def generate_multi_ring(width: int, height: int) -> Topology:
    """Deterministic multi-ring generator guaranteeing full connectivity.

    Emits, in order: nested rectangle rings, full-width row-band rings for
    every row pair, and full-height column-band rings for every column pair,
    all clockwise, with exact duplicates dropped. Any two cores in different
    rows share the row-band ring of those rows; cores in the same row share a
    column-band ring, so every ordered pair is connected. The ring count is
    C(height,2) + C(width,2) + floor(min(width,height)/2) - 2.
    """
    if width < 2 or height < 2:
        raise InvalidDimensionError("generate_multi_ring requires width >= 2 and height >= 2")
    loops: list[tuple[Coord, ...]] = []
    k = 0
    while width - 2 * k >= 2 and height - 2 * k >= 2:
        loops.append(_perimeter(k, k, width - 1 - k, height - 1 - k))
        k += 1
    for r1 in range(height):
        for r2 in range(r1 + 1, height):
            loops.append(_perimeter(0, r1, width - 1, r2))
    for c1 in range(width):
        for c2 in range(c1 + 1, width):
            loops.append(_perimeter(c1, 0, c2, height - 1))
    rings: list[Ring] = []
    seen: set[tuple[Coord, ...]] = set()
    for loop in loops:
        key = _canonical(loop)
        if key in seen:
            continue
        seen.add(key)
        rings.append(Ring(id=len(rings), switches=loop))
    return build_topology(width, height, rings)


_TOP_FIELDS = {"width", "height", "rings"}
_RING_FIELDS = {"id", "switches", "buffer_capacity"}


def topology_to_doc(topology: Topology) -> dict:
    doc: dict = {"width": topology.width, "height": topology.height, "rings": []}
    for ring in topology.rings:
        entry: dict = {"id": ring.id, "switches": [[c.col, c.row] for c in ring.switches]}
        if ring.buffer_capacity is not None:
            entry["buffer_capacity"] = ring.buffer_capacity
        doc["rings"].append(entry)
    return doc


def load_topology(doc: dict) -> Topology:
    """Build a topology from a parsed document, rejecting unknown fields."""
    if not isinstance(doc, dict):
        raise SchemaError("topology document must be a mapping")
    unknown = set(doc) - _TOP_FIELDS
    if unknown:
        raise SchemaError(f"unknown topology fields: {sorted(unknown)}")
    for key in ("width", "height"):
        if not isinstance(doc.get(key), int):
            raise SchemaError(f"missing or non-integer field {key!r}")
    entries = doc.get("rings")
    if not isinstance(entries, list) or not entries:
        raise SchemaError("field 'rings' must be a non-empty list")
    rings = []
    for entry in entries:
        if not isinstance(entry, dict):
            raise SchemaError("each ring must be a mapping")
        unknown = set(entry) - _RING_FIELDS
        if unknown:
            raise SchemaError(f"unknown ring fields: {sorted(unknown)}")
        if not isinstance(entry.get("id"), int):
            raise SchemaError("ring is missing an integer 'id'")
        raw = entry.get("switches")
        if not isinstance(raw, list):
            raise SchemaError(f"ring {entry['id']}: 'switches' must be a list")
        switches = []
        for item in raw:
            if (not isinstance(item, (list, tuple)) or len(item) != 2
                    or not all(isinstance(v, int) for v in item)):
                raise SchemaError(f"ring {entry['id']}: switch entries must be [col, row]")
            switches.append(Coord(item[0], item[1]))
        capacity = entry.get("buffer_capacity")
        if capacity is not None and not isinstance(capacity, int):
            raise SchemaError(f"ring {entry['id']}: buffer_capacity must be an integer")
        rings.append(Ring(id=entry["id"], switches=tuple(switches), buffer_capacity=capacity))
    return build_topology(doc["width"], doc["height"], rings)


def load_topology_file(path_str: str) -> Topology:
    with open(path_str, "r", encoding="utf-8") as handle:
        return load_topology(json.load(handle))


def save_topology_file(topology: Topology, path_str: str) -> None:
    with open(path_str, "w", encoding="utf-8") as handle:
        json.dump(topology_to_doc(topology), handle, indent=2)
        handle.write("\n")
