import pytest

from rlnoc import data_path
from rlnoc.topology import Coord, load_topology_file
from rlnoc.traffic import Flow, Flowset, load_flowset_file


@pytest.fixture(scope="session")
def six_ring_topology():
    return load_topology_file(data_path("six_switch_ring.json"))


@pytest.fixture(scope="session")
def five_flow_fixture():
    """The canonical five-flow interference scenario on a six-switch ring."""
    return load_flowset_file(data_path("five_flow_scenario.json"))


@pytest.fixture(scope="session")
def ten_ring_fixture():
    return load_topology_file(data_path("grid4x4_ten_rings.json"))


def make_flow(fid, src, dst, ring=0, period=10_000, length=8, jitter=0,
              deadline=None):
    return Flow(id=fid, period=period,
                deadline=period if deadline is None else deadline,
                length=length, jitter=jitter,
                src=Coord(*src), dst=Coord(*dst), ring=ring)


@pytest.fixture
def flow_factory():
    return make_flow


def build_flowset(topology, *flows):
    return Flowset(tuple(flows), topology)


@pytest.fixture
def flowset_factory():
    return build_flowset
