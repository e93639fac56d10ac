import pytest
from hypothesis import given, strategies as st

from ffward.graph import CommGraph, DisconnectedGraphError, read_edgelist


def test_named_graphs():
    assert CommGraph.complete(4).diameter == 1
    assert CommGraph.path(5).diameter == 4
    assert CommGraph.ring(6).diameter == 3
    assert CommGraph.named("path", 3).neighbors(1) == [0, 2]


def test_edges_normalised():
    g = CommGraph.from_edges(3, [(1, 0), (2, 1), (0, 1)])
    assert g.edges == frozenset({(0, 1), (1, 2)})
    assert g.closed_neighborhood(1) == [0, 1, 2]


@pytest.mark.parametrize("edges,err", [([(0, 0), (0, 1)], ValueError), ([(0, 5)], ValueError),
                                       ([(0, 1)], DisconnectedGraphError)])
def test_invalid(edges, err):
    with pytest.raises(err):
        CommGraph.from_edges(3, edges)


def test_read_edgelist(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("# ring\n0 1\n1 2\n\n2 3  # closing edge below\n3 0\n")
    g = read_edgelist(p)
    assert g.num_nodes == 4 and g.diameter == 2
    assert g.to_edgelist() == "0 1\n0 3\n1 2\n2 3\n"
    p.write_text("0 1 2\n")
    with pytest.raises(ValueError):
        read_edgelist(p)


@given(st.integers(2, 12))
def test_path_diameter(n):
    assert CommGraph.path(n).diameter == n - 1
