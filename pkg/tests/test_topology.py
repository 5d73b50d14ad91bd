import itertools

import networkx as nx
import numpy as np
import pytest

from genroute.topology import (Link, Topology, TopologyError, adhoc_radius, format_edge_list,
                               generate_adhoc, generate_wired, max_flow_decomposition,
                               network_width, parse_edge_list, read_edge_list, spf_all_pairs,
                               write_edge_list)


def path(n):
    return Topology.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def to_nx(t):
    g = nx.Graph()
    g.add_nodes_from(range(t.node_count))
    for (u, v), l in t.links.items():
        g.add_edge(u, v, capacity=l.bandwidth)
    return g


def test_invalid_links():
    with pytest.raises(TopologyError):
        Topology(2, {(0, 0): Link()})
    with pytest.raises(TopologyError):
        Topology(2, {(0, 1): Link(), (1, 0): Link()})
    with pytest.raises(TopologyError):
        Topology(2, {(0, 5): Link()})
    with pytest.raises(TopologyError):
        Topology(2, {(0, 1): Link(bandwidth=0)})


def test_wired_generator():
    t = generate_wired(10, 3.0, seed=4)
    assert t.node_count == 10 and t.is_connected()
    assert t == generate_wired(10, 3.0, seed=4)
    assert t.link_count == 15
    assert all(l.bandwidth == 10_000 for l in t.links.values())


def test_wired_mean_degree_tracks_request():
    for deg in (2.6, 3.5, 5.0):
        t = generate_wired(20, deg, seed=1)
        assert abs(t.mean_degree - deg) <= 0.1


def test_adhoc_generator():
    t = generate_adhoc(30, density_class="sparse", seed=2)
    assert t.is_connected()
    assert t.positions.shape == (30, 2)
    assert np.all((t.positions >= 0) & (t.positions <= 1))
    d = np.linalg.norm(t.positions[:, None] - t.positions[None], axis=2)
    r = adhoc_radius(30, "sparse")
    for u in range(30):
        for v in range(u + 1, 30):
            assert t.has_link(u, v) == (d[u, v] <= r)
    assert t == generate_adhoc(30, density_class="sparse", seed=2)


def test_two_far_nodes_have_no_link():
    from genroute.topology import geometric_links
    assert geometric_links(np.array([[0, 0], [0.9, 0.9]]), 0.5) == {}


def test_dense_narrower_than_sparse():
    sparse = np.mean([network_width(generate_adhoc(50, density_class="sparse", seed=s)).diameter_hops
                      for s in range(5)])
    dense = np.mean([network_width(generate_adhoc(50, density_class="dense", seed=s)).diameter_hops
                     for s in range(5)])
    assert dense < sparse


def test_adhoc_presets_mean_degree():
    for cls, lo, hi in (("sparse", 3, 4.5), ("dense", 6, 8.5)):
        degs = [generate_adhoc(50, density_class=cls, seed=s).mean_degree for s in range(10)]
        assert lo <= np.mean(degs) <= hi


def test_generation_fails_when_unconnectable():
    with pytest.raises(TopologyError):
        generate_adhoc(40, radius=0.01, seed=0, max_retries=5)
    with pytest.raises(TopologyError):
        generate_wired(10, 0.5, seed=0)


def test_spf_small_graphs():
    assert spf_all_pairs(path(2)).hops[0, 1] == 1
    tri = Topology.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    h = spf_all_pairs(tri).hops
    assert all(h[i, j] == 1 for i in range(3) for j in range(3) if i != j)
    assert spf_all_pairs(path(4)).hops[0, 3] == 3


def test_spf_delay_matches_networkx():
    rng = np.random.default_rng(5)
    t = generate_wired(15, 3.0, seed=5)
    t = Topology(15, {k: Link(float(rng.uniform(1000, 20000))) for k in t.links})
    g = to_nx(t)
    for u, v in g.edges:
        g[u][v]["w"] = 512 / g[u][v]["capacity"]
    ref = dict(nx.all_pairs_dijkstra_path_length(g, weight="w"))
    got = spf_all_pairs(t).delay
    for i in range(15):
        for j in range(15):
            assert got[i, j] == pytest.approx(ref[i][j])
    hops = spf_all_pairs(t).hops
    for i, j, k in itertools.product(range(15), repeat=3):
        assert hops[i, k] <= hops[i, j] + hops[j, k]
    assert np.array_equal(hops, hops.T)


def test_spf_disconnected_names_components():
    t = Topology.from_edges(4, [(0, 1), (2, 3)])
    with pytest.raises(TopologyError, match=r"\[\[0, 1\], \[2, 3\]\]"):
        spf_all_pairs(t)


def test_width_examples():
    k5 = Topology.from_edges(5, itertools.combinations(range(5), 2))
    w = network_width(k5)
    assert (w.diameter_hops, w.mean_shortest_path_hops) == (1, 1.0)
    w = network_width(path(4))
    assert w.diameter_hops == 3
    assert w.mean_shortest_path_hops == pytest.approx(10 / 6)
    star = Topology.from_edges(6, [(0, i) for i in range(1, 6)])
    assert network_width(star).diameter_hops == 2


def test_width_mean_below_diameter():
    for s in range(5):
        w = network_width(generate_wired(12, 2.5, seed=s))
        assert w.mean_shortest_path_hops <= w.diameter_hops


def test_flow_single_link():
    t = Topology(2, {(0, 1): Link(700.0)})
    f = max_flow_decomposition(t, 0, 1)
    assert f.segments == ((700.0, 1),)
    assert f.value == 700.0


def test_flow_two_disjoint_paths():
    t = Topology.from_edges(4, [(0, 1), (1, 3), (0, 2), (2, 3)], bandwidth=5.0)
    f = max_flow_decomposition(t, 0, 3)
    assert f.total == 10.0 and f.value == 10.0
    assert sorted(f.segments) == [(5.0, 2), (5.0, 2)]
    assert max_flow_decomposition(t, 0, 3, "unit").total == 2.0


def test_flow_same_endpoints_rejected():
    with pytest.raises(TopologyError):
        max_flow_decomposition(path(3), 1, 1)


def brute_min_cut(t, s, d):
    others = [v for v in range(t.node_count) if v not in (s, d)]
    best = np.inf
    for bits in range(2 ** len(others)):
        side = {s} | {v for i, v in enumerate(others) if bits >> i & 1}
        cut = sum(l.bandwidth for (u, v), l in t.links.items() if (u in side) != (v in side))
        best = min(best, cut)
    return best


@pytest.mark.parametrize("seed", range(8))
def test_flow_equals_brute_force_min_cut(seed):
    rng = np.random.default_rng(seed)
    base = generate_wired(10, 3.5, seed=seed)
    t = Topology(10, {k: Link(float(rng.integers(1, 20))) for k in base.links})
    f = max_flow_decomposition(t, 0, 9)
    assert f.total == pytest.approx(brute_min_cut(t, 0, 9))
    assert f.value == pytest.approx(nx.maximum_flow_value(to_nx(t), 0, 9))
    # conservation away from the endpoints
    for v in range(1, 9):
        out = sum(x for (a, b), x in f.flow.items() if a == v)
        inn = sum(x for (a, b), x in f.flow.items() if b == v)
        assert out == pytest.approx(inn)
    assert all(hops >= 1 and lam > 0 for lam, hops in f.segments)


def test_flow_decomposition_is_shortest_first():
    t = generate_wired(12, 3.0, seed=3)
    lengths = [h for _, h in max_flow_decomposition(t, 0, 11, "unit").segments]
    assert lengths == sorted(lengths)


def test_edge_list_round_trip(tmp_path):
    t = generate_adhoc(8, density_class="dense", seed=1)
    t = Topology(8, {k: Link(l.bandwidth, 0.001 * i) for i, (k, l) in enumerate(t.links.items())},
                 t.positions)
    assert parse_edge_list(format_edge_list(t)) == t
    p = tmp_path / "net.txt"
    write_edge_list(t, p)
    assert read_edge_list(p) == t


def test_edge_list_errors():
    with pytest.raises(TopologyError, match="line 2"):
        parse_edge_list("3\n0 x\n")
    with pytest.raises(TopologyError):
        parse_edge_list("# nothing\n")
    t = parse_edge_list("3  # nodes\n0 1\n1 2 500\n")
    assert t.link(1, 2).bandwidth == 500 and t.link(0, 1).bandwidth == 10_000
