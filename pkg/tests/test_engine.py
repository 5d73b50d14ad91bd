import itertools

import numpy as np
import pytest

from genroute.addressing import Address, NetworkParams, addresses_to_matrix
from genroute.engine import (BackgroundLoad, SimConfig, SimulationError, efficiency_report,
                             link_failure_experiment, measure_efficiency, measure_overhead,
                             metrics_from_trace, production_counts, read_trace, run_convergence,
                             write_trace)
from genroute.genes import NodePolicy
from genroute.topology import Link, Topology, TopologyError, generate_wired

P1 = NetworkParams(gene_length=1, genes_per_node=3)


def test_fifo_transmission_times():
    t = Topology(2, {(0, 1): Link(10_000.0)})
    p = NetworkParams(genes_per_node=2)  # 2-byte genes, 0.2 ms each
    res = run_convergence(t, p, seed=0, config=SimConfig(launch_jitter=0.0))
    assert res.metrics.gene_transmissions == 4
    assert sorted(res.link_gene_finish_times[(0, 1)]) == pytest.approx([2e-4, 2e-4, 4e-4, 4e-4])


def test_propagation_cost_delays_arrival():
    t = Topology(2, {(0, 1): Link(10_000.0, 0.5)})
    p = NetworkParams(genes_per_node=1, gene_length=1)
    res = run_convergence(t, p, seed=1, config=SimConfig(launch_jitter=0.0, trace=True))
    rx = [r["t"] for r in res.trace if r["ev"] == "rx"]
    assert rx == pytest.approx([0.5002, 0.5002])


def test_zero_genes():
    t = generate_wired(10, 3.0, 0)
    res = run_convergence(t, NetworkParams(genes_per_node=0), seed=0)
    assert res.metrics.convergence_time_s == 0
    assert res.addresses == res.initial_addresses
    assert res.metrics.overhead_bytes_per_link_per_s is None
    assert res.metrics.gene_transmissions == 0


def test_overhead_examples():
    t = Topology.from_edges(2, [(0, 1)])
    assert measure_overhead([{"ev": "tx", "bytes": 30}], t, 1.0) == 30.0
    assert measure_overhead(30, t, 1.0) == 30.0
    assert measure_overhead([], t, 0.0) is None


def test_efficiency_two_nodes():
    t = Topology.from_edges(2, [(0, 1)])
    A = [Address((1, 2)), Address((3, 4))]
    assert measure_efficiency(t, A) == 1.0


def test_efficiency_one_when_addresses_encode_distances():
    # grid addresses whose similarity is AL minus the Manhattan distance
    w, h = 3, 3
    nodes = list(itertools.product(range(w), range(h)))
    idx = {xy: i for i, xy in enumerate(nodes)}
    edges = [(idx[(x, y)], idx[(x + dx, y + dy)]) for x, y in nodes for dx, dy in ((1, 0), (0, 1))
             if (x + dx, y + dy) in idx]
    t = Topology.from_edges(len(nodes), edges)
    A = [Address(tuple(int(p < x) for p in range(w)) + tuple(int(p < y) for p in range(h)), 2)
         for x, y in nodes]
    rep = efficiency_report(t, A)
    assert rep.efficiency == pytest.approx(1.0)
    assert rep.delivered_fraction == 1.0 and rep.mean_path_stretch_hops == 0.0


def test_efficiency_penalty_for_undelivered():
    t = Topology.from_edges(3, [(0, 1), (1, 2)])
    A = [Address((0,), 2), Address((0,), 2), Address((1,), 2)]  # nodes 0 and 1 indistinguishable
    rep = efficiency_report(t, A)
    assert rep.delivered_fraction == pytest.approx(3 / 6)
    assert rep.misdelivered == 3  # 0->1, 1->0 and 2->0 stop at the wrong twin
    assert rep.efficiency > 1.0


def test_deterministic_runs():
    t = generate_wired(10, 3.5, 2)
    cfg = SimConfig(trace=True)
    a = run_convergence(t, P1, seed=5, config=cfg)
    b = run_convergence(t, P1, seed=5, config=cfg)
    assert a.trace == b.trace
    assert a.metrics == b.metrics
    assert a.addresses == b.addresses
    c = run_convergence(t, P1, seed=6, config=cfg)
    assert c.trace != a.trace


def test_trace_replay(tmp_path):
    t = generate_wired(10, 3.5, 3)
    res = run_convergence(t, NetworkParams(gene_length=3, genes_per_node=2.5), seed=3,
                          config=SimConfig(trace=True))
    path = tmp_path / "trace.jsonl"
    write_trace(res, path)
    header, records = read_trace(path)
    assert metrics_from_trace(header, records) == res.metrics
    assert len(records) >= res.metrics.gene_transmissions
    times = [r["t"] for r in records]
    assert times == sorted(times)


def test_empty_run_trace_is_header_only(tmp_path):
    t = generate_wired(6, 2.5, 0)
    res = run_convergence(t, NetworkParams(genes_per_node=0), seed=0, config=SimConfig(trace=True))
    path = tmp_path / "t.jsonl"
    write_trace(res, path)
    assert len(path.read_text().splitlines()) == 1
    header, records = read_trace(path)
    assert records == [] and header["nodes"] == 6


def test_convergence_time_is_last_mutation():
    t = generate_wired(10, 3.0, 4)
    res = run_convergence(t, P1, seed=4, config=SimConfig(trace=True))
    muts = [r["t"] for r in res.trace if r["ev"] == "mut"]
    assert res.metrics.convergence_time_s == max(muts)
    assert res.metrics.mutations == len(muts)
    last_event = res.trace[-1]["t"]
    assert last_event >= res.metrics.convergence_time_s


def test_all_genes_die():
    t = generate_wired(10, 3.0, 1)
    res = run_convergence(t, NetworkParams(gene_length=4, genes_per_node=4), seed=1,
                          config=SimConfig(trace=True))
    launched = {r["gene"] for r in res.trace if r["ev"] == "launch"}
    ended = {r["gene"] for r in res.trace if r["ev"] in ("die", "drop")}
    assert launched == ended


def test_event_budget():
    t = generate_wired(10, 3.0, 1)
    with pytest.raises(SimulationError, match="event budget"):
        run_convergence(t, NetworkParams(gene_length=10, genes_per_node=10), seed=1,
                        config=SimConfig(max_events=50))


def test_disconnected_rejected():
    with pytest.raises(TopologyError):
        run_convergence(Topology.from_edges(4, [(0, 1), (2, 3)]), P1)


def test_fractional_production():
    t = generate_wired(50, 3.0, 0)
    p = NetworkParams(genes_per_node=2.5)
    counts = production_counts(t, p, [NodePolicy()] * 50, seed=0)
    assert set(counts) <= {2, 3}
    means = [np.mean(production_counts(t, p, [NodePolicy()] * 50, seed=s)) for s in range(40)]
    assert abs(np.mean(means) - 2.5) < 0.05
    res = run_convergence(t, p, seed=0)
    assert res.metrics.genes_per_node == np.mean(counts)


def test_policy_production_rate():
    t = generate_wired(6, 2.5, 0)
    pol = {0: NodePolicy(production_rate=10)}
    assert production_counts(t, NetworkParams(genes_per_node=1), [pol.get(i, NodePolicy()) for i in range(6)], 0) \
        == [10, 1, 1, 1, 1, 1]


def test_no_application_no_mutation():
    t = generate_wired(10, 3.0, 2)
    res = run_convergence(t, P1, [NodePolicy(application_probability=0.0)] * 10, seed=2)
    assert res.addresses == res.initial_addresses
    assert res.metrics.gene_transmissions > 0


def test_all_permanent():
    t = generate_wired(10, 3.0, 2)
    res = run_convergence(t, P1, [NodePolicy(permanent=True)] * 10, seed=2)
    assert res.metrics.convergence_time_s == 0
    assert res.addresses == res.initial_addresses


def test_pass_through_without_apply_still_decays():
    t = generate_wired(10, 3.5, 2)
    p = NetworkParams(gene_length=3, distribution_percentile=1.0, genes_per_node=3)
    on = run_convergence(t, p, seed=2, config=SimConfig(apply_on_pass_through=True))
    off = run_convergence(t, p, seed=2, config=SimConfig(apply_on_pass_through=False))
    # with dp = 1 every non-leaf reception relays; decay still ends every gene
    assert off.metrics.gene_transmissions > 0
    assert off.metrics.mutations < on.metrics.mutations


def test_initial_addresses_respected():
    t = generate_wired(6, 2.5, 0)
    A = np.zeros((6, 50), dtype=np.int16)
    res = run_convergence(t, NetworkParams(genes_per_node=0), initial_addresses=A)
    assert addresses_to_matrix(res.addresses).tolist() == A.tolist()


def test_queue_cap_drops():
    t = Topology.from_edges(2, [(0, 1)])
    p = NetworkParams(genes_per_node=20)
    res = run_convergence(t, p, seed=0, config=SimConfig(launch_jitter=0.0, queue_cap=5))
    assert res.metrics.genes_dropped == 30  # 15 of each node's 20 launches find the queue full
    assert res.metrics.gene_transmissions == 10


def test_background_load_reduces_gene_exchange():
    t = generate_wired(10, 3.5, 0)
    p = NetworkParams(gene_length=5, genes_per_node=6)
    base = run_convergence(t, p, seed=0, config=SimConfig(queue_cap=4))
    link = max(base.link_gene_counts, key=base.link_gene_counts.get)
    load = BackgroundLoad(*link, rate=9_500.0)
    loaded = run_convergence(t, p, seed=0, config=SimConfig(queue_cap=4, background=(load,)))
    assert loaded.link_gene_counts[link] < base.link_gene_counts[link]


def test_link_failure_experiment_keeps_packets():
    t = generate_wired(10, 3.5, 1)
    x = link_failure_experiment(t, NetworkParams(genes_per_node=3.5), seed=1)
    assert x.packets_lost == 0
    assert not x.recovery.topology.has_link(*x.link)
    assert x.recovery.metrics.genes_per_node == 0


def test_link_failure_experiment_rejects_bridge():
    t = Topology.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)])
    t2 = Topology.from_edges(3, [(0, 1), (1, 2)])
    with pytest.raises(ValueError):
        link_failure_experiment(t2, P1, seed=0)
    with pytest.raises(TopologyError):
        link_failure_experiment(Topology.from_edges(3, [(0, 1), (1, 2)]), P1, seed=0, link=(0, 1))
    assert link_failure_experiment(t, P1, seed=0, link=(0, 2)).link == (0, 2)
