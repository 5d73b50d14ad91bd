"""Seeded discrete-event simulation of gene circulation over queued links.

Every link direction is a FIFO served at the link bandwidth.  A frame
enqueued at ``t`` starts when the direction is free, occupies it for
``size / bandwidth`` seconds and arrives after the propagation cost.  Nodes
process genes instantly.

Randomness is split into independent streams derived from the run seed: one
for initial addresses, one per node for launches and one per gene for its
decay and forwarding choices.  A gene's sequence of choices therefore does not
depend on how other genes were scheduled.
"""

from __future__ import annotations

import heapq
import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .addressing import (Address, NetworkParams, addresses_from_matrix, from_digit_string,
                         random_address_matrix, to_digit_string)
from .genes import (DEFAULT_POLICY, Gene, NodePolicy, alter_gene, apply_gene,
                    check_gene_size, decay_mask, distribution_decision, format_gene,
                    gene_size_bytes, generate_gene, is_exhausted)
from .routing import Outcome, default_ttl, greedy_walk, handle_link_failure
from .topology import (DEFAULT_PACKET_BYTES, Link, Topology, WidthReport, hop_delay,
                       network_width, spf_all_pairs)


class SimulationError(RuntimeError):
    """Raised when a run exceeds its event budget."""


class SimEvent(NamedTuple):
    time: float
    seq: int
    kind: str      # "launch" | "gene" | "data"
    payload: Any


@dataclass(frozen=True)
class BackgroundLoad:
    """Constant-rate data frames injected on one link.

    With ``stop=None`` injection continues while any gene is alive.
    """

    u: int
    v: int
    rate: float                  # bytes/s per direction
    packet_bytes: int = DEFAULT_PACKET_BYTES
    both_directions: bool = True
    start: float = 0.0
    stop: float | None = None


@dataclass(frozen=True)
class SimConfig:
    data_packet_bytes: int = DEFAULT_PACKET_BYTES
    launch_jitter: float = 0.010
    apply_on_pass_through: bool = True
    queue_cap: int | None = None
    max_events: int = 5_000_000
    background: tuple[BackgroundLoad, ...] = ()
    trace: bool = False
    deal_launches: bool = True


@dataclass
class RunMetrics:
    convergence_time_s: float
    efficiency: float
    overhead_bytes_per_link_per_s: float | None  # None: no gene traffic
    width: WidthReport
    genes_per_node: float
    delivered_fraction: float
    mean_path_stretch_hops: float
    delivered_to_most_similar: int = 0
    dropped: int = 0
    gene_transmissions: int = 0
    gene_bytes: int = 0
    genes_dropped: int = 0
    mutations: int = 0
    misdelivered: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["width"] = asdict(self.width)
        return d


@dataclass
class RunResult:
    topology: Topology
    params: NetworkParams
    initial_addresses: list[Address]
    addresses: list[Address]
    metrics: RunMetrics
    link_gene_counts: dict[tuple[int, int], int]
    link_gene_finish_times: dict[tuple[int, int], list[float]]
    events: int
    trace: list[dict] | None = None

    def trace_header(self) -> dict:
        return trace_header(self.topology, self.params, self.initial_addresses)


# -- efficiency and overhead ---------------------------------------------------

@dataclass(frozen=True)
class EfficiencyReport:
    efficiency: float
    delivered_fraction: float
    delivered_to_most_similar: int
    dropped: int
    mean_path_stretch_hops: float
    pairs: int
    misdelivered: int = 0  # reached another node holding the destination's address


def efficiency_report(t: Topology, addresses, packet_bytes: float = DEFAULT_PACKET_BYTES,
                      ttl: int | None = None) -> EfficiencyReport:
    """Greedy routing over every ordered pair compared with shortest-path delay.

    Pairs that are not delivered to their destination are charged twice the
    worst shortest-path delay.  A packet consumed by another node that holds
    the same address counts as misdelivered.
    """
    n = t.node_count
    A = addresses if isinstance(addresses, np.ndarray) else np.array(
        [a.digits for a in addresses], dtype=np.int16)
    spf = spf_all_pairs(t, packet_bytes)
    penalty = 2.0 * float(spf.delay.max())
    if ttl is None:
        ttl = default_ttl(t)
    full = A.shape[1]
    sims = (A[:, None, :] == A[None, :, :]).sum(axis=2)
    delays = {}
    for (u, v), link in t.links.items():
        delays[(u, v)] = delays[(v, u)] = hop_delay(link, packet_bytes)
    total_g = total_s = 0.0
    delivered = most_similar = dropped = wrong = 0
    stretch = []
    for s in range(n):
        for d in range(n):
            if s == d:
                continue
            col = sims[:, d]
            r = greedy_walk(s, t.neighbors, lambda v: int(col[v]), lambda v: col[v] == full, ttl)
            total_s += spf.delay[s, d]
            if r.outcome is Outcome.DELIVERED and r.final == d:
                delivered += 1
                total_g += sum(delays[a] for a in zip(r.path, r.path[1:]))
                stretch.append(r.hops - spf.hops[s, d])
            else:
                total_g += penalty
                if r.outcome is Outcome.DROPPED:
                    dropped += 1
                elif r.outcome is Outcome.DELIVERED:
                    wrong += 1
                else:
                    most_similar += 1
    pairs = n * (n - 1)
    if pairs == 0:
        return EfficiencyReport(1.0, 1.0, 0, 0, 0.0, 0)
    return EfficiencyReport(total_g / total_s, delivered / pairs, most_similar, dropped,
                            float(np.mean(stretch)) if stretch else 0.0, pairs, wrong)


def measure_efficiency(t: Topology, addresses, params: NetworkParams | None = None,
                       packet_bytes: float = DEFAULT_PACKET_BYTES) -> float:
    return efficiency_report(t, addresses, packet_bytes).efficiency


def measure_overhead(trace: Iterable[Mapping] | int, t: Topology,
                     convergence_time_s: float) -> float | None:
    """Gene bytes per link per second; ``None`` when nothing converged."""
    if isinstance(trace, int):
        total = trace
    else:
        total = sum(rec["bytes"] for rec in trace if rec.get("ev") == "tx")
    if convergence_time_s <= 0 or t.link_count == 0:
        return None
    return total / (t.link_count * convergence_time_s)


# -- the simulator -------------------------------------------------------------

def _gene_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([seed, *key])


def production_counts(t: Topology, params: NetworkParams, policies: Sequence[NodePolicy],
                      seed: int) -> list[int]:
    counts = []
    for node in range(t.node_count):
        rate = policies[node].production_rate
        rate = params.genes_per_node if rate is None else rate
        whole = math.floor(rate)
        frac = rate - whole
        rng = _gene_rng(seed, 2, node)
        extra = 1 if frac > 0 and rng.random() < frac else 0
        counts.append(whole + extra)
    return counts


class _Run:
    def __init__(self, t: Topology, params: NetworkParams, policies: Sequence[NodePolicy],
                 seed: int, config: SimConfig, initial: np.ndarray):
        self.t = t
        self.params = params
        self.policies = policies
        self.seed = seed
        self.config = config
        self.addresses = addresses_from_matrix(initial, params.base)
        self.heap: list[SimEvent] = []
        self.seq = 0
        self.now = 0.0
        self.busy: dict[tuple[int, int], float] = {}
        self.pending: dict[tuple[int, int], deque] = {}
        self.live = 0
        self.events = 0
        self.last_mutation = 0.0
        self.mutations = 0
        self.tx_count = 0
        self.tx_bytes = 0
        self.genes_dropped = 0
        self.link_counts: dict[tuple[int, int], int] = {k: 0 for k in t.links}
        self.link_finish: dict[tuple[int, int], list[float]] = {k: [] for k in t.links}
        self.next_gene_id = 0
        self.trace: list[dict] | None = [] if config.trace else None

    def push(self, time: float, kind: str, payload) -> None:
        heapq.heappush(self.heap, SimEvent(time, self.seq, kind, payload))
        self.seq += 1

    def log(self, **rec) -> None:
        if self.trace is not None:
            self.trace.append({"t": self.now, **rec})

    def enqueue(self, u: int, v: int, size: float, link: Link) -> float | None:
        """Place a frame on direction u->v; returns its arrival time or None if dropped."""
        arc = (u, v)
        q = self.pending.setdefault(arc, deque())
        while q and q[0] <= self.now:
            q.popleft()
        if self.config.queue_cap is not None and len(q) >= self.config.queue_cap:
            return None
        start = max(self.now, self.busy.get(arc, 0.0))
        finish = start + size / link.bandwidth
        self.busy[arc] = finish
        q.append(finish)
        return finish

    def send(self, u: int, v: int, gene: Gene, gid: int, rng) -> None:
        link = self.t.link(u, v)
        size = gene_size_bytes(self.params, len(gene))
        finish = self.enqueue(u, v, size, link)
        if finish is None:
            self.live -= 1
            self.genes_dropped += 1
            self.log(ev="drop", src=u, dst=v, gene=gid)
            return
        key = (u, v) if u < v else (v, u)
        self.link_counts[key] += 1
        self.link_finish[key].append(finish)
        self.tx_count += 1
        self.tx_bytes += size
        self.log(ev="tx", src=u, dst=v, gene=gid, bytes=size, finish=finish, g=format_gene(gene))
        self.push(finish + link.propagation_cost, "gene", (v, u, gene, gid, rng))

    def receive(self, v: int, u: int, gene: Gene, gid: int, rng) -> None:
        policy = self.policies[v]
        others = [w for w in self.t.neighbors(v) if w != u]
        decision = distribution_decision(self.params, policy, u, others, rng)
        self.log(ev="rx", node=v, src=u, gene=gid)
        applies = not policy.permanent and (decision.send_back or self.config.apply_on_pass_through)
        if applies and policy.application_probability < 1.0:
            applies = rng.random() < policy.application_probability
        if applies:
            old = self.addresses[v]
            changed = [(p, d) for p, d in gene.active_segments if old.digits[p] != d]
            if changed:
                self.addresses[v] = apply_gene(old, gene)
                self.last_mutation = self.now
                self.mutations += 1
                self.log(ev="mut", node=v, changes=[[p, old.digits[p], d] for p, d in changed])
        gene = decay_mask(gene, rng)
        if is_exhausted(gene):
            self.live -= 1
            self.log(ev="die", node=v, gene=gid)
            return
        if decision.send_back:
            self.send(v, u, alter_gene(gene, self.addresses[v]), gid, rng)
        else:
            self.send(v, decision.target, gene, gid, rng)

    def launch(self, node: int, target: int, gene: Gene | None, gid: int) -> None:
        rng = _gene_rng(self.seed, 1, gid)
        fresh = gene is None
        if fresh:
            gene = generate_gene(self.addresses[node], self.params, rng, origin=node)
        self.log(ev="launch", node=node, gene=gid, fresh=fresh)
        self.send(node, target, gene, gid, rng)

    def data(self, load: BackgroundLoad, arc: tuple[int, int], interval: float) -> None:
        u, v = arc
        self.enqueue(u, v, load.packet_bytes, self.t.link(u, v))
        nxt = self.now + interval
        if load.stop is not None and nxt >= load.stop:
            return
        if load.stop is None and self.live <= 0:
            return
        self.push(nxt, "data", (load, arc, interval))

    def schedule_launches(self, emissions) -> None:
        counts = production_counts(self.t, self.params, self.policies, self.seed)
        jitter = self.config.launch_jitter
        for node in range(self.t.node_count):
            nbrs = self.t.neighbors(node)
            if not nbrs or counts[node] == 0:
                continue
            rng = _gene_rng(self.seed, 3, node)
            for k in range(counts[node]):
                if k % len(nbrs) == 0:
                    deal = [nbrs[i] for i in rng.permutation(len(nbrs))]
                when = float(rng.uniform(0.0, jitter)) if jitter > 0 else 0.0
                target = deal[k % len(nbrs)] if self.config.deal_launches else nbrs[int(rng.integers(len(nbrs)))]
                self.push(when, "launch", (node, target, None, self.next_gene_id))
                self.next_gene_id += 1
                self.live += 1
        if emissions:
            rng = _gene_rng(self.seed, 4)
            for sender, receiver, gene in emissions:
                when = float(rng.uniform(0.0, jitter)) if jitter > 0 else 0.0
                self.push(when, "launch", (sender, receiver, gene, self.next_gene_id))
                self.next_gene_id += 1
                self.live += 1
        self.produced = sum(counts)
        for load in self.config.background:
            link = self.t.link(load.u, load.v)
            interval = load.packet_bytes / load.rate
            arcs = [(load.u, load.v)] + ([(load.v, load.u)] if load.both_directions else [])
            for arc in arcs:
                self.push(load.start, "data", (load, arc, interval))

    def run(self) -> None:
        budget = self.config.max_events
        while self.heap:
            ev = heapq.heappop(self.heap)
            self.now = ev.time
            self.events += 1
            if self.events > budget:
                raise SimulationError(
                    f"event budget {budget} exceeded at t={self.now:.6f}s with {self.live} live genes")
            if ev.kind == "gene":
                self.receive(*ev.payload)
            elif ev.kind == "launch":
                self.launch(*ev.payload)
            else:
                self.data(*ev.payload)


def run_convergence(t: Topology, params: NetworkParams, policies=None, seed: int = 0,
                    config: SimConfig | None = None, initial_addresses=None,
                    emissions: Sequence[tuple[int, int, Gene]] = ()) -> RunResult:
    """Circulate genes until none are alive and measure the converged addresses.

    ``policies`` is a sequence or mapping of per-node ``NodePolicy``; missing
    nodes use the default policy.  ``initial_addresses`` (addresses or digit
    matrix) replaces the random start; ``emissions`` injects extra genes at
    launch time, as produced by link-failure handling.
    """
    config = config or SimConfig()
    t.require_connected()
    check_gene_size(params)
    policies = _expand_policies(policies, t.node_count)
    if initial_addresses is None:
        initial = random_address_matrix(t.node_count, params, _gene_rng(seed, 0))
    elif isinstance(initial_addresses, np.ndarray):
        initial = initial_addresses.astype(np.int16)
    else:
        initial = np.array([a.digits for a in initial_addresses], dtype=np.int16)
    run = _Run(t, params, policies, seed, config, initial)
    run.schedule_launches(emissions)
    run.run()

    final = np.array([a.digits for a in run.addresses], dtype=np.int16)
    rep = efficiency_report(t, final, config.data_packet_bytes)
    ct = run.last_mutation
    metrics = RunMetrics(
        convergence_time_s=ct,
        efficiency=rep.efficiency,
        overhead_bytes_per_link_per_s=measure_overhead(run.tx_bytes, t, ct),
        width=network_width(t),
        genes_per_node=run.produced / t.node_count,
        delivered_fraction=rep.delivered_fraction,
        mean_path_stretch_hops=rep.mean_path_stretch_hops,
        delivered_to_most_similar=rep.delivered_to_most_similar,
        dropped=rep.dropped,
        gene_transmissions=run.tx_count,
        gene_bytes=run.tx_bytes,
        genes_dropped=run.genes_dropped,
        mutations=run.mutations,
        misdelivered=rep.misdelivered,
    )
    return RunResult(t, params, addresses_from_matrix(initial, params.base), run.addresses,
                     metrics, run.link_counts, run.link_finish, run.events, run.trace)


def _expand_policies(policies, n: int) -> list[NodePolicy]:
    if policies is None:
        return [DEFAULT_POLICY] * n
    if isinstance(policies, Mapping):
        return [policies.get(i, DEFAULT_POLICY) for i in range(n)]
    policies = list(policies)
    if len(policies) != n:
        raise ValueError(f"expected {n} policies, got {len(policies)}")
    return policies


@dataclass
class FailureExperiment:
    link: tuple[int, int]
    before: EfficiencyReport      # converged addresses, intact topology
    after_cut: EfficiencyReport   # same addresses, link removed
    recovered: EfficiencyReport   # after the repair genes died out
    recovery: RunResult

    @property
    def packets_lost(self) -> int:
        return self.after_cut.dropped


def cuttable_links(t: Topology) -> list[tuple[int, int]]:
    """Links whose removal leaves the topology connected."""
    return [e for e in t.links if t.without_link(*e).is_connected()]


def link_failure_experiment(t: Topology, params: NetworkParams, seed: int = 0,
                            link: tuple[int, int] | None = None, policies=None,
                            config: SimConfig | None = None,
                            fraction: float = 1.0) -> FailureExperiment:
    """Converge, cut one link, route on stale addresses, then repair.

    The repair run circulates only the genes emitted by the two endpoints;
    nodes produce no fresh genes.  Without ``link`` a non-bridge link is
    drawn from the seed.
    """
    config = config or SimConfig()
    base = run_convergence(t, params, policies, seed, config)
    if link is None:
        options = cuttable_links(t)
        if not options:
            raise ValueError("every link is a bridge; no cut keeps the network connected")
        link = options[int(_gene_rng(seed, 5).integers(len(options)))]
    u, v = link
    resp = handle_link_failure(t, base.addresses, u, v, params, _gene_rng(seed, 6), fraction)
    resp.topology.require_connected()
    pb = config.data_packet_bytes
    before = efficiency_report(t, base.addresses, pb)
    cut = efficiency_report(resp.topology, base.addresses, pb)
    quiet = [replace(p, production_rate=0.0) for p in _expand_policies(policies, t.node_count)]
    rec = run_convergence(resp.topology, params, quiet, seed, config,
                          initial_addresses=resp.addresses, emissions=resp.emissions)
    return FailureExperiment(_edge(u, v), before, cut,
                             efficiency_report(resp.topology, rec.addresses, pb), rec)


def _edge(u, v):
    return (u, v) if u < v else (v, u)


# -- trace files ---------------------------------------------------------------

def trace_header(t: Topology, params: NetworkParams, initial: Sequence[Address]) -> dict:
    return {
        "ev": "header",
        "nodes": t.node_count,
        "links": [[u, v, l.bandwidth, l.propagation_cost] for (u, v), l in t.links.items()],
        "params": asdict(params),
        "initial_addresses": [to_digit_string(a) for a in initial],
    }


def write_trace(result: RunResult, path) -> None:
    """One JSON object per line: a header, then events in time order."""
    with open(path, "w") as fh:
        fh.write(json.dumps(result.trace_header(), sort_keys=True) + "\n")
        for rec in result.trace or ():
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_trace(path) -> tuple[dict, list[dict]]:
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("ev") != "header":
        raise ValueError(f"{path}: missing trace header")
    return lines[0], lines[1:]


def metrics_from_trace(header: dict, records: Sequence[dict],
                       packet_bytes: float = DEFAULT_PACKET_BYTES,
                       genes_per_node: float | None = None) -> RunMetrics:
    """Recompute run metrics from a trace alone."""
    n = header["nodes"]
    t = Topology(n, {(u, v): Link(bw, cost) for u, v, bw, cost in header["links"]})
    params = NetworkParams(**header["params"])
    A = np.array([from_digit_string(s, params.base).digits for s in header["initial_addresses"]],
                 dtype=np.int16)
    last = 0.0
    tx = nbytes = drops = mutations = 0
    launches = 0
    for rec in records:
        ev = rec["ev"]
        if ev == "mut":
            for pos, _, new in rec["changes"]:
                A[rec["node"], pos] = new
            last = rec["t"]
            mutations += 1
        elif ev == "tx":
            tx += 1
            nbytes += rec["bytes"]
        elif ev == "drop":
            drops += 1
        elif ev == "launch" and rec["fresh"]:
            launches += 1
    rep = efficiency_report(t, A, packet_bytes)
    return RunMetrics(
        convergence_time_s=last,
        efficiency=rep.efficiency,
        overhead_bytes_per_link_per_s=measure_overhead(nbytes, t, last),
        width=network_width(t),
        genes_per_node=genes_per_node if genes_per_node is not None else launches / n,
        delivered_fraction=rep.delivered_fraction,
        mean_path_stretch_hops=rep.mean_path_stretch_hops,
        delivered_to_most_similar=rep.delivered_to_most_similar,
        dropped=rep.dropped,
        gene_transmissions=tx,
        gene_bytes=nbytes,
        genes_dropped=drops,
        mutations=mutations,
        misdelivered=rep.misdelivered,
    )
