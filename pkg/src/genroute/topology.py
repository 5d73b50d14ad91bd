"""Network graphs, the shortest-path baseline, width metrics and max-flow segments."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.optimize import brentq
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

DEFAULT_BANDWIDTH = 10_000.0  # bytes/s
DEFAULT_PACKET_BYTES = 512

# Target mean degree for the ad-hoc density presets.
ADHOC_DEGREE_PRESETS = {"sparse": 3.5, "dense": 7.0}


class TopologyError(ValueError):
    """Raised for malformed, disconnected or ungeneratable topologies."""


@dataclass(frozen=True)
class Link:
    bandwidth: float = DEFAULT_BANDWIDTH
    propagation_cost: float = 0.0


def _key(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass
class Topology:
    """Undirected graph with per-link bandwidth; nodes are ``0..node_count-1``."""

    node_count: int
    links: dict[tuple[int, int], Link] = field(default_factory=dict)
    positions: np.ndarray | None = None

    def __post_init__(self):
        cleaned = {}
        for (u, v), link in self.links.items():
            if u == v:
                raise TopologyError(f"self-loop at node {u}")
            if not (0 <= u < self.node_count and 0 <= v < self.node_count):
                raise TopologyError(f"link ({u}, {v}) references unknown node")
            if link.bandwidth <= 0 or link.propagation_cost < 0:
                raise TopologyError(f"link ({u}, {v}) has invalid bandwidth or cost")
            k = _key(u, v)
            if k in cleaned:
                raise TopologyError(f"duplicate link {k}")
            cleaned[k] = link
        self.links = dict(sorted(cleaned.items()))
        if self.positions is not None:
            self.positions = np.asarray(self.positions, dtype=float).reshape(self.node_count, 2)
        self._adj = [[] for _ in range(self.node_count)]
        for u, v in self.links:
            self._adj[u].append(v)
            self._adj[v].append(u)
        for nbrs in self._adj:
            nbrs.sort()

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]],
                   bandwidth: float = DEFAULT_BANDWIDTH, positions=None) -> "Topology":
        return cls(n, {_key(u, v): Link(bandwidth) for u, v in edges}, positions)

    def neighbors(self, u: int) -> list[int]:
        return self._adj[u]

    def degree(self, u: int) -> int:
        return len(self._adj[u])

    def has_link(self, u: int, v: int) -> bool:
        return _key(u, v) in self.links

    def link(self, u: int, v: int) -> Link:
        try:
            return self.links[_key(u, v)]
        except KeyError:
            raise TopologyError(f"no link between {u} and {v}") from None

    @property
    def link_count(self) -> int:
        return len(self.links)

    @property
    def mean_degree(self) -> float:
        return 2.0 * len(self.links) / self.node_count

    def without_link(self, u: int, v: int) -> "Topology":
        if not self.has_link(u, v):
            raise TopologyError(f"no link between {u} and {v}")
        links = {k: l for k, l in self.links.items() if k != _key(u, v)}
        return Topology(self.node_count, links, self.positions)

    def components(self) -> list[list[int]]:
        _, labels = connected_components(self._matrix(lambda l: 1.0), directed=False)
        comps: dict[int, list[int]] = {}
        for node, lab in enumerate(labels):
            comps.setdefault(int(lab), []).append(node)
        return sorted(comps.values())

    def is_connected(self) -> bool:
        return len(self.components()) == 1

    def require_connected(self) -> None:
        comps = self.components()
        if len(comps) > 1:
            raise TopologyError(f"topology is disconnected; components: {comps}")

    def _matrix(self, weight) -> csr_matrix:
        n = self.node_count
        if not self.links:
            return csr_matrix((n, n))
        rows, cols, vals = [], [], []
        for (u, v), link in self.links.items():
            w = weight(link)
            rows += [u, v]
            cols += [v, u]
            vals += [w, w]
        return csr_matrix((vals, (rows, cols)), shape=(n, n))

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        same_pos = (self.positions is None and other.positions is None) or (
            self.positions is not None and other.positions is not None
            and np.array_equal(self.positions, other.positions)
        )
        return self.node_count == other.node_count and self.links == other.links and same_pos


# -- generators ----------------------------------------------------------------

def generate_wired(n: int, avg_degree: float, seed: int, bandwidth: float = DEFAULT_BANDWIDTH,
                   max_retries: int = 2000) -> Topology:
    """Uniform random connected graph with ``round(n * avg_degree / 2)`` links."""
    if n < 2 or avg_degree < 1:
        raise TopologyError("need n >= 2 and avg_degree >= 1")
    m = max(n - 1, int(round(n * avg_degree / 2)))
    all_pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    if m > len(all_pairs):
        raise TopologyError(f"avg_degree {avg_degree} impossible with {n} nodes")
    rng = np.random.default_rng([seed, 0x77])
    for _ in range(max_retries):
        chosen = rng.choice(len(all_pairs), size=m, replace=False)
        t = Topology.from_edges(n, (all_pairs[i] for i in sorted(chosen)), bandwidth)
        if t.is_connected():
            return t
    raise TopologyError(f"no connected graph found for n={n}, avg_degree={avg_degree}")


def _expected_degree(n: int, r: float) -> float:
    # mean fraction of the unit square within distance r of a uniform point, r <= 1
    return (n - 1) * (math.pi * r * r - 8.0 / 3.0 * r ** 3 + 0.5 * r ** 4)


def adhoc_radius(n: int, density_class: str) -> float:
    """Radius for a density preset.

    The radius hits the preset mean degree including boundary effects, but is
    never below ``sqrt((ln n + 1) / (pi n))`` so that connected placements
    remain reasonably likely for rejection sampling.
    """
    try:
        target = ADHOC_DEGREE_PRESETS[density_class]
    except KeyError:
        raise TopologyError(f"unknown density class {density_class!r}") from None
    if target >= _expected_degree(n, 1.0):
        return 1.0
    r = brentq(lambda x: _expected_degree(n, x) - target, 1e-6, 1.0)
    floor = math.sqrt((math.log(n) + 1.0) / (math.pi * n))
    return min(1.0, max(r, floor))


def geometric_links(positions: np.ndarray, radius: float,
                    bandwidth: float = DEFAULT_BANDWIDTH) -> dict[tuple[int, int], Link]:
    positions = np.asarray(positions)
    d = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=2)
    n = len(positions)
    return {(u, v): Link(bandwidth) for u in range(n) for v in range(u + 1, n) if d[u, v] <= radius}


def generate_adhoc(n: int, radius: float | None = None, density_class: str = "sparse",
                   seed: int = 0, bandwidth: float = DEFAULT_BANDWIDTH,
                   max_retries: int = 5000) -> Topology:
    """Unit-disk graph over nodes placed uniformly in the unit square.

    When ``radius`` is None the density preset for ``n`` is used.  Placements
    are redrawn until the graph is connected.
    """
    if n < 2:
        raise TopologyError("need n >= 2")
    if radius is None:
        radius = adhoc_radius(n, density_class)
    if not 0 < radius <= 1:
        raise TopologyError("radius must lie in (0, 1]")
    rng = np.random.default_rng([seed, 0xAD])
    for _ in range(max_retries):
        pos = rng.random((n, 2))
        t = Topology(n, geometric_links(pos, radius, bandwidth), pos)
        if t.is_connected():
            return t
    raise TopologyError(f"no connected placement for n={n}, radius={radius:.3f}")


# -- shortest paths and width --------------------------------------------------

@dataclass(frozen=True)
class SpfResult:
    hops: np.ndarray   # integer hop counts
    delay: np.ndarray  # seconds for one data packet


def hop_delay(link: Link, packet_bytes: float) -> float:
    return packet_bytes / link.bandwidth + link.propagation_cost


def spf_all_pairs(t: Topology, packet_bytes: float = DEFAULT_PACKET_BYTES) -> SpfResult:
    t.require_connected()
    hops = shortest_path(t._matrix(lambda l: 1.0), method="D", directed=False, unweighted=True)
    delay = shortest_path(t._matrix(lambda l: hop_delay(l, packet_bytes)), method="D", directed=False)
    return SpfResult(hops.astype(int), delay)


@dataclass(frozen=True)
class WidthReport:
    diameter_hops: int
    mean_shortest_path_hops: float


def network_width(t: Topology) -> WidthReport:
    hops = spf_all_pairs(t).hops
    iu = np.triu_indices(t.node_count, k=1)
    if len(iu[0]) == 0:
        return WidthReport(0, 0.0)
    return WidthReport(int(hops.max()), float(hops[iu].mean()))


# -- max flow ------------------------------------------------------------------

@dataclass(frozen=True)
class FlowDecomposition:
    """Augmenting-path segments ``(flow, hop_length)`` in the order they were found."""

    segments: tuple[tuple[float, int], ...]
    value: float
    flow: dict[tuple[int, int], float]  # net flow on directed arcs, positive entries only

    @property
    def total(self) -> float:
        return sum(lam for lam, _ in self.segments)


def max_flow_decomposition(t: Topology, src: int, dst: int,
                           capacity_source: str = "bandwidth") -> FlowDecomposition:
    """Edmonds-Karp max flow, recording every augmenting path.

    Each undirected link carries its capacity in both directions.  Paths are
    found by BFS with neighbours visited in increasing id order, which fixes a
    canonical decomposition.
    """
    if src == dst:
        raise TopologyError("source and sink must differ")
    if capacity_source not in ("bandwidth", "unit"):
        raise TopologyError(f"unknown capacity source {capacity_source!r}")
    n = t.node_count
    cap: dict[tuple[int, int], float] = {}
    for (u, v), link in t.links.items():
        c = link.bandwidth if capacity_source == "bandwidth" else 1.0
        cap[(u, v)] = c
        cap[(v, u)] = c
    flow = {arc: 0.0 for arc in cap}
    eps = 1e-12
    segments = []
    while True:
        parent = [-1] * n
        parent[src] = src
        queue = deque([src])
        while queue and parent[dst] == -1:
            u = queue.popleft()
            for v in t.neighbors(u):
                if parent[v] == -1 and cap[(u, v)] - flow[(u, v)] > eps:
                    parent[v] = u
                    queue.append(v)
        if parent[dst] == -1:
            break
        path = [dst]
        while path[-1] != src:
            path.append(parent[path[-1]])
        path.reverse()
        arcs = list(zip(path, path[1:]))
        lam = min(cap[a] - flow[a] for a in arcs)
        for u, v in arcs:
            flow[(u, v)] += lam
            flow[(v, u)] -= lam
        segments.append((lam, len(arcs)))
    value = sum(flow[(src, v)] for v in t.neighbors(src))
    net = {a: f for a, f in flow.items() if f > eps}
    return FlowDecomposition(tuple(segments), value, net)


# -- edge-list format ----------------------------------------------------------

def format_edge_list(t: Topology) -> str:
    """Plain-text form: node count, ``u v bandwidth [cost]`` lines, ``pos i x y`` lines."""
    lines = [f"{t.node_count}"]
    for (u, v), link in t.links.items():
        line = f"{u} {v} {link.bandwidth!r}"
        if link.propagation_cost:
            line += f" {link.propagation_cost!r}"
        lines.append(line)
    if t.positions is not None:
        for i, (x, y) in enumerate(t.positions):
            lines.append(f"pos {i} {float(x)!r} {float(y)!r}")
    return "\n".join(lines) + "\n"


def parse_edge_list(text: str) -> Topology:
    n = None
    links = {}
    pos = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if n is None:
                n = int(parts[0])
            elif parts[0] == "pos":
                pos[int(parts[1])] = (float(parts[2]), float(parts[3]))
            else:
                u, v = int(parts[0]), int(parts[1])
                bw = float(parts[2]) if len(parts) > 2 else DEFAULT_BANDWIDTH
                cost = float(parts[3]) if len(parts) > 3 else 0.0
                links[_key(u, v)] = Link(bw, cost)
        except (ValueError, IndexError) as exc:
            raise TopologyError(f"line {lineno}: cannot parse {raw!r}") from exc
    if n is None:
        raise TopologyError("edge list is empty")
    positions = None
    if pos:
        if sorted(pos) != list(range(n)):
            raise TopologyError("coordinates must be given for every node or none")
        positions = np.array([pos[i] for i in range(n)])
    return Topology(n, links, positions)


def read_edge_list(path) -> Topology:
    return parse_edge_list(Path(path).read_text())


def write_edge_list(t: Topology, path) -> None:
    Path(path).write_text(format_edge_list(t))
