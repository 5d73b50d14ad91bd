"""Greedy similarity forwarding and the response to a failed link."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .addressing import Address, NetworkParams, addresses_from_matrix, eval_similarity
from .genes import Gene
from .topology import Topology, TopologyError, network_width


class Outcome(enum.Enum):
    DELIVERED = "delivered"
    DELIVERED_TO_MOST_SIMILAR = "delivered_to_most_similar"
    DROPPED = "dropped"


DELIVER = "deliver"
STUCK = "stuck"


@dataclass
class Packet:
    destination_address: Address
    ttl: int
    epoch_age: int = 0
    size_bytes: int = 512
    visited: set | None = None

    def __post_init__(self):
        if self.visited is None:
            self.visited = set()


@dataclass(frozen=True)
class RouteResult:
    outcome: Outcome
    path: tuple[int, ...]
    final: int

    @property
    def hops(self) -> int:
        return len(self.path) - 1

    @property
    def reached(self) -> bool:
        return self.outcome is not Outcome.DROPPED


def next_hop(own_address: Address, dest: Address, neighbor_addresses: Mapping[int, Address],
             visited: Iterable[int]):
    """Forwarding decision at one node.

    Returns ``DELIVER`` when the node itself carries ``dest``, ``STUCK`` when
    every neighbour has already been visited, otherwise the unvisited
    neighbour most similar to ``dest`` (smallest id on ties).
    """
    if own_address == dest:
        return DELIVER
    visited = set(visited)
    best, best_score = None, -1
    for node in sorted(neighbor_addresses):
        if node in visited:
            continue
        score = eval_similarity(neighbor_addresses[node], dest)
        if score > best_score:
            best, best_score = node, score
    return STUCK if best is None else best


def greedy_walk(src: int, candidates: Callable[[int], Iterable[int]],
                score: Callable[[int], int], is_destination: Callable[[int], bool],
                ttl: int) -> RouteResult:
    """Shared forwarding loop; ``candidates`` must yield neighbours in id order."""
    path = [src]
    visited = {src}
    current = src
    while True:
        if is_destination(current):
            return RouteResult(Outcome.DELIVERED, tuple(path), current)
        best, best_score = None, -1
        for node in candidates(current):
            if node in visited:
                continue
            s = score(node)
            if s > best_score:
                best, best_score = node, s
        if best is None:
            final = max(path, key=lambda x: (score(x), -path.index(x)))
            return RouteResult(Outcome.DELIVERED_TO_MOST_SIMILAR, tuple(path), final)
        if ttl <= 0:
            return RouteResult(Outcome.DROPPED, tuple(path), current)
        ttl -= 1
        current = best
        visited.add(current)
        path.append(current)


def default_ttl(t: Topology) -> int:
    return 4 * max(1, network_width(t).diameter_hops)


def _as_matrix(addresses) -> np.ndarray:
    if isinstance(addresses, np.ndarray):
        return addresses
    return np.array([a.digits for a in addresses], dtype=np.int16)


def route_packet(t: Topology, addresses, src: int, dst: int, ttl: int | None = None) -> RouteResult:
    """Route from ``src`` toward the current address of ``dst``."""
    A = _as_matrix(addresses)
    return route_to_address(t, A, src, A[dst], ttl)


def route_to_address(t: Topology, addresses, src: int, dest_digits, ttl: int | None = None) -> RouteResult:
    n = t.node_count
    if not 0 <= src < n:
        raise TopologyError(f"unknown node {src}")
    A = _as_matrix(addresses)
    dest_digits = np.asarray(getattr(dest_digits, "digits", dest_digits))
    if ttl is None:
        ttl = default_ttl(t)
    sims = (A == dest_digits).sum(axis=1)
    full = A.shape[1]
    return greedy_walk(src, t.neighbors, lambda v: int(sims[v]),
                       lambda v: sims[v] == full, ttl)


@dataclass
class FailureResponse:
    topology: Topology
    addresses: list[Address]
    emissions: list[tuple[int, int, Gene]]  # (sender, receiver, gene)
    changed: dict[int, list[int]]


def handle_link_failure(t: Topology, addresses: Sequence[Address], u: int, v: int,
                        params: NetworkParams, rng: np.random.Generator,
                        fraction: float = 1.0) -> FailureResponse:
    """Remove the similarity two disconnected endpoints share.

    Each endpoint redraws a ``fraction`` of the shared positions to digits
    different from the old shared digit, then emits genes copied from the
    changed positions to each of its remaining neighbours.  Changed positions
    are split into genes of at most ``gene_length`` segments.
    """
    if not t.has_link(u, v):
        raise TopologyError(f"no link between {u} and {v}")
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    cut = t.without_link(u, v)
    A = _as_matrix(addresses).copy()
    shared = np.flatnonzero(A[u] == A[v])
    changed: dict[int, list[int]] = {}
    emissions = []
    for node in (u, v):
        count = int(round(fraction * len(shared)))
        picked = sorted(int(p) for p in rng.choice(shared, size=count, replace=False)) if count else []
        for p in picked:
            old = int(A[node, p])
            new = int(rng.integers(params.base - 1))
            A[node, p] = new if new < old else new + 1
        changed[node] = picked
        for start in range(0, len(picked), params.gene_length):
            chunk = tuple(picked[start:start + params.gene_length])
            for nb in cut.neighbors(node):
                g = Gene(chunk, tuple(int(A[node, p]) for p in chunk), (True,) * len(chunk), node)
                emissions.append((node, nb, g))
    return FailureResponse(cut, addresses_from_matrix(A, params.base), emissions, changed)
