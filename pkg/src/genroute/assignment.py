"""Address assignment from target similarities.

A node ``N`` with already-addressed neighbours ``V_i`` must receive an address
sharing exactly ``k_i`` positions with each ``V_i``.  When the targets fit in
the address (``sum k_i <= address_length``) each neighbour can get its own
segment; otherwise positions where several neighbours agree must be reused.

Nodes of a network are assigned one at a time, each against its already
assigned neighbours only, and never revisited.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import LinearConstraint, Bounds, milp

from .addressing import Address, NetworkParams, eval_similarity, random_address
from .topology import Topology


class AssignmentError(ValueError):
    """The targets of a node cannot be met."""


class InfeasibleTargets(AssignmentError):
    pass


class SaturationError(AssignmentError):
    """Every digit at some position is taken by a neighbour that must not match."""


class Feasibility(enum.Enum):
    TRIVIAL_SEGMENTS = "trivial_segments"
    OVERLAP_REQUIRED = "overlap_required"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class FeasibilityVerdict:
    verdict: Feasibility
    overlap_needed: int
    overlap_available: int

    @property
    def feasible(self) -> bool:
        return self.verdict is not Feasibility.INFEASIBLE


def pairwise_overlap(addresses: Sequence[Address]) -> int:
    """Sum of similarities over unordered pairs of distinct addresses."""
    total = 0
    for i in range(len(addresses)):
        for j in range(i + 1, len(addresses)):
            total += eval_similarity(addresses[i], addresses[j])
    return total


def check_feasibility(neighbor_addresses: Mapping[int, Address], targets: Mapping[int, int],
                      params: NetworkParams) -> FeasibilityVerdict:
    _check_targets(neighbor_addresses, targets, params)
    total = sum(targets.values())
    needed = max(0, total - params.address_length)
    if needed == 0:
        return FeasibilityVerdict(Feasibility.TRIVIAL_SEGMENTS, 0, 0)
    available = pairwise_overlap([neighbor_addresses[i] for i in sorted(targets)])
    verdict = Feasibility.OVERLAP_REQUIRED if available >= needed else Feasibility.INFEASIBLE
    return FeasibilityVerdict(verdict, needed, available)


def pigeonhole_bound(params: NetworkParams, n: int) -> int:
    """Guaranteed total pairwise similarity among ``n`` addresses."""
    return max(0, params.address_length * (n - params.base))


def pigeonhole_sufficient(params: NetworkParams, n: int, targets: Sequence[int]) -> bool:
    return params.address_length * (n - params.base) >= sum(targets) - params.address_length


def _check_targets(neighbor_addresses, targets, params):
    for i, k in targets.items():
        if i not in neighbor_addresses:
            raise AssignmentError(f"target given for unknown neighbour {i}")
        if not 0 <= k <= params.address_length:
            raise AssignmentError(f"target {k} for neighbour {i} outside [0, address_length]")
        neighbor_addresses[i].check(params)


# -- single node ---------------------------------------------------------------

@dataclass
class SingleAssignment:
    address: Address
    exact_solver_used: bool


def _options(V: np.ndarray, base: int):
    """Per position: list of (digit, member mask) for each digit used by a neighbour."""
    m, L = V.shape
    opts = []
    free = []
    for p in range(L):
        col = V[:, p]
        digits = sorted(set(int(d) for d in col))
        opts.append([(d, col == d) for d in digits])
        free.append([d for d in range(base) if d not in digits])
    return opts, free


def _greedy(V, k, opts, free, rng) -> dict[int, int] | None:
    m, L = V.shape
    need = np.array(k, dtype=int)
    chosen: dict[int, int] = {}

    def usable(mask):
        return bool(np.all(need[mask] >= 1))

    # positions with no free digit have to match somebody
    for p in range(L):
        if free[p]:
            continue
        cands = [(int(mask.sum()), d, mask) for d, mask in opts[p] if usable(mask)]
        if not cands:
            return None
        size, d, mask = max(cands, key=lambda c: (c[0], -c[1]))
        chosen[p] = d
        need[mask] -= 1

    # digits shared by several neighbours, largest groups first
    while True:
        best = None
        for p in range(L):
            if p in chosen:
                continue
            for d, mask in opts[p]:
                size = int(mask.sum())
                if size >= 2 and usable(mask) and (best is None or size > best[0]):
                    best = (size, p, d, mask)
        if best is None:
            break
        _, p, d, mask = best
        chosen[p] = d
        need[mask] -= 1

    # one dedicated position per remaining unit of need
    for i in range(m):
        for p in range(L):
            if need[i] == 0:
                break
            if p in chosen:
                continue
            mask = V[:, p] == V[i, p]
            if usable(mask):
                chosen[p] = int(V[i, p])
                need[mask] -= 1
    if np.any(need != 0):
        return None
    for p in range(L):
        if p not in chosen:
            chosen[p] = int(free[p][int(rng.integers(len(free[p])))])
    return chosen


def _exact(V, k, opts, free, rng) -> dict[int, int] | None:
    """Integer program over one option per position; exact counts per neighbour."""
    m, L = V.shape
    var = []  # (position, digit or None)
    for p in range(L):
        for d, _ in opts[p]:
            var.append((p, d))
        if free[p]:
            var.append((p, None))
    nv = len(var)
    pos_rows = np.zeros((L, nv))
    nb_rows = np.zeros((m, nv))
    for j, (p, d) in enumerate(var):
        pos_rows[p, j] = 1
        if d is not None:
            nb_rows[:, j] = V[:, p] == d
    cons = [LinearConstraint(pos_rows, 1, 1), LinearConstraint(nb_rows, k, k)]
    res = milp(rng.random(nv), constraints=cons, integrality=np.ones(nv),
               bounds=Bounds(0, 1))
    if res.status != 0:
        return None
    chosen = {}
    for j, (p, d) in enumerate(var):
        if res.x[j] > 0.5:
            chosen[p] = int(free[p][int(rng.integers(len(free[p])))]) if d is None else d
    return chosen


def solve_single(neighbor_addresses: Mapping[int, Address], targets: Mapping[int, int],
                 params: NetworkParams, rng: np.random.Generator) -> SingleAssignment:
    """Like :func:`assign_single` but also reports whether the exact solver was needed."""
    verdict = check_feasibility(neighbor_addresses, targets, params)
    if not verdict.feasible:
        raise InfeasibleTargets(
            f"targets need {verdict.overlap_needed} shared positions, "
            f"neighbours only offer {verdict.overlap_available}")
    order = sorted(targets)
    if not order:
        return SingleAssignment(random_address(params, rng), False)
    V = np.array([neighbor_addresses[i].digits for i in order], dtype=int)
    k = [targets[i] for i in order]
    opts, free = _options(V, params.base)
    chosen = _greedy(V, k, opts, free, rng)
    exact = chosen is None
    if exact:
        chosen = _exact(V, k, opts, free, rng)
    if chosen is None:
        if any(not f for f in free):
            raise SaturationError("some position has no digit matching only permitted neighbours")
        raise InfeasibleTargets("no address meets the targets exactly")
    address = Address(tuple(chosen[p] for p in range(params.address_length)), params.base)
    for i in order:
        if eval_similarity(address, neighbor_addresses[i]) != targets[i]:
            raise AssertionError(f"assignment violates target for neighbour {i}")
    return SingleAssignment(address, exact)


def assign_single(neighbor_addresses: Mapping[int, Address], targets: Mapping[int, int],
                  params: NetworkParams, rng: np.random.Generator) -> Address:
    """Address sharing exactly ``targets[i]`` positions with each neighbour ``i``."""
    return solve_single(neighbor_addresses, targets, params, rng).address


# -- whole network -------------------------------------------------------------

@dataclass
class NetworkAssignment:
    addresses: list[Address]
    order: list[int]
    attempts: int
    exact_solver_calls: int = 0

    @property
    def backtracks(self) -> int:
        return self.attempts - len(self.order)


def _edge(u, v):
    return (u, v) if u < v else (v, u)


def assign_network(t: Topology, edge_targets: Mapping[tuple[int, int], int], params: NetworkParams,
                   rng: np.random.Generator, ordering: Sequence[int] | None = None) -> NetworkAssignment:
    """Assign every node in ``ordering`` against its already assigned neighbours."""
    targets = {_edge(u, v): k for (u, v), k in edge_targets.items()}
    missing = [e for e in t.links if e not in targets]
    if missing:
        raise AssignmentError(f"no target for links {missing}")
    ordering = list(range(t.node_count)) if ordering is None else list(ordering)
    if sorted(ordering) != list(range(t.node_count)):
        raise AssignmentError("ordering must be a permutation of the nodes")
    assigned: dict[int, Address] = {}
    attempts = exact_calls = 0
    for position, node in enumerate(ordering):
        if node in assigned:
            raise AssertionError("node revisited")
        nbrs = {v: assigned[v] for v in t.neighbors(node) if v in assigned}
        k = {v: targets[_edge(node, v)] for v in nbrs}
        attempts += 1
        try:
            result = solve_single(nbrs, k, params, rng)
        except AssignmentError as exc:
            raise AssignmentError(f"node {node} (ordering position {position}): {exc}") from exc
        exact_calls += result.exact_solver_used
        assigned[node] = result.address
    return NetworkAssignment([assigned[i] for i in range(t.node_count)], ordering, attempts,
                             exact_calls)


def parse_targets(text: str) -> tuple[Topology, dict[tuple[int, int], int]]:
    """Targets file: node count, then ``u v k [bandwidth]`` lines."""
    n = None
    links, targets = [], {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if n is None:
                n = int(parts[0])
                continue
            u, v, k = int(parts[0]), int(parts[1]), int(parts[2])
        except (ValueError, IndexError) as exc:
            raise AssignmentError(f"line {lineno}: cannot parse {raw!r}") from exc
        links.append((u, v))
        targets[_edge(u, v)] = k
    if n is None:
        raise AssignmentError("targets file is empty")
    return Topology.from_edges(n, links), targets
