"""Mobile networks: periodic re-convergence, address histories and aged packets.

Every epoch the whole network converges afresh on its current topology.
Nodes keep the addresses of the last ``K`` epochs, their own and their
neighbours', so a packet addressed with an address ``K' < K`` epochs old can
still be forwarded over nodes that have not changed region since.  A node that
changed region registers with its old neighbours, which redirect packets
carrying one of its old addresses.

A node has changed region when its neighbour set differs between two epoch
closes.  Epoch transitions are atomic here: packets routed before
:func:`advance_epoch` returns use the previous epoch's addresses.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .addressing import Address, NetworkParams, eval_similarity, random_address_matrix
from .engine import SimConfig, run_convergence
from .genes import DEFAULT_POLICY, NodePolicy
from .routing import Outcome, Packet, RouteResult, greedy_walk, route_to_address
from .topology import Link, Topology, DEFAULT_BANDWIDTH, geometric_links


class StaleAddress(LookupError):
    """The packet's address is older than the retained history."""


class BootstrapError(ValueError):
    pass


# -- mobility ------------------------------------------------------------------

@dataclass
class MobilityModel:
    """Random waypoint in the unit square.

    Each node walks in a straight line to a uniformly drawn waypoint at a
    speed drawn from ``speed_range``, pauses ``pause`` seconds, then repeats.
    """

    positions: np.ndarray
    radius: float
    speed_range: tuple[float, float] = (0.005, 0.02)
    pause: float = 1.0
    seed: int = 0
    bandwidth: float = DEFAULT_BANDWIDTH
    kind: str = "random-waypoint"
    time: float = 0.0

    def __post_init__(self):
        if self.kind != "random-waypoint":
            raise ValueError(f"unsupported mobility model {self.kind!r}")
        lo, hi = self.speed_range
        if not 0 < lo <= hi:
            raise ValueError("speed range must satisfy 0 < min <= max")
        if self.pause < 0:
            raise ValueError("pause must be non-negative")
        self.positions = np.array(self.positions, dtype=float)
        n = len(self.positions)
        self._rng = np.random.default_rng([self.seed, 0x30B])
        self._targets = self._rng.random((n, 2))
        self._speeds = self._rng.uniform(lo, hi, n)
        self._waiting = np.zeros(n)

    @classmethod
    def for_topology(cls, t: Topology, radius: float, **kwargs) -> "MobilityModel":
        if t.positions is None:
            raise ValueError("topology has no node positions")
        return cls(np.asarray(t.positions), radius, **kwargs)

    def step(self, dt: float) -> None:
        if dt < 0:
            raise ValueError("dt must be non-negative")
        lo, hi = self.speed_range
        for i in range(len(self.positions)):
            left = dt
            while left > 0:
                if self._waiting[i] > 0:
                    w = min(left, self._waiting[i])
                    self._waiting[i] -= w
                    left -= w
                    continue
                gap = self._targets[i] - self.positions[i]
                dist = float(np.hypot(*gap))
                reach = self._speeds[i] * left
                if reach < dist:
                    self.positions[i] += gap * (reach / dist)
                    left = 0
                else:
                    self.positions[i] = self._targets[i]
                    left -= dist / self._speeds[i]
                    self._waiting[i] = self.pause
                    self._targets[i] = self._rng.random(2)
                    self._speeds[i] = self._rng.uniform(lo, hi)
        np.clip(self.positions, 0.0, 1.0, out=self.positions)
        self.time += dt

    def topology(self) -> Topology:
        return Topology(len(self.positions), geometric_links(self.positions, self.radius, self.bandwidth),
                        self.positions.copy())


# -- epoch state ---------------------------------------------------------------

@dataclass(frozen=True)
class EpochRecord:
    """What one node knew at the close of one epoch."""

    epoch: int
    address: Address
    neighbors: Mapping[int, Address]


@dataclass(frozen=True)
class RegistrationRecord:
    holder: int
    mover: int
    old_address: Address
    new_address: Address
    epoch_registered: int


@dataclass(frozen=True)
class EpochState:
    epoch_index: int
    depth: int                                   # K
    topology: Topology
    addresses: tuple[Address, ...]
    history: tuple[tuple[EpochRecord, ...], ...]  # per node, oldest first, at most K
    last_moved: tuple[int | None, ...]           # latest epoch whose close saw a region change
    registrations: tuple[RegistrationRecord, ...] = ()
    permanent: frozenset = frozenset()
    convergence_times: tuple[float, ...] = ()

    def record(self, node: int, epoch: int) -> EpochRecord:
        for rec in self.history[node]:
            if rec.epoch == epoch:
                return rec
        raise StaleAddress(f"node {node} keeps no record of epoch {epoch}")

    def address_at(self, node: int, epoch: int) -> Address:
        return self.record(node, epoch).address

    def static_since(self, node: int, epoch: int) -> bool:
        m = self.last_moved[node]
        return m is None or m <= epoch

    @property
    def default_period(self) -> float:
        """Three times the convergence time of epoch 0."""
        return 3.0 * self.convergence_times[0] if self.convergence_times else 0.0


def permanent_address_mode(nodes: Iterable[int], n: int,
                           base_policy: NodePolicy = DEFAULT_POLICY) -> dict[int, NodePolicy]:
    """Policies that freeze the addresses of ``nodes`` (gateways, masters)."""
    frozen = replace(base_policy, permanent=True)
    out = {}
    for i in nodes:
        if not 0 <= i < n:
            raise ValueError(f"unknown node {i}")
        out[i] = frozen
    return out


def _epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


def converge_components(t: Topology, params: NetworkParams, policies, seed: int,
                        config: SimConfig | None, initial: np.ndarray) -> tuple[np.ndarray, float]:
    """Run convergence separately on each connected component.

    Isolated nodes keep their starting address.  Returns the final digit
    matrix and the longest convergence time.
    """
    final = initial.copy()
    ct = 0.0
    if t.is_connected():
        res = run_convergence(t, params, policies, seed, config, initial)
        return np.array([a.digits for a in res.addresses], dtype=np.int16), res.metrics.convergence_time_s
    for k, comp in enumerate(t.components()):
        if len(comp) < 2:
            continue
        index = {v: i for i, v in enumerate(comp)}
        links = {(index[u], index[v]): l for (u, v), l in t.links.items() if u in index}
        sub = Topology(len(comp), links)
        sub_pol = [policies[v] for v in comp]
        res = run_convergence(sub, params, sub_pol, _epoch_seed(seed, 1000 + k), config, initial[comp])
        final[comp] = np.array([a.digits for a in res.addresses], dtype=np.int16)
        ct = max(ct, res.metrics.convergence_time_s)
    return final, ct


def _records(t: Topology, A: Sequence[Address], epoch: int) -> list[EpochRecord]:
    return [EpochRecord(epoch, A[v], MappingProxyType({w: A[w] for w in t.neighbors(v)}))
            for v in range(t.node_count)]


def start_epochs(t: Topology, params: NetworkParams, depth: int, seed: int = 0,
                 permanent: Iterable[int] = (), policies=None,
                 config: SimConfig | None = None) -> EpochState:
    """Epoch 0: converge from random addresses."""
    if depth < 1:
        raise ValueError("history depth K must be at least 1")
    permanent = frozenset(permanent)
    pol = _policies(t.node_count, policies, permanent)
    initial = random_address_matrix(t.node_count, params, np.random.default_rng([seed, 0x0E, 0]))
    final, ct = converge_components(t, params, pol, _epoch_seed(seed, 0), config, initial)
    A = tuple(Address.from_array(r, params.base) for r in final)
    history = tuple((rec,) for rec in _records(t, A, 0))
    return EpochState(0, depth, t, A, history, (None,) * t.node_count, (), permanent, (ct,))


def _policies(n, policies, permanent):
    if policies is None:
        base = [DEFAULT_POLICY] * n
    elif isinstance(policies, Mapping):
        base = [policies.get(i, DEFAULT_POLICY) for i in range(n)]
    else:
        base = list(policies)
    return [replace(p, permanent=True) if i in permanent else p for i, p in enumerate(base)]


def advance_epoch(state: EpochState, t: Topology, params: NetworkParams, seed: int = 0,
                  policies=None, config: SimConfig | None = None) -> EpochState:
    """Close the current epoch and converge on the current topology.

    Permanent nodes keep their address; every other node starts again from
    a random one.  Nodes whose neighbour set changed register with their old
    neighbours.
    """
    if t.node_count != state.topology.node_count:
        raise ValueError("node count changed between epochs")
    e = state.epoch_index + 1
    pol = _policies(t.node_count, policies, state.permanent)
    initial = random_address_matrix(t.node_count, params, np.random.default_rng([seed, 0x0E, e]))
    for v in state.permanent:
        initial[v] = state.addresses[v].digits
    final, ct = converge_components(t, params, pol, _epoch_seed(seed, e), config, initial)
    A = tuple(Address.from_array(r, params.base) for r in final)

    movers = [v for v in range(t.node_count)
              if set(t.neighbors(v)) != set(state.topology.neighbors(v))]
    last_moved = list(state.last_moved)
    for v in movers:
        last_moved[v] = e
    new_recs = _records(t, A, e)
    history = tuple((state.history[v] + (new_recs[v],))[-state.depth:] for v in range(t.node_count))

    # movers refresh their records every epoch so lookups return current addresses
    regs = [replace(r, new_address=A[r.mover]) for r in state.registrations
            if e - r.epoch_registered < 2 * state.depth]
    nxt = EpochState(e, state.depth, t, A, history, tuple(last_moved), tuple(regs),
                     state.permanent, state.convergence_times + (ct,))
    for v in movers:
        nxt = register_move(v, state.history[v], nxt)
    return nxt


def register_move(mover: int, old_records: Sequence[EpochRecord], state: EpochState) -> EpochState:
    """Leave a redirect at every node that neighboured ``mover`` in ``old_records``."""
    regs = list(state.registrations)
    new = state.addresses[mover]
    for rec in old_records:
        for holder in rec.neighbors:
            regs.append(RegistrationRecord(holder, mover, rec.address, new, state.epoch_index))
    return replace(state, registrations=tuple(regs))


def lookup_registration(state: EpochState, holder: int, old_address: Address) -> Address | None:
    """New address registered at ``holder`` for ``old_address``, or None.

    Raises StaleAddress when the only matching records are older than K epochs.
    """
    expired = False
    for r in reversed(state.registrations):
        if r.holder == holder and r.old_address == old_address:
            if state.epoch_index - r.epoch_registered >= state.depth:
                expired = True
                continue
            return state.addresses[r.mover]
    if expired:
        raise StaleAddress(f"registration for {old_address} at node {holder} has expired")
    return None


def bootstrap_address(neighbor_addresses: Sequence[Address], params: NetworkParams,
                      rng: np.random.Generator) -> Address:
    """Address for a joining node: each digit copied from a random neighbour."""
    if not neighbor_addresses:
        raise BootstrapError("no neighbours to copy from; wait for the next epoch")
    V = np.array([a.digits for a in neighbor_addresses], dtype=int)
    pick = rng.integers(len(V), size=params.address_length)
    return Address.from_array(V[pick, np.arange(params.address_length)], params.base)


# -- aged routing --------------------------------------------------------------

class AgedOutcome(enum.Enum):
    DELIVERED = "delivered"
    DELIVERED_TO_MOST_SIMILAR = "delivered_to_most_similar"
    DROPPED = "dropped"
    UNDELIVERABLE_STALE = "undeliverable_stale"


@dataclass(frozen=True)
class AgedRouteResult:
    outcome: AgedOutcome
    scenario: int                   # 1 unmoved destination, 2 redirected
    path: tuple[int, ...]           # walk on old addresses
    final: int
    current_address: Address | None  # returned to the sender on delivery or redirect
    reissued: RouteResult | None = None


_PLAIN = {Outcome.DELIVERED: AgedOutcome.DELIVERED,
          Outcome.DELIVERED_TO_MOST_SIMILAR: AgedOutcome.DELIVERED_TO_MOST_SIMILAR,
          Outcome.DROPPED: AgedOutcome.DROPPED}


def route_aged(state: EpochState, t: Topology, src: int, packet: Packet) -> AgedRouteResult:
    """Forward a packet whose destination address is ``packet.epoch_age`` epochs old.

    Only neighbours that have not changed region since that epoch take part,
    compared by their addresses of that epoch.  A node holding a registration
    for the address redirects: the sender reissues with the current address.
    """
    age = packet.epoch_age
    if age < 0:
        raise ValueError("epoch_age must be non-negative")
    if age >= state.depth:
        raise StaleAddress(f"address is {age} epochs old; only {state.depth} are kept")
    then = state.epoch_index - age
    if then < 0:
        raise StaleAddress(f"epoch {then} precedes the first epoch")
    dest = packet.destination_address
    dd = np.asarray(dest.digits)
    old = np.array([state.address_at(v, then).digits for v in range(t.node_count)])
    sims = (old == dd).sum(axis=1)
    full = len(dd)
    static = [state.static_since(v, then) for v in range(t.node_count)]
    redirect: dict[int, Address] = {}

    def candidates(v):
        return [w for w in t.neighbors(v) if static[w]]

    def arrived(v):
        if sims[v] == full:
            return True
        new = lookup_registration(state, v, dest)
        if new is not None:
            redirect[v] = new
            return True
        return False

    walk = greedy_walk(src, candidates, lambda v: int(sims[v]), arrived, packet.ttl)
    end = walk.path[-1]
    if walk.outcome is Outcome.DELIVERED:
        if end in redirect:
            again = route_to_address(t, np.array([a.digits for a in state.addresses]), src,
                                     redirect[end], packet.ttl)
            return AgedRouteResult(_PLAIN[again.outcome], 2, walk.path, again.final,
                                   redirect[end], again)
        return AgedRouteResult(AgedOutcome.DELIVERED, 1, walk.path, end, state.addresses[end])
    if walk.outcome is Outcome.DELIVERED_TO_MOST_SIMILAR:
        visited = set(walk.path)
        moved_only = [w for w in t.neighbors(end) if w not in visited and not static[w]]
        if moved_only:
            return AgedRouteResult(AgedOutcome.UNDELIVERABLE_STALE, 1, walk.path, end, None)
    return AgedRouteResult(_PLAIN[walk.outcome], 1, walk.path, walk.final, None)


def aged_packet(state: EpochState, dst: int, epoch_age: int, ttl: int) -> Packet:
    """Packet carrying ``dst``'s address from ``epoch_age`` epochs ago."""
    if epoch_age >= state.depth:
        raise StaleAddress(f"address is {epoch_age} epochs old; only {state.depth} are kept")
    return Packet(state.address_at(dst, state.epoch_index - epoch_age), ttl, epoch_age)
