"""Gene packets: creation, pasting, alteration, mask decay and forwarding choice."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .addressing import Address, NetworkParams, ParameterError

MAX_GENE_BYTES = 64


class ProtocolError(ValueError):
    """Raised when a gene does not fit the address it is applied to."""


@dataclass(frozen=True)
class Gene:
    positions: tuple[int, ...]
    digits: tuple[int, ...]
    mask: tuple[bool, ...]
    origin: int = -1

    def __post_init__(self):
        if not (len(self.positions) == len(self.digits) == len(self.mask)):
            raise ProtocolError("positions, digits and mask must have equal length")
        if len(set(self.positions)) != len(self.positions):
            raise ProtocolError("gene positions must be distinct")

    @property
    def segments(self) -> tuple[tuple[int, int], ...]:
        return tuple(zip(self.positions, self.digits))

    @property
    def active_segments(self) -> tuple[tuple[int, int], ...]:
        return tuple((p, d) for p, d, m in zip(self.positions, self.digits, self.mask) if m)

    @property
    def active_count(self) -> int:
        return sum(self.mask)

    def __len__(self) -> int:
        return len(self.positions)

    def __str__(self) -> str:
        return format_gene(self)


def gene_size_bytes(params: NetworkParams, length: int | None = None) -> int:
    """Wire size: header plus ``digit + position + mask`` bits per segment, rounded up."""
    length = params.gene_length if length is None else length
    bits = length * (params.digit_bits + params.position_bits + 1)
    return params.gene_header_bytes + math.ceil(bits / 8)


def check_gene_size(params: NetworkParams) -> int:
    size = gene_size_bytes(params)
    if size > MAX_GENE_BYTES:
        raise ParameterError(f"gene of {size} bytes exceeds the {MAX_GENE_BYTES}-byte bound")
    return size


@dataclass(frozen=True)
class NodePolicy:
    """Per-node knobs on how much a node influences, and is influenced by, others.

    ``pass_through_bias`` maps an ordered neighbour pair ``(x, y)`` to a
    multiplier on the probability of relaying a gene received from ``x``
    on to ``y``; missing pairs use 1.
    """

    production_rate: float | None = None
    application_probability: float = 1.0
    pass_through_bias: dict[tuple[int, int], float] = field(default_factory=dict)
    permanent: bool = False

    def __post_init__(self):
        if not 0.0 <= self.application_probability <= 1.0:
            raise ParameterError("application_probability must be in [0, 1]")
        if self.production_rate is not None and self.production_rate < 0:
            raise ParameterError("production_rate must be non-negative")
        for pair, bias in self.pass_through_bias.items():
            if not 0.0 <= bias <= 1.0:
                raise ParameterError(f"pass_through_bias for {pair} must be in [0, 1]")

    def bias(self, x: int, y: int) -> float:
        return self.pass_through_bias.get((x, y), 1.0)


DEFAULT_POLICY = NodePolicy()


def generate_gene(a: Address, params: NetworkParams, rng: np.random.Generator,
                  origin: int = -1) -> Gene:
    if params.gene_length > len(a):
        raise ParameterError("gene_length exceeds address_length")
    positions = rng.choice(len(a), size=params.gene_length, replace=False)
    positions = tuple(int(p) for p in positions)
    return Gene(positions, tuple(a.digits[p] for p in positions),
                (True,) * len(positions), origin)


def apply_gene(a: Address, g: Gene) -> Address:
    """Paste the active segments of ``g`` onto ``a``."""
    digits = list(a.digits)
    for p, d in g.active_segments:
        if not 0 <= p < len(digits):
            raise ProtocolError(f"gene position {p} outside address of length {len(digits)}")
        if not 0 <= d < a.base:
            raise ProtocolError(f"gene digit {d} outside base {a.base}")
        digits[p] = d
    return Address(tuple(digits), a.base)


def decay_mask(g: Gene, rng: np.random.Generator) -> Gene:
    """Pick one mask bit uniformly and make it passive (no-op if already passive)."""
    i = int(rng.integers(len(g.mask)))
    if not g.mask[i]:
        return g
    mask = list(g.mask)
    mask[i] = False
    return replace(g, mask=tuple(mask))


def is_exhausted(g: Gene) -> bool:
    return not any(g.mask)


def alter_gene(g: Gene, a: Address) -> Gene:
    """Overwrite every segment's digit with ``a``'s digit at that position."""
    return replace(g, digits=tuple(a.digits[p] for p in g.positions))


@dataclass(frozen=True)
class Decision:
    """Either send the altered gene back (``target is None``) or relay it unchanged."""

    target: int | None = None

    @property
    def send_back(self) -> bool:
        return self.target is None


SEND_BACK = Decision()


def distribution_decision(params: NetworkParams, policy: NodePolicy, from_neighbor: int,
                          other_neighbors: Sequence[int], rng: np.random.Generator) -> Decision:
    """Choose between returning the gene and relaying it to another neighbour.

    The relay candidate is drawn uniformly first so the per-pair bias can
    scale the relay probability for that specific pair.
    """
    if not other_neighbors:
        return SEND_BACK
    target = other_neighbors[int(rng.integers(len(other_neighbors)))]
    p = params.distribution_percentile * policy.bias(from_neighbor, target)
    if rng.random() < p:
        return Decision(int(target))
    return SEND_BACK


def format_gene(g: Gene) -> str:
    body = " ".join(f"{p}:{d}:{int(m)}" for p, d, m in zip(g.positions, g.digits, g.mask))
    return f"{g.origin} [{body}]"


def parse_gene(text: str) -> Gene:
    origin, _, rest = text.strip().partition(" ")
    body = rest.strip().lstrip("[").rstrip("]").split()
    triples = [tuple(int(x) for x in item.split(":")) for item in body]
    return Gene(tuple(t[0] for t in triples), tuple(t[1] for t in triples),
                tuple(bool(t[2]) for t in triples), int(origin))
