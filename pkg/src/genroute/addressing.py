"""Variable addresses and the similarity metric used for forwarding.

An address is a fixed-length digit sequence in a network-wide base.  Two
addresses are compared position by position: their similarity is the number of
positions holding the same digit, which is the size of the intersection of the
two addresses seen as sets of ``(position, digit)`` pairs.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

_DIGIT_CHARS = string.digits + string.ascii_lowercase


class ParameterError(ValueError):
    """Raised when network parameters or address shapes are inconsistent."""


@dataclass(frozen=True)
class NetworkParams:
    """Network-wide protocol parameters.

    ``genes_per_node`` may be fractional; a node then receives the integer part
    plus one extra gene with probability equal to the fractional part, so the
    network average matches the requested value.
    """

    base: int = 16
    address_length: int = 50
    gene_length: int = 1
    distribution_percentile: float = 0.5
    genes_per_node: float = 3.0
    gene_header_bytes: int = 0

    def __post_init__(self):
        if self.base < 2:
            raise ParameterError(f"base must be >= 2, got {self.base}")
        if self.address_length < 1:
            raise ParameterError(f"address_length must be >= 1, got {self.address_length}")
        if not 1 <= self.gene_length <= self.address_length:
            raise ParameterError(
                f"gene_length must be in [1, address_length={self.address_length}], "
                f"got {self.gene_length}"
            )
        if not 0.0 <= self.distribution_percentile <= 1.0:
            raise ParameterError("distribution_percentile must be in [0, 1]")
        if self.genes_per_node < 0:
            raise ParameterError("genes_per_node must be non-negative")
        if self.gene_header_bytes < 0:
            raise ParameterError("gene_header_bytes must be non-negative")

    @property
    def digit_bits(self) -> int:
        return max(1, math.ceil(math.log2(self.base)))

    @property
    def position_bits(self) -> int:
        return max(1, math.ceil(math.log2(self.address_length)))

    def replace(self, **changes) -> "NetworkParams":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return NetworkParams(**values)


@dataclass(frozen=True)
class Address:
    """An immutable digit sequence with its base."""

    digits: tuple[int, ...]
    base: int = field(default=16)

    def __post_init__(self):
        digits = tuple(int(d) for d in self.digits)
        object.__setattr__(self, "digits", digits)
        if not digits:
            raise ParameterError("an address needs at least one digit")
        if self.base < 2:
            raise ParameterError(f"base must be >= 2, got {self.base}")
        for d in digits:
            if not 0 <= d < self.base:
                raise ParameterError(f"digit {d} outside [0, {self.base - 1}]")

    def __len__(self) -> int:
        return len(self.digits)

    def __getitem__(self, position: int) -> int:
        return self.digits[position]

    def __str__(self) -> str:
        return to_digit_string(self)

    @classmethod
    def from_array(cls, values: Iterable[int], base: int) -> "Address":
        return cls(tuple(int(v) for v in values), base)

    def to_array(self) -> np.ndarray:
        return np.asarray(self.digits, dtype=np.int16)

    def check(self, params: NetworkParams) -> None:
        if len(self.digits) != params.address_length or self.base != params.base:
            raise ParameterError(
                f"address of length {len(self.digits)} in base {self.base} does not "
                f"match params (length {params.address_length}, base {params.base})"
            )


AddressRelation = frozenset  # frozenset[tuple[int, int]]


def as_relation(a: Address) -> frozenset[tuple[int, int]]:
    """Return the address as the set of its ``(position, digit)`` pairs."""
    return frozenset(enumerate(a.digits))


def from_relation(pairs: Iterable[tuple[int, int]], base: int) -> Address:
    """Rebuild an address from a relation holding exactly one pair per position."""
    pairs = sorted(pairs)
    positions = [p for p, _ in pairs]
    if positions != list(range(len(pairs))):
        raise ParameterError("relation must hold exactly one digit for every position")
    return Address(tuple(d for _, d in pairs), base)


def _check_same_shape(a: Address, b: Address) -> None:
    if len(a.digits) != len(b.digits) or a.base != b.base:
        raise ParameterError(
            f"cannot compare addresses of shape ({len(a.digits)}, base {a.base}) "
            f"and ({len(b.digits)}, base {b.base})"
        )


def eval_similarity(a: Address, b: Address) -> int:
    """Number of positions at which ``a`` and ``b`` hold the same digit."""
    _check_same_shape(a, b)
    return sum(x == y for x, y in zip(a.digits, b.digits))


def address_distance(a: Address, b: Address) -> int:
    """Positions that differ; the per-packet price / progress estimate."""
    return len(a.digits) - eval_similarity(a, b)


def random_address(params: NetworkParams, rng: np.random.Generator) -> Address:
    digits = rng.integers(0, params.base, size=params.address_length)
    return Address.from_array(digits, params.base)


def random_address_matrix(n: int, params: NetworkParams, rng: np.random.Generator) -> np.ndarray:
    """``n`` random addresses as rows of an integer matrix."""
    return rng.integers(0, params.base, size=(n, params.address_length)).astype(np.int16)


def similarity_matrix(addresses: np.ndarray) -> np.ndarray:
    """Pairwise similarity of the rows of an address matrix."""
    addresses = np.asarray(addresses)
    return (addresses[:, None, :] == addresses[None, :, :]).sum(axis=2)


def to_digit_string(a: Address) -> str:
    """Serialize as one character per digit for bases up to 36, else dotted integers."""
    if a.base <= len(_DIGIT_CHARS):
        return "".join(_DIGIT_CHARS[d] for d in a.digits)
    return ".".join(str(d) for d in a.digits)


def from_digit_string(text: str, base: int) -> Address:
    text = text.strip()
    if base <= len(_DIGIT_CHARS):
        try:
            digits = tuple(_DIGIT_CHARS.index(ch) for ch in text.lower())
        except ValueError as exc:
            raise ParameterError(f"invalid digit string {text!r}") from exc
    else:
        digits = tuple(int(part) for part in text.split("."))
    return Address(digits, base)


def addresses_from_matrix(matrix: np.ndarray, base: int) -> list[Address]:
    return [Address.from_array(row, base) for row in np.asarray(matrix)]


def addresses_to_matrix(addresses: Sequence[Address]) -> np.ndarray:
    return np.array([a.digits for a in addresses], dtype=np.int16)
