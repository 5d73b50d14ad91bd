"""Closed-form estimates of gene lifetime and similarity, and their simulations.

The closed forms are implemented verbatim.  The ``simulate_*`` functions run
the actual gene operations so that each formula can be compared against the
protocol it is meant to describe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .addressing import Address, NetworkParams, random_address_matrix
from .genes import alter_gene, apply_gene, decay_mask, generate_gene, is_exhausted
from .topology import FlowDecomposition, Topology, max_flow_decomposition


class DomainError(ValueError):
    pass


def gene_activity(gl: int, log_base: float | None = None) -> float:
    """Reciprocations of a gene of length ``gl``: ``gl + log(1 / (1 - 1/gl))``.

    Natural logarithm unless ``log_base`` is given.  Undefined for ``gl <= 1``,
    where the logarithm's argument is infinite.
    """
    if gl <= 1:
        raise DomainError("gene_activity needs gl >= 2; the log term diverges at gl = 1")
    value = math.log(1.0 / (1.0 - 1.0 / gl))
    if log_base is not None:
        value /= math.log(log_base)
    return gl + value


def similarity_after_exchange(s1: float, gl: int, al: int) -> float:
    """Similarity after one exchange of a length-``gl`` gene, starting from ``s1``."""
    if not 1 <= gl <= al:
        raise DomainError(f"need 1 <= gl <= al, got gl={gl}, al={al}")
    if not 0 <= s1 <= al:
        raise DomainError(f"need 0 <= s1 <= al, got s1={s1}")
    q = 1.0 - 1.0 / al
    return sum(q ** i for i in range(gl - 1)) + s1 * q ** (gl - 1)


def initial_similarity(params: NetworkParams) -> float:
    return params.address_length / params.base


@dataclass(frozen=True)
class FlowEvalPrediction:
    pair: tuple[int, int]
    predicted_eval: float
    kappa: float
    delta: float
    segments: FlowDecomposition


def predict_eval_flow(t: Topology, i: int, j: int, kappa: float = 1.0,
                      capacity_source: str = "bandwidth") -> FlowEvalPrediction:
    """Similarity estimate from max-flow segments, each damped by ``delta ** hops``."""
    if kappa <= 0:
        raise DomainError("kappa must be positive")
    if i == j:
        raise DomainError("prediction needs two distinct nodes")
    t.require_connected()
    flow = max_flow_decomposition(t, i, j, capacity_source)
    delta = t.mean_degree
    value = sum(lam / (kappa * delta ** hops) for lam, hops in flow.segments)
    return FlowEvalPrediction((i, j), value, kappa, delta, flow)


@dataclass(frozen=True)
class KappaFit:
    kappa: float
    residual: float  # root mean square of observed - predicted / kappa


def fit_kappa(predictions_unit_kappa, observed_evals) -> KappaFit:
    """Least-squares ``kappa`` such that ``prediction / kappa`` fits the observations."""
    p = np.asarray(predictions_unit_kappa, dtype=float)
    o = np.asarray(observed_evals, dtype=float)
    if p.shape != o.shape or p.size == 0:
        raise DomainError("predictions and observations must be equal-length and non-empty")
    if not np.any(p):
        raise DomainError("at least one prediction must be non-zero")
    if not np.any(o):
        raise DomainError("all observations are zero; kappa is undetermined")
    cross = float(p @ o)
    if cross <= 0:
        raise DomainError("predictions and observations are not positively related")
    kappa = float(p @ p) / cross
    residual = float(np.sqrt(np.mean((o - p / kappa) ** 2)))
    return KappaFit(kappa, residual)


# -- simulations ---------------------------------------------------------------

def simulate_reciprocations(gl: int, trials: int, seed: int = 0, al: int = 50,
                            base: int = 16) -> np.ndarray:
    """Receptions of one gene bouncing between two nodes until its mask is spent.

    Each reception pastes the gene, decays one mask bit and, unless the gene
    is exhausted, sends the altered gene back.
    """
    params = NetworkParams(base=base, address_length=al, gene_length=gl)
    rng = np.random.default_rng([seed, gl])
    counts = np.empty(trials, dtype=int)
    for k in range(trials):
        a, b = (Address.from_array(row, base) for row in random_address_matrix(2, params, rng))
        nodes = [a, b]
        gene = generate_gene(a, params, rng, origin=0)
        holder = 1
        receptions = 0
        while True:
            receptions += 1
            nodes[holder] = apply_gene(nodes[holder], gene)
            gene = decay_mask(gene, rng)
            if is_exhausted(gene):
                break
            gene = alter_gene(gene, nodes[holder])
            holder = 1 - holder
        counts[k] = receptions
    return counts


def expected_receptions(gl: int) -> float:
    """Mean receptions until every mask bit is passive, ``gl * H(gl)``."""
    return gl * sum(1.0 / i for i in range(1, gl + 1))


def simulate_single_exchange(gl: int, trials: int, seed: int = 0, al: int = 50,
                             base: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Similarity of random address pairs before and after one fresh gene is pasted."""
    params = NetworkParams(base=base, address_length=al, gene_length=gl)
    rng = np.random.default_rng([seed, gl, 7])
    before = np.empty(trials)
    after = np.empty(trials)
    for k in range(trials):
        A = random_address_matrix(2, params, rng)
        before[k] = np.count_nonzero(A[0] == A[1])
        a, b = Address.from_array(A[0], base), Address.from_array(A[1], base)
        b = apply_gene(b, generate_gene(a, params, rng, origin=0))
        after[k] = sum(x == y for x, y in zip(a.digits, b.digits))
    return before, after


def mean_random_similarity(params: NetworkParams, samples: int, seed: int = 0) -> float:
    rng = np.random.default_rng([seed, 11])
    a = random_address_matrix(samples, params, rng)
    b = random_address_matrix(samples, params, rng)
    return float(np.mean(np.count_nonzero(a == b, axis=1)))


def analytics_report(params: NetworkParams, trials: int = 2000, seed: int = 0) -> list[dict]:
    """Each formula next to its simulated counterpart for the given parameters."""
    rows = []
    mc = mean_random_similarity(params, trials * 10, seed)
    rows.append({"quantity": "initial_similarity", "gl": None, "formula": initial_similarity(params),
                 "simulated": mc})
    for gl in sorted({2, 3, 5, params.gene_length} - {1}):
        if gl > params.address_length:
            continue
        sim = float(simulate_reciprocations(gl, trials, seed, params.address_length, params.base).mean())
        rows.append({"quantity": "reciprocations", "gl": gl, "formula": gene_activity(gl),
                     "simulated": sim})
    for gl in sorted({1, 2, 3, 5, params.gene_length}):
        if gl > params.address_length:
            continue
        s1, s2 = simulate_single_exchange(gl, trials, seed, params.address_length, params.base)
        pred = float(np.mean([similarity_after_exchange(x, gl, params.address_length) for x in s1]))
        rows.append({"quantity": "similarity_after_exchange", "gl": gl, "formula": pred,
                     "simulated": float(s2.mean())})
    for row in rows:
        row["relative_error"] = abs(row["simulated"] - row["formula"]) / abs(row["formula"])
    return rows
