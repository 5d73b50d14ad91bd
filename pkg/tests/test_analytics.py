import math

import numpy as np
import pytest

from genroute.addressing import NetworkParams
from genroute.analytics import (DomainError, analytics_report, expected_receptions, fit_kappa,
                                gene_activity, initial_similarity, mean_random_similarity,
                                predict_eval_flow, similarity_after_exchange,
                                simulate_reciprocations, simulate_single_exchange)
from genroute.topology import Link, Topology, generate_wired


def test_gene_activity_values():
    assert gene_activity(2) == pytest.approx(2 + math.log(2))
    assert gene_activity(2) == pytest.approx(2.693, abs=1e-3)
    assert gene_activity(10) == pytest.approx(10.105, abs=1e-3)
    assert gene_activity(2, log_base=2) == pytest.approx(3.0)
    assert gene_activity(10, log_base=10) == pytest.approx(10 + math.log10(10 / 9))


@pytest.mark.parametrize("gl", [1, 0, -3])
def test_gene_activity_singular(gl):
    with pytest.raises(DomainError, match="diverges"):
        gene_activity(gl)


def test_gene_activity_shape():
    vals = [gene_activity(g) for g in range(2, 200)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert all(v > g for v, g in zip(vals, range(2, 200)))


def test_similarity_after_exchange_examples():
    assert similarity_after_exchange(7.0, 1, 50) == 7.0
    assert similarity_after_exchange(0, 2, 50) == pytest.approx(1.0)
    assert similarity_after_exchange(10, 3, 50) == pytest.approx(1 + 0.98 + 10 * 0.98 ** 2)
    assert similarity_after_exchange(10, 3, 50) == pytest.approx(11.584)


@pytest.mark.parametrize("args", [(-1, 2, 50), (51, 2, 50), (3, 0, 50), (3, 51, 50)])
def test_similarity_after_exchange_domain(args):
    with pytest.raises(DomainError):
        similarity_after_exchange(*args)


def test_similarity_after_exchange_monotone_and_bounded():
    for al in range(1, 201):
        gl = np.arange(1, al + 1)
        q = 1 - 1 / al
        geo = np.where(al == 1, gl - 1, (1 - q ** (gl - 1)) / (1 - q) if al > 1 else 0)
        fixed = geo + al * q ** (gl - 1)
        assert np.all(fixed <= al + 1e-9)
    for s in np.linspace(0, 49, 12):
        vals = [similarity_after_exchange(s, g, 50) for g in range(1, 51)]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
        assert similarity_after_exchange(s + 1, 4, 50) >= similarity_after_exchange(s, 4, 50)
    for al, gl in ((50, 7), (200, 200), (3, 2)):
        assert similarity_after_exchange(al, gl, al) == pytest.approx(
            sum((1 - 1 / al) ** i for i in range(gl - 1)) + al * (1 - 1 / al) ** (gl - 1))


def test_initial_similarity():
    assert initial_similarity(NetworkParams(base=16, address_length=50)) == 3.125
    assert initial_similarity(NetworkParams(base=32, address_length=100)) == 3.125
    sim = mean_random_similarity(NetworkParams(base=16, address_length=50), 10**5, seed=2)
    assert sim == pytest.approx(3.125, rel=0.02)


def loop_graph():
    # 0-1-2-3 then a triangle at 3: six nodes, six links, mean degree 2
    return Topology.from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 3)], bandwidth=1.0)


def test_predict_direct_neighbours():
    t = loop_graph()
    pr = predict_eval_flow(t, 0, 1)
    assert pr.delta == 2.0 and pr.predicted_eval == pytest.approx(0.5)
    assert pr.segments.segments == ((1.0, 1),)


def test_predict_one_more_hop_divides_by_delta():
    t = loop_graph()
    assert predict_eval_flow(t, 0, 3).predicted_eval == pytest.approx(
        predict_eval_flow(t, 0, 2).predicted_eval / 2.0)


def test_predict_linear_in_capacity():
    t = generate_wired(10, 3.0, 1)
    t2 = Topology(10, {k: Link(2 * l.bandwidth) for k, l in t.links.items()})
    assert predict_eval_flow(t2, 0, 5).predicted_eval == pytest.approx(
        2 * predict_eval_flow(t, 0, 5).predicted_eval)
    assert predict_eval_flow(t, 0, 5, kappa=4).predicted_eval == pytest.approx(
        predict_eval_flow(t, 0, 5).predicted_eval / 4)


def test_predict_unit_capacities():
    t = generate_wired(10, 3.0, 1)
    bw = predict_eval_flow(t, 0, 5).predicted_eval
    unit = predict_eval_flow(t, 0, 5, capacity_source="unit").predicted_eval
    assert bw == pytest.approx(10_000 * unit)


def test_predict_relabel_invariant():
    rng = np.random.default_rng(0)
    base = generate_wired(8, 3.0, 2)
    t = Topology(8, {k: Link(float(rng.integers(1, 5))) for k in base.links})
    perm = rng.permutation(8)
    t2 = Topology(8, {(int(perm[u]), int(perm[v])): l for (u, v), l in t.links.items()})
    for i in range(8):
        for j in range(8):
            if i != j:
                assert predict_eval_flow(t, i, j).predicted_eval == pytest.approx(
                    predict_eval_flow(t2, int(perm[i]), int(perm[j])).predicted_eval)


def test_predict_errors():
    t = loop_graph()
    with pytest.raises(DomainError):
        predict_eval_flow(t, 1, 1)
    with pytest.raises(DomainError):
        predict_eval_flow(t, 0, 1, kappa=0)


def test_fit_kappa_examples():
    p = np.array([1.0, 4.0, 2.5, 0.0])
    fit = fit_kappa(p, p / 2)
    assert fit.kappa == pytest.approx(2.0) and fit.residual == pytest.approx(0.0, abs=1e-12)
    assert fit_kappa(p, p).kappa == pytest.approx(1.0)
    noisy = fit_kappa([1, 2, 3], [0.6, 0.9, 1.6])
    assert noisy.residual > 0


@pytest.mark.parametrize("p,o", [([], []), ([1, 2], [1]), ([0, 0], [1, 2]), ([1, 2], [0, 0])])
def test_fit_kappa_degenerate(p, o):
    with pytest.raises(DomainError):
        fit_kappa(p, o)


@pytest.mark.parametrize("gl", [1, 2, 3, 5])
def test_ping_pong_follows_coupon_collector(gl):
    # every reception decays one uniformly chosen bit, so the count is a coupon-collector time
    counts = simulate_reciprocations(gl, 4000, seed=1)
    assert counts.mean() == pytest.approx(expected_receptions(gl), rel=0.05)
    assert counts.min() >= gl


@pytest.mark.parametrize("gl", [1, 2, 5])
def test_single_exchange_gain(gl):
    # pasting gl random positions of a onto b fixes each non-matching one
    s1, s2 = simulate_single_exchange(gl, 4000, seed=2)
    assert np.all(s2 >= s1) and np.all(s2 - s1 <= gl)
    assert np.mean(s2 - s1) == pytest.approx(gl * np.mean(50 - s1) / 50, rel=0.03)


def test_report_rows():
    rows = analytics_report(NetworkParams(gene_length=3), trials=200, seed=0)
    kinds = {r["quantity"] for r in rows}
    assert kinds == {"initial_similarity", "reciprocations", "similarity_after_exchange"}
    assert all(r["relative_error"] >= 0 for r in rows)
