# Closed forms for gene lifetime and similarity next to direct simulation.
from genroute.addressing import NetworkParams
from genroute.analytics import (expected_receptions, gene_activity, simulate_reciprocations,
                                simulate_single_exchange, similarity_after_exchange)

print("gl  formula  coupon-collector  simulated")
for gl in (2, 3, 5, 10):
    sim = simulate_reciprocations(gl, 2000, seed=0).mean()
    print(f"{gl:<3} {gene_activity(gl):7.2f}  {expected_receptions(gl):16.2f}  {sim:9.2f}")

# one exchange between random addresses
for gl in (2, 5):
    s1, s2 = simulate_single_exchange(gl, 2000, seed=0)
    pred = sum(similarity_after_exchange(x, gl, 50) for x in s1) / len(s1)
    print(f"gl={gl}: similarity {s1.mean():.2f} -> {s2.mean():.2f} simulated, {pred:.2f} by formula")

print("random pairs:", NetworkParams().address_length / NetworkParams().base)
