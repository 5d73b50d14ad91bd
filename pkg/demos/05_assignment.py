# Handing out addresses directly from wanted similarities, no gene traffic at all.
import numpy as np

from genroute.addressing import NetworkParams, eval_similarity, to_digit_string
from genroute.assignment import assign_network, check_feasibility, pigeonhole_bound
from genroute.topology import generate_wired

p = NetworkParams(base=16, address_length=50)
t = generate_wired(8, 3.0, seed=5)
targets = {e: 6 for e in t.links}
res = assign_network(t, targets, p, np.random.default_rng(5))
for u, v in t.links:
    print(f"{u}-{v}: wanted 6, got {eval_similarity(res.addresses[u], res.addresses[v])}")
print("node 0:", to_digit_string(res.addresses[0]))

# too much wanted similarity: three neighbours, each asking for 20 of 50 digits
nb = {i: res.addresses[i] for i in (1, 2, 3)}
print(check_feasibility(nb, {1: 20, 2: 20, 3: 20}, p))
print("guaranteed total overlap among 20 addresses:", pigeonhole_bound(p, 20))
