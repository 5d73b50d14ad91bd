# Addresses, similarity, and what one gene does to two nodes.
import numpy as np

from genroute.addressing import NetworkParams, eval_similarity, random_address, to_digit_string
from genroute.genes import alter_gene, apply_gene, decay_mask, generate_gene, is_exhausted

p = NetworkParams(base=16, address_length=20, gene_length=3)
rng = np.random.default_rng(1)

a = random_address(p, rng)
b = random_address(p, rng)
print("a =", to_digit_string(a))
print("b =", to_digit_string(b))
print("eval(a, b) =", eval_similarity(a, b), " expected for random pairs:", p.address_length / p.base)

# a sends a gene to b; b pastes it and one mask bit decays
g = generate_gene(a, p, rng, origin=0)
print("gene:", g)
b = apply_gene(b, g)
g = decay_mask(g, rng)
print("after paste eval =", eval_similarity(a, b), " gene now", g)

# b answers with its own digits at the same positions; the two keep
# bouncing the gene until every mask bit is passive
nodes, holder, receptions = [a, b], 0, 1
while not is_exhausted(g):
    g = alter_gene(g, nodes[1 - holder])
    nodes[holder] = apply_gene(nodes[holder], g)
    g = decay_mask(g, rng)
    holder, receptions = 1 - holder, receptions + 1
print("gene died after", receptions, "receptions; eval(a, b) =", eval_similarity(*nodes))
