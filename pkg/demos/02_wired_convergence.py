# Convergence on a 10-node wired net, the rows of the small-network table.
import numpy as np

from genroute.addressing import NetworkParams, similarity_matrix
from genroute.engine import run_convergence
from genroute.topology import generate_wired, network_width

t = generate_wired(10, 3.5, seed=4)
w = network_width(t)
print(f"{t.node_count} nodes, {t.link_count} links, mean hops {w.mean_shortest_path_hops:.2f}, "
      f"diameter {w.diameter_hops}")

print("n.g   c.t(ms)   eff    p.o/link  delivered")
for ng in (2.5, 3, 3.5):
    res = run_convergence(t, NetworkParams(gene_length=1, genes_per_node=ng), seed=4)
    m = res.metrics
    print(f"{ng:<5} {1000 * m.convergence_time_s:7.2f}  {m.efficiency:6.3f}  "
          f"{m.overhead_bytes_per_link_per_s:8.1f}  {m.delivered_fraction:.3f}")

# neighbours end up more alike than strangers
S = similarity_matrix(np.array([a.digits for a in res.addresses]))
linked = [S[u, v] for u, v in t.links]
others = [S[u, v] for u in range(10) for v in range(u + 1, 10) if not t.has_link(u, v)]
print(f"mean eval, linked pairs {np.mean(linked):.2f} vs unlinked {np.mean(others):.2f}")
