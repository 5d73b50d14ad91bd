# Greedy forwarding on converged addresses, then a link cut and repair.
from genroute.addressing import NetworkParams
from genroute.engine import link_failure_experiment, run_convergence
from genroute.routing import route_packet
from genroute.topology import generate_wired, spf_all_pairs

p = NetworkParams(gene_length=3, genes_per_node=3.5)
t = generate_wired(10, 3.5, seed=2)
res = run_convergence(t, p, seed=2)
spf = spf_all_pairs(t)

for s, d in ((0, 9), (3, 7), (8, 1)):
    r = route_packet(t, res.addresses, s, d)
    print(f"{s} -> {d}: {r.outcome.value:<10} path {list(r.path)}  (spf hops {spf.hops[s, d]})")

x = link_failure_experiment(t, p, seed=2)
print("cut link", x.link)
print("  before      delivered", x.before.delivered_fraction)
print("  after cut   delivered", round(x.after_cut.delivered_fraction, 4), " lost", x.packets_lost)
print("  repaired    delivered", x.recovered.delivered_fraction)
