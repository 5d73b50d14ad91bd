# Periodic re-convergence under slow mobility, and packets carrying old addresses.
from genroute.addressing import NetworkParams
from genroute.manet import (MobilityModel, StaleAddress, advance_epoch, aged_packet, route_aged,
                            start_epochs)
from genroute.topology import adhoc_radius, generate_adhoc

p = NetworkParams(base=32, address_length=50, gene_length=1, genes_per_node=10)
t = generate_adhoc(20, None, "dense", seed=3)
model = MobilityModel.for_topology(t, adhoc_radius(20, "dense"), speed_range=(0.002, 0.01), seed=3)
state = start_epochs(t, p, depth=3, seed=3)
print(f"epoch 0 converged in {1000 * state.convergence_times[0]:.1f} ms")

for _ in range(3):
    model.step(0.5)
    state = advance_epoch(state, model.topology(), p, seed=3)
    moved = [i for i, e in enumerate(state.last_moved) if e == state.epoch_index]
    print(f"epoch {state.epoch_index}: moved {moved}, registrations {len(state.registrations)}")

t = state.topology
outcomes = {}
for s in range(20):
    for d in range(20):
        if s != d:
            r = route_aged(state, t, s, aged_packet(state, d, 1, 80))
            outcomes[r.outcome.value] = outcomes.get(r.outcome.value, 0) + 1
print("one epoch old:", outcomes)

try:
    route_aged(state, t, 0, aged_packet(state, 5, 3, 80))
except StaleAddress as exc:
    print("three epochs old:", exc)
