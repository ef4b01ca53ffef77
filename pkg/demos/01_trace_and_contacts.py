"""
From waypoints to a contact graph
=================================

Generate a synthetic vehicle trace, turn it into contact intervals at a
100 m radio range and look at how connected the population is.
"""

import numpy as np

from pushtrack import SyntheticConfig, dataset_stats, derive_contacts, generate_synthetic, subsample

# a 1 km square, vehicles arriving about every 5 s and staying 10 minutes on average
cfg = SyntheticConfig(arrival_rate=0.2, mean_transit=600, initial_nodes=120, horizon=1200)
trace = generate_synthetic(cfg, seed=1)
print(f"{len(trace)} vehicles over {trace.duration:.0f} s")

contacts = derive_contacts(trace)
durations = np.array([c.end - c.start for c in contacts.contacts])
print(f"{len(durations)} contacts, median {np.median(durations):.0f} s, longest {durations.max():.0f} s")

# time-averaged snapshot statistics, then the same with only a quarter of the vehicles taking part
for p in (1.0, 0.25):
    sub = derive_contacts(subsample(trace, p, seed=2)) if p < 1 else contacts
    s = dataset_stats(sub)
    print(f"participation {p:>4}: {s.avg_nodes:6.1f} nodes, {s.avg_components:6.1f} components, "
          f"{s.avg_singletons:6.1f} isolated, mean degree {s.avg_degree:.2f}")

# how long do contacts last?  P(duration > d) at a few d, full population
ccdf = dataset_stats(contacts).contact_duration_ccdf
for d, frac in ccdf[:: max(1, len(ccdf) // 6)]:
    print(f"  P(D > {d:5.0f} s) = {frac:.3f}")
