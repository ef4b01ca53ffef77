"""
Keeping content alive in an area
================================

Every vehicle present at the start holds the content. Newcomers get it from
neighbours, or from the infrastructure once they have waited U seconds.
"""

from pushtrack import FloatingConfig, Mode, SyntheticConfig, derive_contacts, generate_synthetic, run_floating

sparse = SyntheticConfig(arrival_rate=0.03, mean_transit=400, initial_nodes=10, horizon=1800)
trace = generate_synthetic(sparse, seed=5)
contacts = derive_contacts(trace)

base = run_floating(trace, contacts, FloatingConfig(mode=Mode.NO_FEEDBACK), seed=0).floating_summary()
print(f"no feedback: delivery {base['delivery_ratio']:.3f}, mean wait {base['mean_time_to_infection']:.0f} s")

for u in (0, 60, 300, 600):
    rep = run_floating(trace, contacts, FloatingConfig(tolerance=u), seed=0)
    s = rep.floating_summary()
    print(f"U = {u:3d} s: offload {rep.offload_ratio:6.3f}, delivery {s['delivery_ratio']:.3f}, "
          f"mean wait {s['mean_time_to_infection']:.0f} s")
