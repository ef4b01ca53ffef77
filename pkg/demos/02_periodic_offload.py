"""
How much infrastructure traffic can ad hoc contacts absorb?
===========================================================

A fresh 1 MB message every T seconds must reach every subscribed vehicle
before it expires. Compare the feedback controller against pushing
everything over the infrastructure and against the dominating-set oracle.
"""

from pushtrack import (Mode, PeriodicConfig, SyntheticConfig, WhenStrategy, WhomStrategy, derive_contacts,
                       generate_synthetic, run_periodic)

trace = generate_synthetic(SyntheticConfig(arrival_rate=0.2, initial_nodes=120, horizon=1800), seed=3)
contacts = derive_contacts(trace)

for period in (60, 600):
    ref = run_periodic(trace, contacts, PeriodicConfig(period=period, mode=Mode.INFRA_ONLY), seed=0)
    print(f"T = {period} s, infrastructure-only load {ref.infra_load / 1e6:.1f} MB")
    rows = [
        ("linear / random", PeriodicConfig(period=period)),
        ("quadratic / entry-newest", PeriodicConfig(period=period, when=WhenStrategy.QUADRATIC,
                                                    whom=WhomStrategy.ENTRY_NEWEST)),
        ("single-copy / gps-potential", PeriodicConfig(period=period, when=WhenStrategy.SINGLE_COPY,
                                                       whom=WhomStrategy.GPS_POTENTIAL)),
        ("oracle", PeriodicConfig(period=period, mode=Mode.ORACLE)),
    ]
    for label, cfg in rows:
        rep = run_periodic(trace, contacts, cfg, seed=0, reference_load=ref.infra_load)
        late = sum(m.missed_count for m in rep.messages)
        print(f"  {label:28s} offload {rep.offload_ratio:6.3f}  control {rep.control_load / 1e3:7.1f} kB  "
              f"missed {late}")

# the infection ratio of one message, as the controller pushes and the epidemic spreads
rep = run_periodic(trace, contacts, PeriodicConfig(period=600), seed=0, with_reference=False)
series = [row for row in rep.infection_series if row[0] == 0]
for _, t, infected, subscribed in series[:: max(1, len(series) // 8)]:
    print(f"  t={t:7.1f}  {infected:4d}/{subscribed:<4d} infected")
