"""Broad-band time-normal moments ignore a future source bump; GKK moments do not."""
from tnqed.experiments import REFERENCE_SYSTEMS, system_from_config
from tnqed.timenormal import causality_probe, tn_broad

model = system_from_config(REFERENCE_SYSTEMS["two-level-probe"])
times = [1.5, 2.0]
print("<T:J(1.5)J(2.0):> =", tn_broad(model, times, "J", past="free"))
for t_p in (3.0, 3.5, 4.0):
    d_broad, d_gkk = causality_probe(model, times, "J", t_p=t_p, amplitude=5.0, source="A_e")
    print(f"bump at {t_p}: broad-band change {d_broad:.2e}, GKK change {d_gkk:.2e}")
