"""Same-time feedback: dressed normalization is 1/(1 - chi Delta_R)."""
from tnqed.dressing import ToyParams, toy_same_time

for c in (-0.5, 0.25, 0.5, 0.9):
    r = toy_same_time(ToyParams(chi=1.0, delta_r=c, J0=1.0, A_e=0.3))
    print(f"chi*Delta_R = {c:5.2f}   normalization {r.normalization:.10f}   expected {r.expected:.10f}")
