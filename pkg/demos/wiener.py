"""Increment statistics of sampled Wiener paths."""
from tnqed.pathspace import wiener_check

for k, v in wiener_check(n_samples=100_000, dt=0.01, seed=42).items():
    print(f"{k:22s} {v}")
