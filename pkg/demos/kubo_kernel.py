"""Single-mode retarded kernel on a grid against sin(w tau)/w, plus a frequency split."""
import numpy as np

from tnqed.hilbert import ModeSpec
from tnqed.response import kubo_delta_r
from tnqed.signals import Signal, freq_split, make_grid

g = make_grid(0.0, 0.05, 201)
w = 2.0
K = kubo_delta_r([ModeSpec(w)], g)
tau = g.lags * g.dt
exact = np.where(tau > 0, np.sin(w * tau) / w, 0.0)
print(f"max |Delta_R - sin(w tau)/w| = {np.abs(K.values[0, 0] - exact).max():.2e}")

t = g.times
f = Signal(g, (np.cos(3 * t) * np.exp(-((t - 5) / 1.5) ** 2))[None])
fp, fm = freq_split(f)
print(f"completeness {np.abs(f.values - fp.values - fm.values).max():.2e}, "
      f"symmetry {np.abs(fp.values - fm.values.conj()).max():.2e}")
