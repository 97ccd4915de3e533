"""
Quench: switching off interaction and trap
==========================================

Start from the trapped Mott-like ground state, then evolve with hopping
alone. The occupations hardly move at first while the fluctuations at the
centre grow quickly.
"""

import numpy as np

from bosefold import engine
from bosefold.model import BoseHubbardParams, harmonic_trap

N = 8
ground = BoseHubbardParams(N, N, 10.0, 1.0, tuple(harmonic_trap(N, 0.2, 4.5)))
after = BoseHubbardParams(N, N, 0.0, 0.14)
res = engine.run_quench(ground, engine.GroundConfig(tau_s=1e-2, chi=24, n_max=4), after,
                        engine.EvolutionConfig("mf-inverse", t_s=0.05, T=4.0, chi=48,
                                               n_max=4, cadence=10))
rec = res.record
centre = N // 2 - 1
for t, m, v in zip(rec.times, rec.means, rec.variances):
    print(f"t={t:3.1f}  <n> centre={m[centre]:.3f}  var centre={v[centre]:.3f}  "
          f"total={m.sum():.6f}")
print("leaked weight from the occupation cap:", f"{sum(rec.leaked):.1e}")
