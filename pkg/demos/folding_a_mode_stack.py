"""
Folding a mode stack into elementary transforms
===============================================

A free-boson time slice turns every creation operator into a linear
combination of site operators. Here we build that mode stack for a short
chain, fold it into phases and nearest-neighbour rotations, and replay the
plan to get the stack back.
"""

import numpy as np

from bosefold import folding

# hopping chain of six sites with a weak tilt
N = 6
h = np.diag(np.linspace(-0.5, 0.5, N)) - np.eye(N, k=1) - np.eye(N, k=-1)
C = folding.propagate(h, 0.2)
print("stack is unitary:", np.allclose(C.conj().T @ C, np.eye(N)))

# full folds need N(N-1)/2 rotations, whatever the direction
for fold in (folding.fold_normal, folding.fold_inverse):
    plan = fold(C)
    err = np.abs(folding.replay_on_stack(plan) - C).max()
    print(f"{plan.scheme:8s} rotations={plan.two_site_count:3d} replay error={err:.1e}")

# a short slice leaves the stack nearly banded, so most rotations can be skipped
C_short = folding.propagate(h, 1e-3)
for eta in (2, 3):
    plan = folding.fold_banded(C_short, eta)
    err = np.abs(folding.replay_on_stack(plan) - C_short).max()
    print(f"eta={eta} rotations={plan.two_site_count:2d} replay error={err:.1e}")

# eta=1 is too narrow here: the next-nearest entries are about t^2/2
try:
    folding.fold_banded(C_short, 1)
except folding.BandViolation as exc:
    print("eta=1 refused:", exc)

# plans are plain text, one transform per line
print("\n".join(folding.fold_banded(C_short, 2).dumps().splitlines()[:4]))
