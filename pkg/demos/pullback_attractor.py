"""Pullback absorption and attraction for a small Galerkin truncation.

Two initial conditions started ever further in the past, driven by the same
noise path, end up at the same point at time 0.

Run with: python demos/pullback_attractor.py
"""
import numpy as np

from fbmfluid.attractor import attraction_test, condition_check, estimate_absorption
from fbmfluid.galerkin import GridWorkspace, PhysParams, SpectralField, measure_C1
from fbmfluid.mild import shared_noise
from fbmfluid.noise import NoiseAssumption

N, H, dt = 4, 0.52, 0.005
ws = GridWorkspace(N)
sp = ws.spectrum
p = PhysParams(0.5, 1.0, 0.5)
noise = NoiseAssumption("A4", sp)

C1 = measure_C1(ws, np.random.default_rng(1)).value
cond = condition_check(C1, H, sp)
print(f"C1 = {C1:.4f}; condition C1^2 = {cond.lhs:.3e} > {cond.rhs:.3e}: {cond.satisfied}")

Z = shared_noise(noise, H, dt, seed=2, horizon=8)
rng = np.random.default_rng(3)
init = [SpectralField.random(N, rng, 1.5, r) for r in (0.5, 2.0, 5.0)]

ab = estimate_absorption(noise, H, p, sp, ws, init, [-2, -3, -4, -6, -8], 2, dt, C1, Z=Z)
print(ab.table())

dec = attraction_test(noise, H, p, sp, ws, init[0], init[2], [-1, -2, -3, -4, -6], 2, dt, Z=Z)
for t0, d in zip(dec.t0, dec.distance):
    print(f"t0 = {t0:5.1f}   |u1(0) - u2(0)| = {d:.3e}")
