"""Fractional Brownian paths three ways, and what the kernel says about them.

Run with: python demos/fbm_paths.py
"""
import numpy as np

from fbmfluid.fbm import (StepFunction, TimeGrid, covariance_R, kernel_KH, kstar_apply,
                          sample_fbm, twisted_inner)

H = 0.7
grid = TimeGrid(0.0, 1 / 256, 256)

# Same seed, same replica: each method gives a reproducible path
for method in ("exact", "circulant", "kernel"):
    X = sample_fbm(grid, H, seed=7, n_paths=2000, method=method)
    emp = np.mean(X[:, -1] * X[:, 128])
    print(f"{method:9s}  E[B(1)B(1/2)] ~ {emp:.4f}   exact {covariance_R(1.0, 0.5, H):.4f}")

# The kernel blows up like (t-s)^(H-1/2) only in its derivative; K itself vanishes on the diagonal
for eps in (1e-1, 1e-2, 1e-3):
    print(f"K(1, 1-{eps:g}) = {kernel_KH(1.0, 1 - eps, H):.5f}")

# K* maps the indicator of [0, 1] to K(1, .)
one = StepFunction.indicator(0.0, 1.0)
s = np.array([0.1, 0.5, 0.9])
print("K*1 :", np.round(kstar_apply(one, 1.0, H, s), 6))
print("K   :", np.round(kernel_KH(1.0, s, H), 6))

# The variance of a Wiener integral is the twisted inner product
print("<1,1>_H =", round(float(twisted_inner(one, one, 1.0, H)), 6), "(should be 1)")
