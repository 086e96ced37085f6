"""Cached Gauss rules used by the kernel and convolution quadratures."""
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=256)
def _legendre(n):
    x, w = roots_legendre(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=256)
def _jacobi(n, alpha, beta):
    x, w = roots_jacobi(n, alpha, beta)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n, a, b):
    """Nodes and weights of the n-point Gauss-Legendre rule on [a, b]."""
    x, w = _legendre(int(n))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def gauss_jacobi_left(n, p, a, b):
    """Rule for ``int_a^b (x - a)**p f(x) dx`` with p > -1."""
    x, w = _jacobi(int(n), 0.0, float(p))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), w * half ** (p + 1.0)


def gauss_jacobi_right(n, p, a, b):
    """Rule for ``int_a^b (b - x)**p f(x) dx`` with p > -1."""
    x, w = _jacobi(int(n), float(p), 0.0)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), w * half ** (p + 1.0)


def composite_legendre(edges, n):
    """Concatenated Gauss-Legendre rules over consecutive panels."""
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            x, w = gauss_legendre(n, a, b)
            xs.append(x)
            ws.append(w)
    if not xs:
        return np.empty(0), np.empty(0)
    return np.concatenate(xs), np.concatenate(ws)


def geometric_edges(a, b, first, ratio=2.0):
    """Panel edges from a to b whose widths grow geometrically from ``first``."""
    edges = [a]
    width = first
    while edges[-1] + width < b:
        edges.append(edges[-1] + width)
        width *= ratio
    edges.append(b)
    return np.asarray(edges, dtype=float)
