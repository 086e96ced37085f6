"""One-dimensional fractional Brownian motion for H in (1/2, 1).

Covariance, the Volterra kernel K_H and its time derivative, the adjoint
operator K*_H, the twisted inner product, three samplers and Wiener-type
integrals of deterministic integrands.
"""
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate, linalg
from scipy.interpolate import CubicSpline
from scipy.special import betainc, hyp2f1
from scipy.special import beta as beta_fn

from . import rng as _rng
from ._quad import composite_legendre, gauss_jacobi_left, gauss_legendre
from .errors import (
    ConfigurationError,
    DomainError,
    EmbeddingError,
    FactorizationError,
    NumericalError,
    QuadratureError,
)
from .hurst import HurstParam, as_hurst

__all__ = [
    "HurstParam",
    "TimeGrid",
    "FbmPath",
    "StepFunction",
    "SampledFunction",
    "AlignmentError",
    "covariance_R",
    "kernel_KH",
    "kernel_dKdt",
    "kernel_constant",
    "kernel_cell_integral",
    "kstar_apply",
    "kstar_l2_norm_sq",
    "twisted_inner",
    "generate_fbm_exact",
    "generate_fbm_circulant",
    "generate_fbm_kernel",
    "generate_fbm",
    "sample_fbm",
    "wiener_integral",
]

MAX_EXACT_STEPS = 2 ** 14


class AlignmentError(ConfigurationError):
    """Step-function breakpoints do not fall on the path grid."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid with nodes t0 + k*dt for 0 <= k <= n_steps."""

    t0: float
    dt: float
    n_steps: int

    def __post_init__(self):
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))
        if not (math.isfinite(self.t0) and math.isfinite(self.dt)) or self.dt <= 0:
            raise ConfigurationError(f"time grid needs finite t0 and dt > 0, got t0={self.t0}, dt={self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ConfigurationError(f"n_steps must be a nonnegative integer, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    @property
    def t_end(self):
        return self.t0 + self.dt * self.n_steps

    def index_of(self, t, rtol=1e-9):
        """Index of node t, or None when t is not a node."""
        k = (t - self.t0) / self.dt
        kr = round(k)
        if abs(k - kr) <= rtol * max(1.0, abs(k)) and 0 <= kr <= self.n_steps:
            return int(kr)
        return None


@dataclass
class FbmPath:
    grid: TimeGrid
    values: np.ndarray
    hurst: HurstParam
    seed: int
    driving_bm: Optional[np.ndarray] = None
    replica: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_steps + 1,):
            raise ConfigurationError("path values must have length n_steps + 1")
        if self.values[0] != 0.0:
            raise ConfigurationError("an fBm path starts at zero")
        if self.driving_bm is not None:
            self.driving_bm = np.asarray(self.driving_bm, dtype=float)
            if self.driving_bm.shape != self.values.shape:
                raise ConfigurationError("driving Brownian path must share the grid")

    @property
    def times(self):
        return self.grid.times


@dataclass(frozen=True)
class StepFunction:
    """phi(t) = sum_i a_i 1_{(t_i, t_{i+1}]}(t)."""

    breakpoints: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        co = np.asarray(self.coefficients, dtype=float)
        if bp.ndim != 1 or co.ndim != 1 or len(bp) != len(co) + 1 or len(co) < 1:
            raise ConfigurationError("a step function needs n+1 breakpoints and n coefficients")
        if np.any(np.diff(bp) <= 0):
            raise ConfigurationError("breakpoints must be strictly increasing")
        if bp[0] < 0:
            raise DomainError("breakpoints must be nonnegative")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "coefficients", co)

    @classmethod
    def indicator(cls, a, b, value=1.0):
        return cls(np.array([a, b]), np.array([value]))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.breakpoints, t, side="left") - 1
        inside = (idx >= 0) & (idx < len(self.coefficients))
        return np.where(inside, self.coefficients[np.clip(idx, 0, len(self.coefficients) - 1)], 0.0)

    def pieces(self):
        bp = self.breakpoints
        return zip(bp[:-1], bp[1:], self.coefficients)


@dataclass
class SampledFunction:
    """A function known on nodes, evaluated by cubic-spline interpolation."""

    t: np.ndarray
    values: np.ndarray
    _spline: CubicSpline = field(init=False, repr=False)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self._spline = CubicSpline(self.t, self.values)

    def __call__(self, t):
        return self._spline(t)


Integrand = Union[StepFunction, SampledFunction, Callable]


def _as_callable(f):
    if isinstance(f, (StepFunction, SampledFunction)):
        return f

    def g(t):
        t = np.asarray(t, dtype=float)
        out = np.asarray(f(t), dtype=float)
        if out.shape != t.shape:
            out = np.broadcast_to(out, t.shape).astype(float)
        return out

    return g


# --- covariance and kernel -------------------------------------------------


def covariance_R(t, s, H):
    """R(t, s) = (t^2H + s^2H - |t - s|^2H) / 2."""
    h = as_hurst(H).value
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0) or np.any(s < 0):
        raise DomainError("covariance_R is defined for nonnegative times")
    out = 0.5 * (t ** (2 * h) + s ** (2 * h) - np.abs(t - s) ** (2 * h))
    return float(out) if out.ndim == 0 else out


def _kernel_norm_sq_unit(h):
    """int_0^1 K(1,s)^2 ds for the kernel with unit derivative constant."""
    a = h - 0.5

    def k2_over_weight(s):
        # K(1,s) / (s^(1/2-H) (1-s)^(H-1/2)) with unit constant
        return (hyp2f1(0.5 - h, 1.0, h + 0.5, 1.0 - s) / a) ** 2

    val, err = integrate.quad(k2_over_weight, 0.0, 1.0, weight="alg", wvar=(1 - 2 * h, 2 * h - 1),
                              epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


@lru_cache(maxsize=128)
def _derivative_constant(h):
    return 1.0 / math.sqrt(_kernel_norm_sq_unit(h))


def kernel_constant(H):
    """c_H, fixed numerically by the normalization int_0^1 K_H(1,s)^2 ds = 1.

    The value is computed once per H by quadrature and cached.
    """
    h = as_hurst(H).value
    return _derivative_constant(h) / (h - 0.5)


def _check_kernel_args(t, s):
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0) or np.any(s >= t):
        raise DomainError("kernel requires 0 < s < t")
    return t, s


def _kernel_unchecked(t, s, h, c):
    # c is the derivative constant c_H (H - 1/2)
    a = h - 0.5
    z = s / t
    return (c / a) * (1.0 / z) ** a * (t - s) ** a * hyp2f1(0.5 - h, 1.0, h + 0.5, 1.0 - z)


def kernel_KH(t, s, H):
    """Volterra kernel K_H(t, s) for 0 < s < t."""
    h = as_hurst(H).value
    t, s = _check_kernel_args(t, s)
    out = _kernel_unchecked(t, s, h, _derivative_constant(h))
    return float(out) if out.ndim == 0 else out


def _kernel_or_zero(t, s, h, c):
    t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    out = np.zeros(t.shape)
    m = (s > 0) & (s < t)
    out[m] = _kernel_unchecked(t[m], s[m], h, c)
    return out


def kernel_dKdt(t, s, H):
    """dK_H/dt (t, s) = c_H (H - 1/2) (t - s)^(H - 3/2) (s / t)^(1/2 - H)."""
    h = as_hurst(H).value
    t, s = _check_kernel_args(t, s)
    out = _derivative_constant(h) * (t - s) ** (h - 1.5) * (s / t) ** (0.5 - h)
    return float(out) if out.ndim == 0 else out


def _unit_cell_antiderivative(y, h, c):
    """int_0^y K(1, x) dx for 0 <= y <= 1."""
    y = np.asarray(y, dtype=float)
    shape = y.shape
    a = h - 0.5
    p = 1.5 - h
    out = np.atleast_1d(betainc(p, a, y) * beta_fn(p, a))
    y = np.atleast_1d(y)
    inner = (y > 0) & (y < 1)
    yi = y[inner]
    out[inner] += yi ** p * (1 - yi) ** a / a * hyp2f1(0.5 - h, 1.0, h + 0.5, 1 - yi)
    return (c / (h + 0.5) * out).reshape(shape)


def kernel_cell_integral(t, a, b, H):
    """int_a^b K_H(t, s) ds for 0 <= a <= b <= t (vectorized)."""
    h = as_hurst(H).value
    c = _derivative_constant(h)
    t, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, a, b)))
    if np.any(a < 0) or np.any(b < a) or np.any(b > t * (1 + 1e-14)):
        raise DomainError("cell integral needs 0 <= a <= b <= t")
    ya = np.clip(a / t, 0, 1)
    yb = np.clip(b / t, 0, 1)
    out = t ** (h + 0.5) * (_unit_cell_antiderivative(yb, h, c) - _unit_cell_antiderivative(ya, h, c))
    return float(out) if out.ndim == 0 else out


# --- the adjoint operator K*_H -----------------------------------------------


def _kstar_edges(s, T, breaks):
    first = min(s, T - s)
    edges = [s]
    nxt = breaks[breaks > s * (1 + 1e-15)]
    bi = 0
    e = s
    while e < T:
        width = first if e == s else (e - s)
        target = min(T, e + width)
        while bi < len(nxt) and nxt[bi] <= e:
            bi += 1
        if bi < len(nxt) and nxt[bi] < target:
            target = nxt[bi]
        if T - target < 1e-14 * T:
            target = T
        edges.append(target)
        e = target
    return edges


def _kstar_point(phi, s, T, h, c, breaks, n):
    edges = _kstar_edges(s, T, breaks)
    a, b = edges[0], edges[1]
    x, w = gauss_jacobi_left(n, h - 1.5, a, b)
    total = np.dot(w, phi(x) * (x / s) ** (h - 0.5))
    if len(edges) > 2:
        x, w = composite_legendre(edges[1:], n)
        total += np.dot(w, phi(x) * (x - s) ** (h - 1.5) * (x / s) ** (h - 0.5))
    return c * total


def kstar_apply(phi, T, H, s, n_quad=16, tol=1e-9, method="auto"):
    """(K*_H phi)(s) = int_s^T phi(t) dK_H/dt(t, s) dt on the nodes s in (0, T).

    Step functions are evaluated in closed form through kernel differences
    unless ``method="quadrature"``.  Otherwise each node uses a Gauss-Jacobi
    panel carrying the weight (t - s)^(H - 3/2) followed by geometrically
    graded Gauss-Legendre panels; the rule is rerun with doubled order and
    the difference must stay below ``tol`` (relative to max(1, |value|)).
    """
    hp = as_hurst(H)
    h = hp.value
    c = _derivative_constant(h)
    T = float(T)
    if T <= 0:
        raise DomainError("T must be positive")
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s <= 0) or np.any(s >= T):
        raise DomainError("K*_H is evaluated on nodes inside (0, T)")
    if isinstance(phi, StepFunction) and method == "auto":
        out = np.zeros_like(s)
        for lo, hi, coef in phi.pieces():
            hi = min(hi, T)
            if hi <= lo:
                continue
            out += coef * (_kernel_or_zero(hi, s, h, c) - _kernel_or_zero(np.maximum(lo, s), s, h, c))
        return out
    f = _as_callable(phi)
    breaks = phi.breakpoints if isinstance(phi, StepFunction) else np.empty(0)
    out = np.empty_like(s)
    worst = 0.0
    for i, si in enumerate(s):
        v1 = _kstar_point(f, si, T, h, c, breaks, n_quad)
        v2 = _kstar_point(f, si, T, h, c, breaks, 2 * n_quad)
        err = abs(v2 - v1)
        worst = max(worst, err / max(1.0, abs(v2)))
        if err > tol * max(1.0, abs(v2)):
            raise QuadratureError(
                f"K*_H quadrature at s={si:.6g} did not converge: estimate {v2:.12g}, "
                f"difference {err:.3g} above tolerance {tol:.3g}",
                estimate=v2, error=err, tolerance=tol,
            )
        out[i] = v2
    return out


def _graded_edges(a, b, toward_a=True, toward_b=True, levels=40, min_rel=1e-14):
    # geometric refinement toward the chosen ends of [a, b]
    L = b - a
    edges = {a, b}
    w = L / 2
    k = 0
    while w > min_rel * max(L, 1.0) and k < levels:
        if toward_a:
            edges.add(a + w)
        if toward_b:
            edges.add(b - w)
        w /= 2
        k += 1
    return np.array(sorted(edges))


def kstar_l2_norm_sq(phi, T, H, n_quad=12, levels=30):
    """|K*_H phi|^2 in L^2(0, T) by quadrature graded toward 0, T and the jumps."""
    T = float(T)
    pts = [0.0, T]
    if isinstance(phi, StepFunction):
        pts += [b for b in phi.breakpoints if 0 < b < T]
    pts = sorted(set(pts))
    xs, ws = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        e = _graded_edges(a, b, levels=levels)
        x, w = composite_legendre(e, n_quad)
        xs.append(x)
        ws.append(w)
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    vals = kstar_apply(phi, T, H, x)
    return float(np.dot(w, vals ** 2))


# --- twisted inner product ---------------------------------------------------


def _step_step_inner(f, g, h):
    total = 0.0
    H2 = 2 * h
    for a, b, x in f.pieces():
        for c, d, y in g.pieces():
            total += x * y * 0.5 * (abs(b - c) ** H2 + abs(a - d) ** H2 - abs(a - c) ** H2 - abs(b - d) ** H2)
    return total


def _step_smooth_inner(f, g, T, h, n):
    # <1_(a,b], g> = H int g(t) [sgn(b-t)|b-t|^(2H-1) - sgn(a-t)|a-t|^(2H-1)] dt
    total = 0.0
    pts_all = [0.0, T]
    for a, b, _ in f.pieces():
        pts_all += [min(max(a, 0.0), T), min(max(b, 0.0), T)]
    pts = np.array(sorted(set(pts_all)))
    xs, ws = [], []
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi > lo:
            x, w = composite_legendre(_graded_edges(lo, hi, levels=30), n)
            xs.append(x)
            ws.append(w)
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    gx = g(x)
    e = 2 * h - 1
    for a, b, coef in f.pieces():
        a, b = min(max(a, 0.0), T), min(max(b, 0.0), T)
        if b <= a:
            continue
        kern = np.sign(b - x) * np.abs(b - x) ** e - np.sign(a - x) * np.abs(a - x) ** e
        total += coef * h * np.dot(w, gx * kern)
    return total


def _smooth_inner(f, g, T, h, n):
    # H(2H-1) int_0^T x^(2H-2) [C_fg(x) + C_gf(x)] dx, C_fg(x) = int_0^(T-x) f(s) g(s+x) ds
    xo, wo = gauss_jacobi_left(n, 2 * h - 2, 0.0, T)
    xi, wi = gauss_legendre(n, -1.0, 1.0)
    total = 0.0
    for x, w in zip(xo, wo):
        L = T - x
        s = 0.5 * L * (xi + 1.0)
        ww = 0.5 * L * wi
        total += w * (np.dot(ww, f(s) * g(s + x)) + np.dot(ww, g(s) * f(s + x)))
    return h * (2 * h - 1) * total


def twisted_inner(f, g, T, H, n_quad=48, tol=1e-8):
    """<f, g>_H = H(2H-1) int int f(s) g(t) |s - t|^(2H-2) ds dt over [0, T]^2."""
    h = as_hurst(H).value
    T = float(T)
    if T <= 0:
        raise DomainError("T must be positive")
    f_step = isinstance(f, StepFunction)
    g_step = isinstance(g, StepFunction)
    if f_step and g_step:
        return _step_step_inner(_clip_step(f, T), _clip_step(g, T), h)
    if g_step:
        f, g = g, f
        f_step, g_step = True, False
    if f_step:
        fs = _clip_step(f, T)
        gc = _as_callable(g)
        v1 = _step_smooth_inner(fs, gc, T, h, n_quad // 2)
        v2 = _step_smooth_inner(fs, gc, T, h, n_quad)
    else:
        fc, gc = _as_callable(f), _as_callable(g)
        v1 = _smooth_inner(fc, gc, T, h, n_quad // 2)
        v2 = _smooth_inner(fc, gc, T, h, n_quad)
    if abs(v2 - v1) > tol * max(1.0, abs(v2)):
        raise QuadratureError(
            f"twisted inner product quadrature did not settle: {v2:.12g} vs {v1:.12g}",
            estimate=v2, error=abs(v2 - v1), tolerance=tol,
        )
    return float(v2)


def _clip_step(f, T):
    bp = np.minimum(f.breakpoints, T)
    keep = np.diff(bp) > 0
    if not np.any(keep):
        return StepFunction(np.array([0.0, T]), np.array([0.0]))
    lo = bp[:-1][keep]
    hi = bp[1:][keep]
    co = f.coefficients[keep]
    # rebuild contiguous breakpoints, inserting zero pieces across gaps
    b, c = [lo[0]], []
    for l, r, v in zip(lo, hi, co):
        if l > b[-1]:
            b.append(l)
            c.append(0.0)
        b.append(r)
        c.append(v)
    return StepFunction(np.array(b), np.array(c))


# --- samplers ----------------------------------------------------------------


def _hurst_and_seed(H, seed):
    hp = as_hurst(H)
    return hp, int(seed)


@lru_cache(maxsize=8)
def _cholesky_factor(n, dt, h, jitter):
    tk = dt * np.arange(1, n + 1)
    C = 0.5 * (tk[:, None] ** (2 * h) + tk[None, :] ** (2 * h) - np.abs(tk[:, None] - tk[None, :]) ** (2 * h))
    if jitter:
        C[np.diag_indices(n)] += jitter * C.diagonal().max()
    try:
        L = linalg.cholesky(C, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise FactorizationError(
            f"covariance matrix of size {n} is not numerically positive definite ({exc}); "
            "retry with a small diagonal jitter, e.g. jitter=1e-12"
        ) from None
    if not np.all(np.isfinite(L)):
        raise FactorizationError("Cholesky factor is not finite; retry with jitter=1e-12")
    L.setflags(write=False)
    return L


def _normals(seed, purpose, size, replicas):
    return np.stack([_rng.stream(seed, purpose, r).standard_normal(size) for r in replicas])


def _rowwise(A, Z):
    # one matrix-vector product per replica, so a replica's values do not
    # depend on how many replicas share the batch
    return np.stack([A @ z for z in Z])


def _sample_exact(grid, h, seed, replicas, jitter):
    n = grid.n_steps
    if n > MAX_EXACT_STEPS:
        raise ConfigurationError(f"exact sampler supports at most {MAX_EXACT_STEPS} steps, got {n}")
    out = np.zeros((len(replicas), n + 1))
    if n == 0:
        return out
    L = _cholesky_factor(n, grid.dt, h, float(jitter))
    Z = _normals(seed, "fbm", n, replicas)
    out[:, 1:] = _rowwise(L, Z)
    return out


def fgn_autocovariance(k, H, dt=1.0):
    """Autocovariance of fractional Gaussian noise at integer lags k."""
    h = as_hurst(H).value
    k = np.abs(np.asarray(k, dtype=float))
    return 0.5 * ((k + 1) ** (2 * h) - 2 * k ** (2 * h) + np.abs(k - 1) ** (2 * h)) * dt ** (2 * h)


@lru_cache(maxsize=16)
def _circulant_sqrt_eigs(n, h):
    gam = fgn_autocovariance(np.arange(n + 1), h)
    c = np.concatenate([gam, gam[-2:0:-1]])
    eig = np.fft.fft(c).real
    floor = -1e-10 * eig.max()
    if eig.min() < floor:
        raise EmbeddingError(f"circulant embedding has a negative eigenvalue {eig.min():.3g}")
    eig = np.clip(eig, 0.0, None)
    out = np.sqrt(eig / len(c))
    out.setflags(write=False)
    return out


def _sample_circulant(grid, h, seed, replicas):
    n = grid.n_steps
    out = np.zeros((len(replicas), n + 1))
    if n == 0:
        return out
    lam = _circulant_sqrt_eigs(n, h)
    m = 2 * n
    W = _normals(seed, "fbm", 2 * m, replicas)
    Wc = W[:, :m] + 1j * W[:, m:]
    X = np.fft.fft(lam * Wc, axis=1)[:, :n].real
    out[:, 1:] = np.cumsum(X, axis=1) * grid.dt ** h
    return out


@lru_cache(maxsize=4)
def _kernel_weights(n, h):
    # W[k-1, j] = k^(H+1/2) [Kc((j+1)/k) - Kc(j/k)], times dt^(H-1/2) at use
    c = _derivative_constant(h)
    W = np.zeros((n, n))
    for k in range(1, n + 1):
        y = np.arange(k + 1) / k
        Kc = _unit_cell_antiderivative(y, h, c)
        W[k - 1, :k] = k ** (h + 0.5) * np.diff(Kc)
    W.setflags(write=False)
    return W


def _sample_kernel(grid, h, seed, replicas):
    n = grid.n_steps
    vals = np.zeros((len(replicas), n + 1))
    bm = np.zeros((len(replicas), n + 1))
    if n == 0:
        return vals, bm
    dB = _normals(seed, "driving_bm", n, replicas) * math.sqrt(grid.dt)
    bm[:, 1:] = np.cumsum(dB, axis=1)
    vals[:, 1:] = _rowwise(_kernel_weights(n, h), dB) * grid.dt ** (h - 0.5)
    return vals, bm


def sample_fbm(grid, H, seed, n_paths, method="circulant", jitter=0.0, first_replica=0):
    """Array of shape (n_paths, n_steps + 1); row r uses replica stream first_replica + r."""
    hp, seed = _hurst_and_seed(H, seed)
    replicas = range(first_replica, first_replica + int(n_paths))
    if method == "exact":
        return _sample_exact(grid, hp.value, seed, replicas, jitter)
    if method == "circulant":
        return _sample_circulant(grid, hp.value, seed, replicas)
    if method == "kernel":
        return _sample_kernel(grid, hp.value, seed, replicas)[0]
    raise ConfigurationError(f"unknown sampler {method!r}")


def generate_fbm_exact(grid, H, seed, replica=0, jitter=0.0):
    """Exact Gaussian sampling through the Cholesky factor of [R(t_i, t_j)].

    Times are measured from grid.t0, which is legitimate because fBm has
    stationary increments.
    """
    hp, seed = _hurst_and_seed(H, seed)
    vals = _sample_exact(grid, hp.value, seed, [replica], jitter)[0]
    return FbmPath(grid, vals, hp, seed, replica=replica)


def generate_fbm_circulant(grid, H, seed, replica=0):
    """Davies-Harte circulant embedding of fractional Gaussian noise."""
    hp, seed = _hurst_and_seed(H, seed)
    vals = _sample_circulant(grid, hp.value, seed, [replica])[0]
    return FbmPath(grid, vals, hp, seed, replica=replica)


def generate_fbm_kernel(grid, H, seed, replica=0):
    """fBm built from a Brownian path through the Volterra kernel.

    The Brownian path is interpolated linearly between nodes, so each value
    is the exact kernel integral of that interpolant.  The Brownian path is
    kept as ``driving_bm``.
    """
    hp, seed = _hurst_and_seed(H, seed)
    vals, bm = _sample_kernel(grid, hp.value, seed, [replica])
    return FbmPath(grid, vals[0], hp, seed, driving_bm=bm[0], replica=replica)


def generate_fbm(grid, H, seed, replica=0, method="circulant"):
    """Production entry point: circulant sampler with exact fallback."""
    if method == "circulant":
        try:
            return generate_fbm_circulant(grid, H, seed, replica)
        except EmbeddingError as exc:
            warnings.warn(f"{exc}; falling back to the exact sampler", RuntimeWarning)
            return generate_fbm_exact(grid, H, seed, replica)
    if method == "exact":
        return generate_fbm_exact(grid, H, seed, replica)
    if method == "kernel":
        return generate_fbm_kernel(grid, H, seed, replica)
    raise ConfigurationError(f"unknown sampler {method!r}")


# --- Wiener integrals --------------------------------------------------------


def _step_wiener(phi, path):
    g = path.grid
    total = 0.0
    for a, b, coef in phi.pieces():
        ia, ib = g.index_of(a), g.index_of(b)
        if ia is None or ib is None:
            raise AlignmentError(
                f"breakpoints {a} and {b} must be nodes of the path grid "
                f"[{g.t0}, {g.t_end}] with spacing {g.dt}"
            )
        total += coef * (path.values[ib] - path.values[ia])
    return total


def _left_sum(f, times, values, stride):
    t = times[::stride]
    v = values[::stride]
    return float(np.dot(f(t[:-1]), np.diff(v)))


def _cell_average_nodes(n, dt, singular_pts, n_gl=4, levels=12):
    # Gauss-Legendre nodes per cell, graded inside cells adjacent to singular points
    xs, ws, cell = [], [], []
    sing = np.asarray(singular_pts, dtype=float)
    for j in range(n):
        a, b = j * dt, (j + 1) * dt
        near_a = np.any(np.abs(sing - a) < 1e-9 * dt)
        near_b = np.any(np.abs(sing - b) < 1e-9 * dt)
        if near_a or near_b:
            e = _graded_edges(a, b, toward_a=near_a, toward_b=near_b, levels=levels)
        else:
            e = np.array([a, b])
        x, w = composite_legendre(e, n_gl)
        xs.append(x)
        ws.append(w / dt)
        cell.append(np.full(len(x), j))
    return np.concatenate(xs), np.concatenate(ws), np.concatenate(cell)


def _kstar_wiener(phi, path, n_quad, tol):
    g = path.grid
    h = path.hurst.value
    if g.t0 != 0.0:
        raise ConfigurationError("the kernel route needs a path starting at t = 0")
    T = g.t_end
    sing = [0.0, T]
    if isinstance(phi, StepFunction):
        sing += [b for b in phi.breakpoints if 0 < b < T]
    x, w, cell = _cell_average_nodes(g.n_steps, g.dt, sing)
    vals = kstar_apply(phi, T, h, x, n_quad=n_quad, tol=tol, method="quadrature")
    avg = np.bincount(cell, weights=w * vals, minlength=g.n_steps)
    return float(np.dot(avg, np.diff(path.driving_bm)))


def wiener_integral(phi, path, method="auto", refine_tol=1e-2, n_quad=16, quad_tol=1e-8,
                    return_error=False):
    """Integral of a deterministic phi against an fBm path.

    * step functions: exact sum of coefficients times path increments;
    * other integrands: left-point Stieltjes sum, checked against the sum on
      the grid coarsened by two (difference must be below ``refine_tol``);
    * ``method="kstar"``: int (K*_H phi) d beta against the driving Brownian
      path, available for paths produced by the kernel sampler.
    """
    if method == "kstar":
        if path.driving_bm is None:
            raise ConfigurationError("the K* route needs a path that carries its driving Brownian motion")
        val = _kstar_wiener(phi, path, n_quad, quad_tol)
        return (val, 0.0) if return_error else val
    if method not in ("auto", "stieltjes"):
        raise ConfigurationError(f"unknown method {method!r}")
    if isinstance(phi, StepFunction):
        val = _step_wiener(phi, path)
        return (val, 0.0) if return_error else val
    f = _as_callable(phi)
    times = path.times
    fine = _left_sum(f, times, path.values, 1)
    if path.grid.n_steps >= 4:
        coarse = _left_sum(f, times[: path.grid.n_steps // 2 * 2 + 1], path.values[: path.grid.n_steps // 2 * 2 + 1], 2)
        fine_even = _left_sum(f, times[: path.grid.n_steps // 2 * 2 + 1], path.values[: path.grid.n_steps // 2 * 2 + 1], 1)
        err = abs(fine_even - coarse)
    else:
        err = math.inf
    if err > refine_tol:
        raise NumericalError(
            f"Stieltjes sum failed the refinement check: change {err:.3g} on halving the grid "
            f"exceeds {refine_tol:.3g}"
        )
    return (fine, err) if return_error else fine
