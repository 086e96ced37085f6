"""Truncated infinite-dimensional fBm, stochastic convolutions and their moments.

Each mode k of the noise is an independent scalar fBm scaled by
sqrt(q_k) * phi_k and filtered through exp(-lambda_k t).  Two samplers are
offered per mode:

* ``"exact"``: the one-step integrals xi_j = int_{t_j}^{t_j+dt}
  exp(-lambda (t_j + dt - s)) d beta^H(s) form a stationary Gaussian
  sequence whose autocovariance is computed by quadrature; the sequence is
  drawn by circulant embedding and pushed through the exact recursion
  z_{j+1} = exp(-lambda dt) z_j + xi_j.  The nodes are then exact in law
  for any dt, stiff modes included.
* ``"pathwise"``: an explicit fBm path on a refined grid is convolved with
  exponential weights (``convolve_mode``).
"""
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import linalg, signal
from scipy.special import binom

from . import rng as _rng
from ._quad import gauss_jacobi_left, gauss_jacobi_right, gauss_legendre
from .errors import ConfigurationError, DomainError, EmbeddingError, QuadratureError
from .fbm import FbmPath, TimeGrid, _rowwise, generate_fbm
from .hurst import HurstParam, as_hurst
from .specfun import gamma

VARIANTS = ("A1", "A2", "A3", "A4")
STIFF_LIMIT = 50.0


@dataclass
class ModeSpectrum:
    """Modes (m, n) of the square with eigenvalues and diagonal noise weights."""

    modes: np.ndarray
    lam: np.ndarray
    q_diag: np.ndarray
    phi_diag: np.ndarray

    def __post_init__(self):
        self.modes = np.asarray(self.modes, dtype=int).reshape(-1, 2)
        self.lam = np.asarray(self.lam, dtype=float)
        self.q_diag = np.asarray(self.q_diag, dtype=float)
        self.phi_diag = np.asarray(self.phi_diag, dtype=float)
        K = len(self.modes)
        if K == 0:
            raise DomainError("a mode spectrum needs at least one mode")
        for name in ("lam", "q_diag", "phi_diag"):
            if getattr(self, name).shape != (K,):
                raise ConfigurationError(f"{name} must have one entry per mode")
        if np.any(self.modes < 1):
            raise ConfigurationError("mode indices are positive integers")
        base = (self.modes ** 2).sum(axis=1).astype(float) ** 2
        if np.any(self.lam < base * (1 - 1e-12)):
            raise ConfigurationError("eigenvalues must satisfy lambda >= (m^2 + n^2)^2")
        if np.any(np.diff(self.lam) < 0):
            raise ConfigurationError("modes must be sorted by nondecreasing eigenvalue")
        if np.any(self.q_diag < 0) or np.any(self.phi_diag < 0):
            raise ConfigurationError("noise weights must be nonnegative")

    @classmethod
    def square(cls, N, q=None, phi=None):
        """All N*N modes of the square with lambda = (m^2 + n^2)^2.

        ``q`` and ``phi`` are arrays in sorted order or callables of the
        1-based sorted index; both default to 1.
        """
        N = int(N)
        if N < 1:
            raise ConfigurationError("truncation N must be positive")
        m, n = np.meshgrid(np.arange(1, N + 1), np.arange(1, N + 1), indexing="ij")
        m, n = m.ravel(), n.ravel()
        k2 = m * m + n * n
        order = np.lexsort((n, m, k2))
        modes = np.stack([m[order], n[order]], axis=1)
        lam = k2[order].astype(float) ** 2
        idx = np.arange(1, len(lam) + 1, dtype=float)

        def weights(w):
            if w is None:
                return np.ones_like(lam)
            if callable(w):
                return np.asarray(w(idx), dtype=float) * np.ones_like(lam)
            return np.asarray(w, dtype=float)

        return cls(modes, lam, weights(q), weights(phi))

    @property
    def K(self):
        return len(self.lam)

    @property
    def N(self):
        return int(self.modes.max())

    @property
    def lambda1(self):
        return float(self.lam[0])

    @property
    def k2(self):
        """m^2 + n^2 per mode (equal to sqrt(lambda) in the canonical model)."""
        return (self.modes ** 2).sum(axis=1).astype(float)

    @property
    def noise_scale(self):
        return np.sqrt(self.q_diag) * self.phi_diag

    def single(self, k):
        return ModeSpectrum(self.modes[k:k + 1], self.lam[k:k + 1], self.q_diag[k:k + 1], self.phi_diag[k:k + 1])


@dataclass
class NoiseAssumption:
    variant: str
    spectrum: ModeSpectrum
    tail_exponent: Optional[float] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"assumption variant must be one of {VARIANTS}, got {self.variant!r}")
        sp = self.spectrum
        ones_q = np.all(sp.q_diag == 1.0)
        ones_phi = np.all(sp.phi_diag == 1.0)
        v = self.variant
        if v == "A1" and not ones_phi:
            raise ConfigurationError("A1 requires phi_diag == 1")
        if v in ("A2", "A3") and not ones_q:
            raise ConfigurationError(f"{v} requires q_diag == 1")
        if v == "A4" and not (ones_q and ones_phi):
            raise ConfigurationError("A4 requires q_diag == phi_diag == 1")

    @classmethod
    def a4(cls, N):
        return cls("A4", ModeSpectrum.square(N))


@dataclass(frozen=True)
class AssumptionReport:
    variant: str
    trace_value: Optional[float]
    tail_bound: Optional[float]
    satisfied: bool
    decay_exponent: Optional[float] = None

    def to_dict(self):
        return {
            "variant": self.variant,
            "trace_value": self.trace_value,
            "tail_bound": self.tail_bound,
            "satisfied": self.satisfied,
            "decay_exponent": self.decay_exponent,
        }


def _tail_certificate(w, exponent=None):
    """Integral-test bound on sum_{i > K} w_i from a power envelope C i^-p.

    The exponent is fitted on the upper half of the sequence unless given;
    C is the smallest constant for which the envelope dominates that half.
    """
    K = len(w)
    i = np.arange(1, K + 1, dtype=float)
    lo = K // 2
    tail_i, tail_w = i[lo:], w[lo:]
    if np.all(tail_w == 0):
        return 0.0, math.inf
    pos = tail_w > 0
    if exponent is None:
        if pos.sum() < 2:
            return math.inf, 0.0
        p = -np.polyfit(np.log(tail_i[pos]), np.log(tail_w[pos]), 1)[0]
    else:
        p = float(exponent)
    if p <= 1.0 + 1e-6:
        return math.inf, p
    C = float(np.max(tail_w * tail_i ** p))
    return C * K ** (1.0 - p) / (p - 1.0), float(p)


def check_assumption(noise):
    """Truncated trace (A1) or Hilbert-Schmidt sum (A2, A3) with a tail bound."""
    sp = noise.spectrum
    if sp.K == 0:
        raise DomainError("empty spectrum")
    if noise.variant == "A4":
        return AssumptionReport("A4", None, None, True)
    w = sp.q_diag if noise.variant == "A1" else sp.phi_diag ** 2
    trace = float(np.sum(w))
    tail, p = _tail_certificate(w, noise.tail_exponent)
    ok = math.isfinite(tail)
    return AssumptionReport(noise.variant, trace, tail if ok else None, ok, p if math.isfinite(p) else None)


@dataclass
class ConvolutionSample:
    """Mode coefficients of a stochastic convolution on a time grid.

    ``z_coeffs`` has shape (K, n_steps + 1).
    """

    grid: TimeGrid
    z_coeffs: np.ndarray
    hurst: HurstParam
    seed: int
    spectrum: Optional[ModeSpectrum] = None
    replica: int = 0
    tail_bias: float = 0.0
    method: str = "exact"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.z_coeffs = np.asarray(self.z_coeffs, dtype=float)
        if self.z_coeffs.ndim != 2 or self.z_coeffs.shape[1] != self.grid.n_steps + 1:
            raise ConfigurationError("z_coeffs must have shape (K, n_steps + 1)")

    @property
    def times(self):
        return self.grid.times

    def time_major(self):
        """Coefficients as an (n_steps + 1, K) array."""
        return self.z_coeffs.T

    def slice(self, start, stop=None):
        """Sub-sample on nodes start..stop (inclusive) of the grid."""
        stop = self.grid.n_steps if stop is None else stop
        g = TimeGrid(self.grid.t0 + start * self.grid.dt, self.grid.dt, stop - start)
        return ConvolutionSample(g, self.z_coeffs[:, start:stop + 1], self.hurst, self.seed,
                                 self.spectrum, self.replica, self.tail_bias, self.method, dict(self.meta))


# --- one-step autocovariance --------------------------------------------------

_NQ = 24
_FAR_LAG = 8
_FAR_TERMS = 8


def _one_step_profile(x, lam, dt):
    # A(x) = exp(-lam x) (1 - exp(-2 lam (dt - x))) / (2 lam) for 0 <= x <= dt
    if lam == 0.0:
        return dt - x
    return np.exp(-lam * x) * (-np.expm1(-2.0 * lam * (dt - x))) / (2.0 * lam)


def _profile_edges(lam, dt):
    scale = dt / 2 if lam == 0 else min(dt / 2, 1.0 / lam)
    left = [0.0]
    w = scale
    while left[-1] + w < dt / 2:
        left.append(left[-1] + w)
        w *= 2
    left.append(dt / 2)
    right = [dt - e for e in reversed(left[:-1])]
    return np.array(left + right)


@lru_cache(maxsize=4096)
def one_step_autocovariance(lam, dt, H, n_lags):
    """r(m) = Cov(xi_j, xi_{j+m}) for m = 0..n_lags-1 (stationary one-step integrals)."""
    h = as_hurst(H).value
    lam, dt, n_lags = float(lam), float(dt), int(n_lags)
    p = 2 * h - 2
    edges = _profile_edges(lam, dt)
    panels = list(zip(edges[:-1], edges[1:]))
    r = np.zeros(n_lags)

    # lag 0: 2 int_0^dt A(x) x^p dx
    tot = 0.0
    for i, (a, b) in enumerate(panels):
        if i == 0:
            x, w = gauss_jacobi_left(_NQ, p, a, b)
            tot += np.dot(w, _one_step_profile(x, lam, dt))
        else:
            x, w = gauss_legendre(_NQ, a, b)
            tot += np.dot(w, _one_step_profile(x, lam, dt) * x ** p)
    r[0] = 2 * tot
    if n_lags == 1:
        return _freeze(h * (2 * h - 1) * r)

    # lag 1: int_0^dt A(x) ((dt + x)^p + (dt - x)^p) dx
    tot = 0.0
    for i, (a, b) in enumerate(panels):
        x, w = gauss_legendre(_NQ, a, b)
        tot += np.dot(w, _one_step_profile(x, lam, dt) * (dt + x) ** p)
        if i == len(panels) - 1:
            x, w = gauss_jacobi_right(_NQ, p, a, b)
            tot += np.dot(w, _one_step_profile(x, lam, dt))
        else:
            tot += np.dot(w, _one_step_profile(x, lam, dt) * (dt - x) ** p)
    r[1] = tot

    # middle lags by direct quadrature
    mid = np.arange(2, min(n_lags, _FAR_LAG))
    if len(mid):
        xs, ws = [], []
        for a, b in panels:
            x, w = gauss_legendre(_NQ, a, b)
            xs.append(x)
            ws.append(w)
        x = np.concatenate(xs)
        wA = np.concatenate(ws) * _one_step_profile(x, lam, dt)
        md = mid[:, None] * dt
        r[mid] = (((md + x) ** p + (md - x) ** p) @ wA)

    # far lags: (m dt +- x)^p expanded in x, using even moments of A
    far = np.arange(_FAR_LAG, n_lags)
    if len(far):
        xs, ws = [], []
        for a, b in panels:
            x, w = gauss_legendre(_NQ, a, b)
            xs.append(x)
            ws.append(w)
        x = np.concatenate(xs)
        wA = np.concatenate(ws) * _one_step_profile(x, lam, dt)
        md = far * dt
        acc = np.zeros(len(far))
        for k in range(_FAR_TERMS):
            mom = np.dot(wA, x ** (2 * k))
            acc += 2.0 * binom(p, 2 * k) * md ** (p - 2 * k) * mom
        r[far] = acc
    return _freeze(h * (2 * h - 1) * r)


def _freeze(a):
    a.setflags(write=False)
    return a


@lru_cache(maxsize=1024)
def _xi_sampler(lam, dt, h, n):
    """('circ', sqrt eigenvalues) or ('chol', lower factor) for n one-step integrals."""
    r = one_step_autocovariance(lam, dt, h, n)
    if n == 1:
        return "chol", np.array([[math.sqrt(r[0])]])
    c = np.concatenate([r, r[-2:0:-1]])
    eig = np.fft.fft(c).real
    if eig.min() >= -1e-10 * eig.max():
        out = np.sqrt(np.clip(eig, 0.0, None) / len(c))
        out.setflags(write=False)
        return "circ", out
    if n > 4096:
        raise EmbeddingError(
            f"circulant embedding of the one-step covariance (lambda={lam}, dt={dt}) "
            f"has negative eigenvalue {eig.min():.3g}"
        )
    try:
        L = linalg.cholesky(linalg.toeplitz(r), lower=True)
    except linalg.LinAlgError:
        L = linalg.cholesky(linalg.toeplitz(r) + 1e-14 * r[0] * np.eye(n), lower=True)
    return "chol", L


def _draw_xi(lam, dt, h, n, seed, purpose, mode, replicas):
    kind, fac = _xi_sampler(float(lam), float(dt), h, int(n))
    R = len(replicas)
    if kind == "circ":
        m = len(fac)
        Z = np.stack([_rng.stream(seed, purpose, mode, r).standard_normal(2 * m) for r in replicas])
        Wc = Z[:, :m] + 1j * Z[:, m:]
        return np.fft.fft(fac * Wc, axis=1)[:, :n].real
    Z = np.stack([_rng.stream(seed, purpose, mode, r).standard_normal(n) for r in replicas])
    return _rowwise(fac, Z) if R else np.zeros((0, n))


def _mode_paths(lam, dt, h, n, seed, purpose, mode, replicas):
    """(R, n+1) exact-in-law samples of int_0^t exp(-lam (t-s)) d beta^H(s)."""
    out = np.zeros((len(replicas), n + 1))
    if n == 0:
        return out
    xi = _draw_xi(lam, dt, h, n, seed, purpose, mode, replicas)
    decay = math.exp(-lam * dt)
    out[:, 1:] = signal.lfilter([1.0], [1.0, -decay], xi, axis=1)
    return out


# --- pathwise convolution ------------------------------------------------------


def _phi1(x):
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    big = np.abs(x) > 1e-8
    out[big] = -np.expm1(-x[big]) / x[big]
    out[~big] = 1.0 - x[~big] / 2
    return out


def convolve_mode(lambda_k, path, substeps=1):
    """Pathwise z(t_j) = int_0^t_j exp(-lambda (t_j - s)) d beta^H(s).

    ``path`` lives on a grid ``substeps`` times finer than the output grid.
    On each fine cell the path is taken linear, which makes the cell
    integral exactly exp(-lambda (t - s_{i+1})) * phi1(lambda ds) * d beta.
    """
    lam = float(lambda_k)
    if lam < 0:
        raise DomainError("lambda_k must be nonnegative")
    substeps = int(substeps)
    n_fine = path.grid.n_steps
    if substeps < 1 or n_fine % substeps:
        raise ConfigurationError("path length must be a multiple of substeps")
    ds = path.grid.dt
    dt = ds * substeps
    if lam * dt > STIFF_LIMIT:
        warnings.warn(f"stiff mode: lambda*dt = {lam * dt:.3g} > {STIFF_LIMIT}; the semigroup factor "
                      "underflows and is flushed to zero", RuntimeWarning)
    db = np.diff(path.values)
    if lam == 0.0:
        return path.values[::substeps].copy()
    # weights of the fine increments inside one coarse step
    j = np.arange(substeps)
    wts = np.exp(-lam * ds * (substeps - 1 - j)) * _phi1(lam * ds)
    xi = db.reshape(-1, substeps) @ wts
    decay = math.exp(-lam * dt)
    z = np.zeros(n_fine // substeps + 1)
    z[1:] = signal.lfilter([1.0], [1.0, -decay], xi)
    return z


# --- fields ------------------------------------------------------------------------


def _require_assumption(noise):
    rep = check_assumption(noise)
    if not rep.satisfied:
        raise ConfigurationError(
            f"noise assumption {noise.variant} is not certified: trace {rep.trace_value}, "
            f"fitted decay exponent {rep.decay_exponent}; refusing to run"
        )
    return rep


def sample_convolution(noise, H, grid, seed, n_replicas, keep=None, first_replica=0,
                       burn_in_steps=0, purpose="convolution"):
    """Batch of convolution samples, shape (R, len(keep), K).

    Replica r is bit-identical to ``convolve_field(..., replica=r)``.
    ``keep`` selects node indices of ``grid`` (default: all nodes).
    """
    _require_assumption(noise)
    h = as_hurst(H).value
    sp = noise.spectrum
    keep = np.arange(grid.n_steps + 1) if keep is None else np.asarray(keep, dtype=int)
    replicas = list(range(first_replica, first_replica + int(n_replicas)))
    out = np.empty((len(replicas), len(keep), sp.K))
    n_total = grid.n_steps + burn_in_steps
    scale = sp.noise_scale
    for k in range(sp.K):
        z = _mode_paths(sp.lam[k], grid.dt, h, n_total, int(seed), purpose, k, replicas)
        out[:, :, k] = scale[k] * z[:, burn_in_steps + keep]
    return out


def convolve_field(noise, H, grid, seed, replica=0, method="exact", substeps=4):
    """z(t) = int_0^t S(t - s) Phi dB^H(s) on ``grid`` (times measured from grid.t0)."""
    hp = as_hurst(H)
    sp = noise.spectrum
    if method == "exact":
        z = sample_convolution(noise, hp, grid, seed, 1, first_replica=replica)[0].T
    elif method == "pathwise":
        _require_assumption(noise)
        fine = TimeGrid(0.0, grid.dt / substeps, grid.n_steps * substeps)
        z = np.empty((sp.K, grid.n_steps + 1))
        for k in range(sp.K):
            # one fBm per mode; the replica keys the stream, the mode shifts it
            path = generate_fbm(fine, hp, _mode_seed(seed, k), replica=replica)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                z[k] = sp.noise_scale[k] * convolve_mode(sp.lam[k], path, substeps)
    else:
        raise ConfigurationError(f"unknown convolution method {method!r}")
    return ConvolutionSample(grid, z, hp, int(seed), sp, replica, 0.0, method)


def _mode_seed(seed, k):
    # distinct master seed per mode for the pathwise route
    return int(np.random.SeedSequence(entropy=int(seed), spawn_key=(_rng.PURPOSES["convolution"], k)).generate_state(2, np.uint32).view(np.uint64)[0])


def _burn_in_steps(noise, grid, burn_in):
    lam1 = noise.spectrum.lambda1
    need = 10.0 / lam1
    if burn_in < need * (1 - 1e-12):
        raise ConfigurationError(f"burn_in {burn_in} is too short; at least 10/lambda_1 = {need:.6g} is required")
    return int(math.ceil(burn_in / grid.dt - 1e-9))


def stationary_tail_bias(noise, H, burn_in, weights=None):
    """Bound on |E|Z|^2 - E|Z_burn|^2| for a burn-in of the given length."""
    sp = noise.spectrum
    var = stationary_mode_variance(sp.lam, H) * sp.noise_scale ** 2
    if weights is not None:
        var = var * weights
    return float(3.0 * math.exp(-sp.lambda1 * burn_in) * var.sum())


def stationary_Z(noise, H, grid, burn_in, seed, replica=0):
    """Stationary convolution on ``grid``: started from zero burn_in before grid.t0."""
    hp = as_hurst(H)
    nb = _burn_in_steps(noise, grid, burn_in)
    z = sample_convolution(noise, hp, grid, seed, 1, first_replica=replica,
                           burn_in_steps=nb, purpose="stationary")[0].T
    bias = stationary_tail_bias(noise, hp, nb * grid.dt)
    return ConvolutionSample(grid, z, hp, int(seed), noise.spectrum, replica, bias, "exact",
                             {"burn_in": nb * grid.dt})


def sample_stationary(noise, H, grid, burn_in, seed, n_replicas, keep=None, first_replica=0):
    """Batch version of ``stationary_Z``: shape (R, len(keep), K)."""
    nb = _burn_in_steps(noise, grid, burn_in)
    return sample_convolution(noise, H, grid, seed, n_replicas, keep, first_replica, nb, "stationary")


# --- second moments ----------------------------------------------------------------


def _reduced_integral(X, h, n):
    # int_0^X y^(2H-2) e^(-y) (1 - e^(-2(X - y))) dy
    p = 2 * h - 2
    a = min(X, 1.0)
    x, w = gauss_jacobi_left(n, p, 0.0, a)
    tot = np.dot(w, np.exp(-x) * -np.expm1(-2 * (X - x)))
    lo = a
    width = 1.0
    stop = min(X, 80.0)
    while lo < stop:
        hi = min(lo + width, stop)
        x, w = gauss_legendre(n, lo, hi)
        tot += np.dot(w, x ** p * np.exp(-x) * -np.expm1(-2 * (X - x)))
        lo = hi
        width *= 2
    return tot


def reduced_integral(X, H, n_quad=32, tol=1e-11):
    """int_0^X y^(2H-2) e^-y (1 - e^-2(X-y)) dy with a doubled-order error check."""
    h = as_hurst(H).value
    if X <= 0:
        return 0.0
    v1 = _reduced_integral(X, h, n_quad)
    v2 = _reduced_integral(X, h, 2 * n_quad)
    if abs(v2 - v1) > tol * max(abs(v2), 1e-300):
        raise QuadratureError(f"reduced integral at X={X} did not settle", estimate=v2,
                              error=abs(v2 - v1), tolerance=tol)
    return float(v2)


def mode_variance(lam, t, H, isometry_constant=True, n_quad=32):
    """E z_k(t)^2 for a unit-weight mode."""
    hp = as_hurst(H)
    h = hp.value
    if t <= 0:
        return 0.0
    if lam == 0:
        v = t ** (2 * h)
        return v if isometry_constant else v / hp.alpha_H
    v = lam ** (-2 * h) * reduced_integral(lam * t, h, n_quad)
    return hp.alpha_H * v if isometry_constant else v


def stationary_mode_variance(lam, H):
    """H Gamma(2H) lambda^(-2H), the variance of the stationary mode process."""
    h = as_hurst(H).value
    return h * gamma(2 * h) * np.asarray(lam, dtype=float) ** (-2 * h)


def mean_square_It(noise, H, t, n_quad=32, isometry_constant=True, norm_power=0.0):
    """E|z(t)|^2 summed over modes from the reduced single-integral form.

    With ``isometry_constant`` the factor H(2H - 1) of the Wiener isometry is
    included, which is what Monte Carlo estimates converge to.  Setting it
    to False reproduces the bare reduced sum.  ``norm_power`` weights mode k
    by lambda_k^norm_power (0.5 gives the H^1_0 norm).
    """
    if t <= 0:
        return 0.0
    sp = noise.spectrum
    w = sp.noise_scale ** 2 * sp.lam ** norm_power
    total = 0.0
    for lam, wk in zip(sp.lam, w):
        if wk:
            total += wk * mode_variance(lam, t, H, isometry_constant, n_quad)
    return float(total)


def mean_square_Z(noise, H, norm_power=0.5):
    """Exact E|Z|^2 of the stationary convolution with mode weights lambda^norm_power."""
    sp = noise.spectrum
    return float(np.sum(sp.noise_scale ** 2 * sp.lam ** norm_power * stationary_mode_variance(sp.lam, H)))
