"""Divergence-free spectral fields on the square and the fluid operators.

Fields are stream functions psi = sum psi_mn sin(m x) sin(n y) on the
reference square [0, pi]^2 (an affine image of [-pi, pi]^2 that halves all
lengths; see README), with velocity u = (d_y psi, -d_x psi).  The basis
vectors e_mn = curl(sin(mx) sin(ny)) / |curl(...)| are L^2-orthonormal, and
the modal coefficient of e_mn is a_mn = psi_mn (pi/2) sqrt(m^2 + n^2).

Sobolev scale: |u|_s^2 = sum (m^2 + n^2)^s a_mn^2, so s = 0 is the velocity
L^2 norm, s = 1 the H^1_0 norm and s = 2 the V norm |A^(1/2) u| for the
model eigenvalues lambda_mn = (m^2 + n^2)^2.

Grid quantities live on the M x M midpoint grid x_i = (i + 1/2) pi / M.  All
products met by the trilinear form are cosine polynomials of degree <= 3N,
which the midpoint rule integrates exactly when 2M > 3N.  The viscous term
is not polynomial; the default M = 3N keeps it converged to roughly machine
precision for moderate fields, and M >= 3N/2 is enforced as a hard floor.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DomainError
from .noise import ModeSpectrum

SOBOLEV_RANGE = (-2.0, 3.0)


@dataclass(frozen=True)
class PhysParams:
    mu0: float
    epsilon: float
    alpha: float
    mu1: float = 1.0

    def __post_init__(self):
        if not self.mu0 > 0:
            raise ConfigurationError(f"mu0 must be positive, got {self.mu0}")
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if not (0 < self.alpha <= 1) and not (self.alpha == 0 and getattr(self, "_limit", False)):
            raise ConfigurationError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.mu1 != 1.0:
            raise ConfigurationError("mu1 is fixed to 1")

    @classmethod
    def linear_limit(cls, mu0, epsilon=1.0):
        """The alpha -> 0 surrogate: constant viscosity 2 mu0."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "_limit", True)
        object.__setattr__(obj, "mu0", float(mu0))
        object.__setattr__(obj, "epsilon", float(epsilon))
        object.__setattr__(obj, "alpha", 0.0)
        object.__setattr__(obj, "mu1", 1.0)
        obj.__post_init__()
        return obj

    def to_dict(self):
        return {"mu0": self.mu0, "epsilon": self.epsilon, "alpha": self.alpha, "mu1": self.mu1}


@dataclass(frozen=True)
class SpectralField:
    """Stream-function coefficients psi[m-1, n-1] of a divergence-free field."""

    psi: np.ndarray

    def __post_init__(self):
        psi = np.array(self.psi, dtype=float)
        if psi.ndim != 2 or psi.shape[0] != psi.shape[1] or psi.shape[0] < 1:
            raise ConfigurationError("psi must be a square N x N array")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)

    @property
    def N(self):
        return self.psi.shape[0]

    @classmethod
    def zeros(cls, N):
        return cls(np.zeros((N, N)))

    @classmethod
    def single_mode(cls, N, m, n, amplitude=1.0):
        psi = np.zeros((N, N))
        psi[m - 1, n - 1] = amplitude
        return cls(psi)

    @classmethod
    def random(cls, N, rng, decay=2.0, norm=None):
        """Gaussian coefficients with psi_mn ~ (m^2 + n^2)^-decay.

        With ``norm`` the field is rescaled to that velocity L^2 norm.
        """
        k = np.arange(1, N + 1)
        k2 = k[:, None] ** 2 + k[None, :] ** 2
        psi = rng.standard_normal((N, N)) * k2 ** (-float(decay))
        f = cls(psi)
        if norm is not None:
            cur = norm_sobolev(f, 0.0)
            f = cls(psi * (norm / cur if cur > 0 else 0.0))
        return f

    @classmethod
    def from_modal(cls, a, spectrum):
        N = spectrum.N
        psi = np.zeros((N, N))
        m, n = spectrum.modes[:, 0], spectrum.modes[:, 1]
        psi[m - 1, n - 1] = np.asarray(a, dtype=float) / modal_scale(spectrum)
        return cls(psi)

    def modal(self, spectrum):
        m, n = spectrum.modes[:, 0], spectrum.modes[:, 1]
        if spectrum.N > self.N:
            raise ConfigurationError("spectrum is larger than the field truncation")
        return self.psi[m - 1, n - 1] * modal_scale(spectrum)

    def __add__(self, other):
        return SpectralField(self.psi + other.psi)

    def __sub__(self, other):
        return SpectralField(self.psi - other.psi)

    def scaled(self, c):
        return SpectralField(c * self.psi)


def modal_scale(spectrum):
    """(pi/2) sqrt(m^2 + n^2): factor from psi_mn to the orthonormal coefficient."""
    return 0.5 * math.pi * np.sqrt(spectrum.k2)


def _k2_grid(N):
    k = np.arange(1, N + 1, dtype=float)
    return k[:, None] ** 2 + k[None, :] ** 2


def norm_sobolev(u, s):
    """(sum (m^2 + n^2)^(s+1) |psi_mn|^2 pi^2/4)^(1/2) for s in [-2, 3]."""
    s = float(s)
    if not (SOBOLEV_RANGE[0] <= s <= SOBOLEV_RANGE[1]):
        raise DomainError(f"Sobolev index must lie in {list(SOBOLEV_RANGE)}, got {s}")
    k2 = _k2_grid(u.N)
    return float(math.sqrt(0.25 * math.pi ** 2 * np.sum(k2 ** (s + 1) * u.psi ** 2)))


def modal_norm(a, spectrum, s):
    """Sobolev norm of modal coefficients (last axis indexes modes)."""
    return np.sqrt(np.sum(spectrum.k2 ** s * np.asarray(a) ** 2, axis=-1))


def dual_norm(f, spectrum, s=2.0):
    """Norm of a functional with coefficients f_k = <f, e_k> in the dual of |.|_s."""
    return np.sqrt(np.sum(np.asarray(f) ** 2 / spectrum.k2 ** s, axis=-1))


def semigroup_apply(u, t, spectrum):
    """S(t) u = exp(-t A) u, mode by mode."""
    if t < 0:
        raise DomainError("semigroup time must be nonnegative")
    a = u.modal(spectrum)
    return SpectralField.from_modal(np.exp(-spectrum.lam * t) * a, spectrum)


# --- constitutive law --------------------------------------------------------------


def viscosity_mu(e, p):
    """mu = 2 mu0 (eps + |e|^2)^(-alpha/2) with |e|^2 = sum_ij e_ij^2.

    ``e`` has shape (2, 2, ...).
    """
    e = np.asarray(e)
    mag2 = np.sum(e * e, axis=(0, 1))
    return 2.0 * p.mu0 * (p.epsilon + mag2) ** (-0.5 * p.alpha)


def constitutive_F(s, p):
    """F(s) = 2 mu0 (eps + |s|^2)^(-alpha/2) s for tensors of shape (2, 2, ...)."""
    s = np.asarray(s, dtype=float)
    return viscosity_mu(s, p) * s


def df_bound(s, p):
    """Upper bound 2 mu0 (eps + |s|^2)^(-alpha/2) sqrt(4 + 12/eps^2) on |DF(s)|."""
    s = np.asarray(s, dtype=float)
    return viscosity_mu(s, p) * math.sqrt(4.0 + 12.0 / p.epsilon ** 2)


# --- workspace --------------------------------------------------------------------


class GridWorkspace:
    """Collocation matrices for an N x N truncation on an M x M midpoint grid.

    Holds no mutable state besides the matrices, but callers should still
    keep one workspace per worker.
    """

    def __init__(self, N, M=None, spectrum=None):
        N = int(N)
        if M is None:
            M = 3 * N
        M = int(M)
        if 2 * M < 3 * N:
            raise ConfigurationError(f"dealiasing requires M >= 3N/2 = {1.5 * N:g}, got M={M}")
        self.N = N
        self.M = M
        self.spectrum = spectrum if spectrum is not None else ModeSpectrum.square(N)
        if self.spectrum.N != N or self.spectrum.K != N * N:
            raise ConfigurationError("workspace spectrum must contain all N x N modes")
        self.x = (np.arange(M) + 0.5) * math.pi / M
        k = np.arange(1, N + 1, dtype=float)
        self.S = np.sin(np.outer(self.x, k))
        self.C = np.cos(np.outer(self.x, k))
        self.area = (math.pi / M) ** 2
        self.mm = k[:, None] * np.ones((1, N))
        self.nn = np.ones((N, 1)) * k[None, :]
        sp = self.spectrum
        self._im = sp.modes[:, 0] - 1
        self._in = sp.modes[:, 1] - 1
        self._scale = modal_scale(sp)

    @property
    def exact_trilinear(self):
        return 2 * self.M > 3 * self.N

    # coefficient layout conversions (batched over leading axes)
    def psi_from_modal(self, a):
        a = np.asarray(a, dtype=float)
        psi = np.zeros(a.shape[:-1] + (self.N, self.N))
        psi[..., self._im, self._in] = a / self._scale
        return psi

    def modal_from_psi(self, psi):
        return psi[..., self._im, self._in] * self._scale

    def velocity(self, psi):
        S, C = self.S, self.C
        u1 = S @ (psi * self.nn) @ C.T
        u2 = -(C @ (psi * self.mm) @ S.T)
        return u1, u2

    def gradients(self, psi):
        """(u1, u2, d1u1, d2u1, d1u2, d2u2) on the grid."""
        S, C = self.S, self.C
        mm, nn = self.mm, self.nn
        u1 = S @ (psi * nn) @ C.T
        u2 = -(C @ (psi * mm) @ S.T)
        d1u1 = C @ (psi * mm * nn) @ C.T
        d2u1 = -(S @ (psi * nn * nn) @ S.T)
        d1u2 = S @ (psi * mm * mm) @ S.T
        return u1, u2, d1u1, d2u1, d1u2, -d1u1

    def deformation(self, psi):
        _, _, d1u1, d2u1, d1u2, d2u2 = self.gradients(psi)
        e12 = 0.5 * (d2u1 + d1u2)
        return np.stack([np.stack([d1u1, e12]), np.stack([e12, d2u2])])

    def _test_vector(self, f1, f2):
        # <f, e_k> for a grid vector field f
        S, C = self.S, self.C
        a = self.area * (self.nn * (S.T @ f1 @ C) - self.mm * (C.T @ f2 @ S))
        return a[..., self._im, self._in] / self._scale

    def B_modal(self, a):
        """<B(u), e_k> for modal coefficients a (batched)."""
        psi = self.psi_from_modal(a)
        u1, u2, d1u1, d2u1, d1u2, d2u2 = self.gradients(psi)
        f1 = u1 * d1u1 + u2 * d2u1
        f2 = u1 * d1u2 + u2 * d2u2
        return self._test_vector(f1, f2)

    def N_modal(self, a, p):
        """<N(u), e_k> for modal coefficients a (batched)."""
        psi = self.psi_from_modal(a)
        _, _, d1u1, d2u1, d1u2, _ = self.gradients(psi)
        e11 = d1u1
        e12 = 0.5 * (d2u1 + d1u2)
        if p.alpha == 0:
            mu = 2.0 * p.mu0
        else:
            mu = 2.0 * p.mu0 * (p.epsilon + 2 * e11 * e11 + 2 * e12 * e12) ** (-0.5 * p.alpha)
        S, C = self.S, self.C
        g = self.area * (2 * self.mm * self.nn * (C.T @ (mu * e11) @ C)
                         + (self.mm ** 2 - self.nn ** 2) * (S.T @ (mu * e12) @ S))
        return g[..., self._im, self._in] / self._scale

    def b(self, au, av, aw):
        """Trilinear form b(u, v, w) for modal coefficient vectors."""
        u1, u2 = self.velocity(self.psi_from_modal(au))
        _, _, d1v1, d2v1, d1v2, d2v2 = self.gradients(self.psi_from_modal(av))
        w1, w2 = self.velocity(self.psi_from_modal(aw))
        integrand = u1 * (d1v1 * w1 + d1v2 * w2) + u2 * (d2v1 * w1 + d2v2 * w2)
        return self.area * np.sum(integrand, axis=(-2, -1))


def _check_ws(u, ws):
    if u.N != ws.N:
        raise ConfigurationError(f"field truncation {u.N} does not match workspace N={ws.N}")


def deformation_tensor(u, ws):
    """Rate-of-deformation tensor e_ij(u) on the grid, shape (2, 2, M, M)."""
    _check_ws(u, ws)
    return ws.deformation(u.psi)


def divergence(u, ws):
    """d1 u1 + d2 u2 on the grid (zero up to rounding)."""
    _check_ws(u, ws)
    _, _, d1u1, _, _, d2u2 = ws.gradients(u.psi)
    return d1u1 + d2u2


def operator_N(u, p, ws):
    """Coefficients <N(u), e_k>, k in spectrum order."""
    _check_ws(u, ws)
    return ws.N_modal(u.modal(ws.spectrum), p)


def operator_B(u, ws):
    """Coefficients <B(u), e_k> = b(u, u, e_k), k in spectrum order."""
    _check_ws(u, ws)
    return ws.B_modal(u.modal(ws.spectrum))


def trilinear_b(u, v, w, ws):
    """b(u, v, w) = sum_ij int u_i (d_i v_j) w_j."""
    for f in (u, v, w):
        _check_ws(f, ws)
    sp = ws.spectrum
    return float(ws.b(u.modal(sp), v.modal(sp), w.modal(sp)))


def sample_velocity(u, ws):
    """Grid coordinates and velocity: arrays x, y, u1, u2 of shape (M, M)."""
    _check_ws(u, ws)
    u1, u2 = ws.velocity(u.psi)
    X, Y = np.meshgrid(ws.x, ws.x, indexing="ij")
    return X, Y, u1, u2


# --- measured constants -------------------------------------------------------------


@dataclass
class ConstantFit:
    """Largest observed ratio of a left side to its right-side scale."""

    value: float
    ratios: np.ndarray = field(repr=False)

    @property
    def n(self):
        return len(self.ratios)


def _fit(ratios):
    r = np.asarray(ratios, dtype=float)
    return ConstantFit(float(np.max(r)) if len(r) else 0.0, r)


def _random_modal(ws, rng, decay):
    return SpectralField.random(ws.N, rng, decay).modal(ws.spectrum)


def fit_trilinear_constant(ws, rng, n_samples=100, decay=1.0):
    """C in |b(u,v,w)| <= C |u|^1/2 |u|_V^1/2 |v|_V |w|^1/2 |w|_V^1/2."""
    sp = ws.spectrum
    out = []
    for _ in range(n_samples):
        au, av, aw = (_random_modal(ws, rng, decay) for _ in range(3))
        lhs = abs(ws.b(au, av, aw))
        rhs = (math.sqrt(modal_norm(au, sp, 0) * modal_norm(au, sp, 2)) * modal_norm(av, sp, 2)
               * math.sqrt(modal_norm(aw, sp, 0) * modal_norm(aw, sp, 2)))
        out.append(lhs / rhs)
    return _fit(out)


def c1_ratio(ws, aw, az):
    """|b(w, z, w)| / (|w| |z|_H1 |w|_H1) (batched over leading axes)."""
    sp = ws.spectrum
    num = np.abs(ws.b(aw, az, aw))
    den = modal_norm(aw, sp, 0) * modal_norm(az, sp, 1) * modal_norm(aw, sp, 1)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def fit_B_constant(ws, rng, n_samples=100, decay=1.0):
    """c in |B(u)|_V' <= c |u| |u|_V."""
    sp = ws.spectrum
    out = []
    for _ in range(n_samples):
        a = _random_modal(ws, rng, decay)
        out.append(dual_norm(ws.B_modal(a), sp) / (modal_norm(a, sp, 0) * modal_norm(a, sp, 2)))
    return _fit(out)


def fit_N_constants(ws, p, rng, n_samples=100, decay=1.0):
    """Growth constant |N(u)|_V' <= C |u|_V and the interpolation Lipschitz constant

    |<N(u) - N(v), phi>| <= C |u - v|^1/2 |u - v|_V^1/2 |phi|_H1.
    """
    sp = ws.spectrum
    growth, lip = [], []
    for _ in range(n_samples):
        a = _random_modal(ws, rng, decay)
        b = _random_modal(ws, rng, decay)
        growth.append(dual_norm(ws.N_modal(a, p), sp) / modal_norm(a, sp, 2))
        d = a - b
        num = dual_norm(ws.N_modal(a, p) - ws.N_modal(b, p), sp, 1.0)
        lip.append(num / math.sqrt(modal_norm(d, sp, 0) * modal_norm(d, sp, 2)))
    return _fit(growth), _fit(lip)


def _basis_fields(ws):
    eye = np.eye(ws.spectrum.K)
    psi = ws.psi_from_modal(eye)
    return ws.gradients(psi)


def _b_matrix_fixed_v(ws, av, basis):
    """T[i, j] = b(e_i, v, e_j)."""
    u1, u2 = basis[0], basis[1]
    _, _, d1v1, d2v1, d1v2, d2v2 = ws.gradients(ws.psi_from_modal(av))
    K = ws.spectrum.K
    U1 = u1.reshape(K, -1)
    U2 = u2.reshape(K, -1)
    q1 = U1 * d1v1.ravel() + U2 * d2v1.ravel()
    q2 = U1 * d1v2.ravel() + U2 * d2v2.ravel()
    return ws.area * (q1 @ U1.T + q2 @ U2.T)


def _b_vector_middle(ws, aw, basis):
    """g[k] = b(w, e_k, w)."""
    u1, u2 = ws.velocity(ws.psi_from_modal(aw))
    _, _, d1e1, d2e1, d1e2, d2e2 = basis
    integrand = u1 * (d1e1 * u1 + d1e2 * u2) + u2 * (d2e1 * u1 + d2e2 * u2)
    return ws.area * integrand.reshape(ws.spectrum.K, -1).sum(axis=1)


def measure_C1(ws, rng, n_starts=6, n_iter=12, n_scales=24, n_random=100, extra=None):
    """C1 in |b(w, z, w)| <= C1 |w| |z|_H1 |w|_H1, estimated from below.

    Combines a random battery with alternating maximization: for fixed z the
    best w comes from generalized eigenvectors of the symmetric part of
    b(., z, .) against c|.|^2 + |.|_H1^2 / c over a range of c, and for fixed
    w the best z is the Riesz representer of b(w, ., w) in H^1_0.
    ``extra`` may hold (w, z) modal pairs, e.g. taken from trajectories.
    """
    from scipy.linalg import eigh

    sp = ws.spectrum
    k2 = sp.k2
    basis = _basis_fields(ws)
    ratios = []
    for i in range(n_random):
        d = (0.5, 1.0, 1.5, 2.0)[i % 4]
        ratios.append(float(c1_ratio(ws, _random_modal(ws, rng, d), _random_modal(ws, rng, d))))
    if extra is not None:
        for aw, az in extra:
            ratios.append(float(c1_ratio(ws, aw, az)))
    scales = np.geomspace(math.sqrt(k2.min()) / 4, math.sqrt(k2.max()) * 4, n_scales)
    for _ in range(n_starts):
        az = _random_modal(ws, rng, 1.0)
        for _ in range(n_iter):
            T = _b_matrix_fixed_v(ws, az, basis)
            Ts = 0.5 * (T + T.T)
            best, best_w = -1.0, None
            for c in scales:
                vals, vecs = eigh(Ts, np.diag(c + k2 / c))
                for j in (0, -1):
                    w = vecs[:, j]
                    r = float(c1_ratio(ws, w, az))
                    if r > best:
                        best, best_w = r, w
            ratios.append(best)
            g = _b_vector_middle(ws, best_w, basis)
            az = g / k2
            ratios.append(float(c1_ratio(ws, best_w, az)))
    return _fit(ratios)
