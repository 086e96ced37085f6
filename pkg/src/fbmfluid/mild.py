"""Mild solutions: convolution maps J1, J2, windowed Picard iteration,
the exponential-Euler v-equation and pullback solves."""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DivergenceError, DomainError
from .fbm import TimeGrid
from .galerkin import SpectralField, modal_norm
from .noise import ConvolutionSample, stationary_Z

ALL_TERMS = ("B", "N")
BLOWUP = 1e12
STIFF_DT_LIMIT = 10.0


@dataclass
class Trajectory:
    """Modal coefficients (n_steps + 1, K) on a grid with per-node norms.

    ``norms[:, 0..2]`` hold |u|, |u|_H1 and |u|_V.
    """

    grid: TimeGrid
    coeffs: np.ndarray
    spectrum: object
    meta: dict = field(default_factory=dict)
    norms: np.ndarray = field(init=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.grid.n_steps + 1, self.spectrum.K):
            raise ConfigurationError("trajectory coefficients must have shape (n_steps + 1, K)")
        self.norms = np.stack([modal_norm(self.coeffs, self.spectrum, s) for s in (0.0, 1.0, 2.0)], axis=1)

    @property
    def times(self):
        return self.grid.times

    def state(self, i):
        return SpectralField.from_modal(self.coeffs[i], self.spectrum)

    @property
    def states(self):
        return [self.state(i) for i in range(self.grid.n_steps + 1)]

    def x_norm(self):
        return x_norm(self.coeffs, self.spectrum, self.grid.dt)


def x_norm(coeffs, spectrum, dt):
    """sup_t |u(t)| + (int |u(t)|_V^2 dt)^(1/2), trapezoidal in time."""
    h = modal_norm(coeffs, spectrum, 0.0)
    v2 = modal_norm(coeffs, spectrum, 2.0) ** 2
    l2 = dt * (v2.sum() - 0.5 * (v2[0] + v2[-1])) if len(v2) > 1 else 0.0
    return float(h.max() + math.sqrt(max(l2, 0.0)))


@dataclass(frozen=True)
class FixedPointConfig:
    max_iter: int = 60
    tol: float = 1e-10
    window_shrink: float = 0.5
    ball_radius_M: Optional[float] = None
    max_contraction: float = 0.5
    initial_window: Optional[float] = None

    def __post_init__(self):
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be positive")
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if not 0 < self.window_shrink < 1:
            raise ConfigurationError("window_shrink must lie in (0, 1)")


# --- convolution quadrature ---------------------------------------------------------


def phi_functions(x):
    """E1(x) = (1 - e^-x)/x and E2(x) = (1 - e^-x (1 + x))/x^2, stable near 0."""
    x = np.asarray(x, dtype=float)
    E1 = np.empty_like(x)
    E2 = np.empty_like(x)
    small = x < 1e-2
    xs = x[small]
    E1[small] = 1 - xs / 2 + xs ** 2 / 6 - xs ** 3 / 24 + xs ** 4 / 120
    E2[small] = 0.5 - xs / 3 + xs ** 2 / 8 - xs ** 3 / 30 + xs ** 4 / 144
    xb = x[~small]
    em = np.exp(-xb)
    E1[~small] = (1 - em) / xb
    E2[~small] = (1 - em * (1 + xb)) / xb ** 2
    return E1, E2


def _conv_weights(lam, dt):
    E1, E2 = phi_functions(lam * dt)
    return np.exp(-lam * dt), dt * E2, dt * (E1 - E2)


def convolve_forcing(F, lam, dt):
    """int_0^t_j exp(-lam (t_j - s)) F(s) ds with F piecewise linear in time.

    F has shape (n + 1, K); each step is integrated exactly.
    """
    decay, w0, w1 = _conv_weights(lam, dt)
    out = np.zeros_like(F)
    for j in range(F.shape[0] - 1):
        out[j + 1] = decay * out[j] + w0 * F[j] + w1 * F[j + 1]
    return out


def _forcing(ws, a, p, terms):
    F = np.zeros_like(a)
    if "B" in terms:
        F += ws.B_modal(a)
    if "N" in terms:
        F += ws.N_modal(a, p)
    return F


def map_J1(u, spectrum, ws):
    """J1(u)(t) = -int_0^t S(t - s) B(u(s)) ds."""
    J = -convolve_forcing(ws.B_modal(u.coeffs), spectrum.lam, u.grid.dt)
    return Trajectory(u.grid, J, spectrum, {"map": "J1"})


def map_J2(u, p, spectrum, ws):
    """J2(u)(t) = -int_0^t S(t - s) N(u(s)) ds."""
    J = -convolve_forcing(ws.N_modal(u.coeffs, p), spectrum.lam, u.grid.dt)
    return Trajectory(u.grid, J, spectrum, {"map": "J2"})


# --- Picard ---------------------------------------------------------------------------


def _z_coeffs(z, spectrum):
    zc = z.time_major()
    if zc.shape[1] != spectrum.K:
        raise ConfigurationError("noise and solver spectra differ")
    return zc


def picard_solve(u0, z, cfg, p, spectrum, ws, terms=ALL_TERMS):
    """Fixed point of u = S(.)u0 + z + J1(u) + J2(u) on the grid of z.

    Windows are marched from the left.  Inside a window the residuals
    |u_{k+1} - u_k|_X are monitored; whenever one of them exceeds
    ``cfg.max_contraction`` times its predecessor, the window is shrunk by
    ``cfg.window_shrink`` and restarted.  The convolution z is restarted at
    every window boundary as z(t) - S(t - t_w) z(t_w).
    """
    grid = z.grid
    n = grid.n_steps
    dt = grid.dt
    lam = spectrum.lam
    zc = _z_coeffs(z, spectrum)
    a0 = u0.modal(spectrum)
    out = np.empty((n + 1, spectrum.K))
    out[0] = a0
    windows = []
    i0 = 0
    init_steps = n if cfg.initial_window is None else max(1, int(round(cfg.initial_window / dt)))
    L = init_steps
    while i0 < n:
        L = min(L, n - i0)
        i1 = i0 + L
        tl = dt * np.arange(L + 1)[:, None]
        semig = np.exp(-lam * tl)
        zw = zc[i0:i1 + 1] - semig * zc[i0]
        phi = semig * out[i0] + zw
        M = cfg.ball_radius_M
        if M is None:
            M = 2.0 * (2.0 * float(modal_norm(out[i0], spectrum, 0)) + x_norm(zw, spectrum, dt))
        u = phi.copy()
        history = []
        ratios = []
        accepted = False
        floor = 1e-13 * (1.0 + x_norm(phi, spectrum, dt))
        for k in range(cfg.max_iter):
            if terms:
                new = phi - convolve_forcing(_forcing(ws, u, p, terms), lam, dt)
            else:
                new = phi
            if not np.all(np.isfinite(new)):
                history.append(math.inf)
                break
            r = x_norm(new - u, spectrum, dt)
            history.append(r)
            u = new
            if len(history) >= 2 and history[-2] > floor:
                ratios.append(r / history[-2])
                if ratios[-1] > cfg.max_contraction:
                    break
            if r < cfg.tol:
                accepted = True
                break
        if accepted:
            out[i0 + 1:i1 + 1] = u[1:]
            xn = x_norm(u, spectrum, dt)
            windows.append({
                "t_start": grid.t0 + i0 * dt,
                "t_end": grid.t0 + i1 * dt,
                "iterations": len(history),
                "contraction": max(ratios) if ratios else 0.0,
                "ratios": ratios,
                "residuals": history,
                "x_norm": xn,
                "ball_radius": M,
                "in_ball": xn <= M,
            })
            i0 = i1
            L = init_steps
            continue
        if L == 1:
            raise DivergenceError(
                f"Picard iteration failed to contract on a single step at t={grid.t0 + i0 * dt:.6g}",
                history=history, context={"window_start": grid.t0 + i0 * dt, "ratios": ratios},
            )
        if len(history) >= cfg.max_iter and not ratios and history[-1] >= history[0]:
            raise DivergenceError("Picard residuals did not decrease", history=history)
        L = max(1, int(L * cfg.window_shrink))
    meta = {
        "solver": "picard",
        "windows": windows,
        "iterations": sum(w["iterations"] for w in windows),
        "max_contraction": max((w["contraction"] for w in windows), default=0.0),
        "terms": list(terms),
    }
    return Trajectory(grid, out, spectrum, meta)


# --- exponential Euler ---------------------------------------------------------------------


def check_step(spectrum, dt):
    worst = float(spectrum.lam.max() * dt)
    if worst > STIFF_DT_LIMIT:
        raise ConfigurationError(
            f"time step {dt} does not resolve the fastest mode: lambda_max*dt = {worst:.3g} > {STIFF_DT_LIMIT}"
        )


def _evolve(a0, zc, dt, lam, p, ws, terms, t_start):
    n = zc.shape[0] - 1
    decay = np.exp(-lam * dt)
    gain = dt * phi_functions(lam * dt)[0]
    out = np.empty_like(zc)
    out[0] = a0
    v = a0.copy()
    for j in range(n):
        if terms:
            v = decay * v - gain * _forcing(ws, v + zc[j], p, terms)
        else:
            v = decay * v
        norm = math.sqrt(float(np.dot(v, v)))
        if not math.isfinite(norm) or norm > BLOWUP:
            raise DivergenceError(
                f"v blew up (|v| = {norm:.3g}) at t = {t_start + (j + 1) * dt:.6g}",
                history=[float(x) for x in modal_norm(out[max(0, j - 20):j + 1], ws.spectrum, 0)],
                context={"t": t_start + (j + 1) * dt},
            )
        out[j + 1] = v
    return out


def evolve_v(v0, z, T=None, dt=None, p=None, spectrum=None, ws=None, terms=ALL_TERMS):
    """Exponential Euler for dv/dt + Av + B(v+z) + N(v+z) = 0 on the grid of z.

    v_{j+1} = e^{-A dt} v_j - dt E1(A dt) [B + N](v_j + z_j).
    """
    if spectrum is None or ws is None:
        raise ConfigurationError("spectrum and workspace are required")
    grid = z.grid
    if dt is not None and abs(dt - grid.dt) > 1e-12 * grid.dt:
        raise ConfigurationError(f"dt={dt} must equal the noise grid spacing {grid.dt}")
    dt = grid.dt
    n = grid.n_steps if T is None else int(round(T / dt))
    if n > grid.n_steps or n < 0:
        raise ConfigurationError("T exceeds the horizon of the noise sample")
    if terms:
        check_step(spectrum, dt)
        if p is None and "N" in terms:
            raise ConfigurationError("physical parameters are required for N")
    zc = _z_coeffs(z, spectrum)[: n + 1]
    a0 = v0.modal(spectrum)
    coeffs = _evolve(a0, zc, dt, spectrum.lam, p, ws, terms, grid.t0)
    return Trajectory(TimeGrid(grid.t0, dt, n), coeffs, spectrum,
                      {"solver": "exponential_euler", "terms": list(terms)})


def add_noise(v, z):
    """u = v + z on the grid of v (z may extend further)."""
    zc = z.time_major()[: v.grid.n_steps + 1]
    meta = dict(v.meta)
    meta["from_v"] = True
    return Trajectory(v.grid, v.coeffs + zc, v.spectrum, meta)


# --- pullback -----------------------------------------------------------------------------


DEFAULT_HORIZON = 16.0


def shared_noise(noise, H, dt, seed, horizon=DEFAULT_HORIZON, burn_in=None):
    """Stationary Z on [-horizon, 0], the single noise path used for every t0."""
    n = int(round(horizon / dt))
    if burn_in is None:
        burn_in = max(10.0 / noise.spectrum.lambda1, 2.0)
    grid = TimeGrid(-n * dt, dt, n)
    return stationary_Z(noise, H, grid, burn_in, seed)


def pullback_solve(u0, t0, noise=None, H=None, seed=None, p=None, spectrum=None, ws=None,
                   dt=None, Z=None, terms=ALL_TERMS, horizon=DEFAULT_HORIZON, t_end=0.0):
    """Solve from u(t0) = u0 up to t_end (default 0) and return u = v + Z.

    Z is the stationary convolution on [-horizon, 0]; pass ``Z`` to reuse a
    path, or ``noise``, ``H``, ``seed`` and ``dt`` to build the shared path.
    """
    if t0 >= t_end:
        raise DomainError("t0 must precede the final time")
    if Z is None:
        if noise is None or dt is None or seed is None:
            raise ConfigurationError("either Z or (noise, H, seed, dt) is required")
        Z = shared_noise(noise, H, dt, seed, horizon)
    g = Z.grid
    i0 = g.index_of(t0)
    i1 = g.index_of(t_end)
    if i0 is None or i1 is None:
        raise ConfigurationError(f"t0={t0} and t_end={t_end} must be nodes of the noise grid")
    Zs = Z.slice(i0, i1)
    v0 = u0 - SpectralField.from_modal(Zs.z_coeffs[:, 0], spectrum)
    v = evolve_v(v0, Zs, None, None, p, spectrum, ws, terms)
    u = add_noise(v, Zs)
    u.meta.update({"t0": float(t0), "v_final": v.coeffs[-1].copy(), "solver": "pullback"})
    return u


# --- measured constants ------------------------------------------------------------------


def random_trajectory(ws, grid, rng, amplitude=1.0, decay=1.5, n_knots=4):
    """Smooth-in-time random modal trajectory through a few random fields."""
    sp = ws.spectrum
    knots = np.stack([SpectralField.random(ws.N, rng, decay, norm=amplitude).modal(sp) for _ in range(n_knots)])
    s = np.linspace(0.0, 1.0, grid.n_steps + 1)
    tk = np.linspace(0.0, 1.0, n_knots)
    coeffs = np.stack([np.interp(s, tk, knots[:, k]) for k in range(sp.K)], axis=1)
    return Trajectory(grid, coeffs, sp)


def measure_map_constants(ws, p, grid, rng, n_samples=20, amplitude=1.0, decay=1.5):
    """Largest observed c1, c3 and c4 of the J-map estimates on a random battery.

    c1: |J1(u)|_X^2 <= c1 |u|_X^4
    c3: |J2(u)|_X^2 <= c3 |u|_{L^2(V)}^2
    c4: |J2(u) - J2(v)|_X^2 <= c4 T |u - v|_X^2
    """
    sp = ws.spectrum
    dt = grid.dt
    T = grid.n_steps * dt
    c1, c3, c4 = [], [], []
    for _ in range(n_samples):
        u = random_trajectory(ws, grid, rng, amplitude, decay)
        v = random_trajectory(ws, grid, rng, amplitude, decay)
        xu = u.x_norm()
        j1 = map_J1(u, sp, ws).x_norm()
        c1.append(j1 ** 2 / xu ** 4)
        v2 = u.norms[:, 2] ** 2
        l2v = dt * (v2.sum() - 0.5 * (v2[0] + v2[-1]))
        c3.append(map_J2(u, p, sp, ws).x_norm() ** 2 / l2v)
        d = Trajectory(grid, map_J2(u, p, sp, ws).coeffs - map_J2(v, p, sp, ws).coeffs, sp).x_norm()
        duv = Trajectory(grid, u.coeffs - v.coeffs, sp).x_norm()
        c4.append(d ** 2 / (T * duv ** 2))
    return {"c1": float(max(c1)), "c3": float(max(c3)), "c4": float(max(c4)), "T": T, "n": n_samples}


# --- a priori estimate -----------------------------------------------------------------


def gronwall_bound(u0_norm_sq, z, spectrum, C1, C2, r1, p):
    """Right side of the a priori estimate at every node of z's grid.

    |v(t)|^2 <= exp(c5 int_0^t |z|_H1^2) |u0|^2
                + int_0^t exp(c5 int_s^t |z|_H1^2) g1(s) ds,
    c5 = C1/C2, g1 = c5 |z|^2 |z|_H1^2 + C1 C2 |z|_H1^2 + mu0^2/(4 r1 eps^alpha) |z|_H1^2.
    """
    zc = z.time_major()
    dt = z.grid.dt
    z0 = modal_norm(zc, spectrum, 0.0) ** 2
    z1 = modal_norm(zc, spectrum, 1.0) ** 2
    c5 = C1 / C2
    g1 = c5 * z0 * z1 + C1 * C2 * z1 + p.mu0 ** 2 / (4 * r1 * p.epsilon ** p.alpha) * z1
    # cumulative trapezoid of |z|_H1^2
    I = np.concatenate([[0.0], np.cumsum(0.5 * dt * (z1[1:] + z1[:-1]))])
    out = np.empty_like(I)
    for j in range(len(I)):
        f = np.exp(c5 * (I[j] - I[: j + 1])) * g1[: j + 1]
        integral = dt * (f.sum() - 0.5 * (f[0] + f[-1])) if j > 0 else 0.0
        out[j] = math.exp(c5 * I[j]) * u0_norm_sq + integral
    return out, {"c5": c5, "g1": g1}


def gronwall_constants(C1, lam1):
    """Admissible C2 and r1: C2 < lam1^1/2/(2 C1) and C1 C2 + r1 < lam1^1/2 / 2."""
    C2 = math.sqrt(lam1) / (4 * C1)
    r1 = math.sqrt(lam1) / 8
    return C2, r1
