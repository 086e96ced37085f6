"""Ergodic averages, absorbing radii, the attractor condition and pullback
attraction experiments for the stationary-noise problem."""
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .errors import ConfigurationError
from .fbm import TimeGrid
from .galerkin import modal_norm
from .hurst import as_hurst
from .mild import ALL_TERMS, pullback_solve, shared_noise
from .noise import mean_square_Z, sample_stationary, stationary_Z
from .specfun import paper_bound_Z

PLATEAU_RTOL = 1e-3


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# --- ergodic averages ---------------------------------------------------------------


@dataclass
class ErgodicReport:
    horizon: float
    times: np.ndarray = field(repr=False)
    running_average: np.ndarray = field(repr=False)
    limit_estimate: float
    paper_bound: float
    exact_value: float
    ensemble_mean: float
    ensemble_se: float
    time_average_se: float

    @property
    def combined_se(self):
        return math.hypot(self.ensemble_se, self.time_average_se)

    @property
    def consistent(self):
        return abs(self.limit_estimate - self.ensemble_mean) <= 3 * self.combined_se

    @property
    def below_bound(self):
        return self.limit_estimate <= self.paper_bound + 3 * self.time_average_se

    def to_dict(self):
        d = {k: v for k, v in asdict(self).items() if k not in ("times", "running_average")}
        d.update(combined_se=self.combined_se, consistent=self.consistent, below_bound=self.below_bound)
        return _jsonable(d)


def _h1_energy(Zs, spectrum):
    # |Z|_H1^2 at every node; Zs has modes on the last axis
    return np.sum(spectrum.k2 * Zs ** 2, axis=-1)


def ergodic_average(noise, H, horizon_n, dt, seed, n_ensemble=1000, n_time_replicas=16, burn_in=None):
    """Running time average of |Z|_H1^2 over [0, n] against ensemble and bound.

    The spread of the time average is measured over ``n_time_replicas``
    independent paths; replica 0 is the reported path.
    """
    hp = as_hurst(H)
    sp = noise.spectrum
    lam1 = sp.lambda1
    if horizon_n < 100.0 / lam1 * (1 - 1e-12):
        raise ConfigurationError(f"horizon {horizon_n} is shorter than 100/lambda_1 = {100 / lam1:.6g}")
    if burn_in is None:
        burn_in = max(10.0 / lam1, 1.0)
    n = int(round(horizon_n / dt))
    grid = TimeGrid(0.0, dt, n)
    paths = sample_stationary(noise, hp, grid, burn_in, seed, n_time_replicas)
    e = _h1_energy(paths, sp)
    cum = np.concatenate([np.zeros((e.shape[0], 1)), np.cumsum(0.5 * dt * (e[:, 1:] + e[:, :-1]), axis=1)], axis=1)
    t = grid.times
    running = np.full(n + 1, np.nan)
    running[1:] = cum[0, 1:] / t[1:]
    finals = cum[:, -1] / t[-1]
    time_se = float(np.std(finals, ddof=1)) if n_time_replicas > 1 else 0.0
    ens = sample_stationary(noise, hp, TimeGrid(0.0, dt, 0), burn_in, seed, n_ensemble,
                            first_replica=n_time_replicas)[:, 0, :]
    ee = _h1_energy(ens, sp)
    return ErgodicReport(
        horizon=float(n * dt),
        times=t,
        running_average=running,
        limit_estimate=float(running[-1]),
        paper_bound=paper_bound_Z(hp),
        exact_value=mean_square_Z(noise, hp, 0.5),
        ensemble_mean=float(ee.mean()),
        ensemble_se=float(ee.std(ddof=1) / math.sqrt(len(ee))),
        time_average_se=time_se,
    )


# --- attractor condition -------------------------------------------------------------


@dataclass(frozen=True)
class ConditionReport:
    C1: float
    H: float
    lambda1: float
    lhs: float
    rhs: float
    satisfied: bool
    rhs_sqrt_variant: float
    satisfied_sqrt_variant: bool
    c2_window: tuple
    c2_window_nonempty: bool

    def to_dict(self):
        return _jsonable(asdict(self))


def condition_check(C1_measured, H, spectrum):
    """C1^2 > lambda1^(2/3) / (8 Gamma(2H-1) beta(4H-1) zeta(4H-1)).

    Also reports the same test with lambda1^(1/2) and the window
    (4 C1 G / lambda1, lambda1^(1/2) / (2 C1)) for C2, G = Gamma beta zeta.
    """
    hp = as_hurst(H)
    C1 = float(C1_measured)
    if not C1 > 0:
        raise ConfigurationError("C1 must be positive")
    lam1 = float(spectrum.lambda1 if hasattr(spectrum, "lambda1") else spectrum)
    G = 0.5 * paper_bound_Z(hp)
    lhs = C1 * C1
    rhs = lam1 ** (2.0 / 3.0) / (8.0 * G)
    rhs_b = lam1 ** 0.5 / (8.0 * G)
    lo = 4.0 * C1 * G / lam1
    hi = math.sqrt(lam1) / (2.0 * C1)
    return ConditionReport(C1, hp.value, lam1, lhs, rhs, lhs > rhs, rhs_b, lhs > rhs_b, (lo, hi), lo < hi)


# --- absorption ------------------------------------------------------------------------


@dataclass
class AbsorptionReport:
    t0_schedule: List[float]
    radii: List[float]
    radii_V: List[float]
    rho_H_estimate: float
    rho_V_estimate: float
    t2_estimate: Optional[float]
    plateau: bool
    condition: Optional[dict]
    out_of_hypothesis: bool
    formula_rho_H: Optional[float]
    formula_constants: Optional[dict]
    g2_growth_exponent: Optional[float]
    M: float

    def to_dict(self):
        return _jsonable(asdict(self))

    def table(self):
        return np.column_stack([self.t0_schedule, self.radii, self.radii_V])


def _formula_radius(Z, spectrum, p, C1, H, cond):
    """rho_H = 4 int g2(s) e^{(1+s) r2} ds + 2 sup_[-1,0] |Z|^2 over the sampled past."""
    if not cond.c2_window_nonempty:
        return None, None
    lam1 = spectrum.lambda1
    lo, hi = cond.c2_window
    C2 = math.sqrt(lo * hi)
    r1 = 0.5 * (math.sqrt(lam1) / 2 - C1 * C2)
    r2 = 0.5 * (lam1 / 2 - (C1 / C2) * paper_bound_Z(H))
    zc = Z.time_major()
    t = Z.times
    z0 = modal_norm(zc, spectrum, 0.0) ** 2
    z1 = modal_norm(zc, spectrum, 1.0) ** 2
    g2 = (C1 / C2) * z0 * z1 + C1 * C2 * z1 + p.mu0 ** 2 / (4 * r1 * p.epsilon ** p.alpha) * z1
    f = g2 * np.exp((1 + t) * r2)
    integral = float(Z.grid.dt * (f.sum() - 0.5 * (f[0] + f[-1])))
    recent = t >= -1.0 - 1e-12
    rho = 4 * integral + 2 * float(z0[recent].max())
    return rho, {"C2": C2, "r1": r1, "r2": r2, "horizon": float(-t[0])}


def g2_growth_exponent(Z, spectrum, p, C1, C2=None, r1=None):
    """Power-law exponent of max_{[t,0]} g2 as t -> -infinity (log-log fit)."""
    lam1 = spectrum.lambda1
    if C2 is None:
        C2 = math.sqrt(lam1) / (4 * C1)
    if r1 is None:
        r1 = math.sqrt(lam1) / 8
    zc = Z.time_major()
    z0 = modal_norm(zc, spectrum, 0.0) ** 2
    z1 = modal_norm(zc, spectrum, 1.0) ** 2
    g2 = (C1 / C2) * z0 * z1 + C1 * C2 * z1 + p.mu0 ** 2 / (4 * r1 * p.epsilon ** p.alpha) * z1
    back = np.maximum.accumulate(g2[::-1])
    tau = -Z.times[::-1]
    sel = tau >= 1.0
    if sel.sum() < 3:
        return None
    slope = np.polyfit(np.log1p(tau[sel]), np.log(back[sel]), 1)[0]
    return float(slope)


def _pullback_noise(noise, H, dt, seed, t0_schedule, Z):
    if Z is not None:
        return Z
    deepest = -min(t0_schedule)
    return shared_noise(noise, H, dt, seed, horizon=math.ceil(deepest))


def estimate_absorption(noise, H, p, spectrum, ws, initial_set, t0_schedule, seed, dt, C1,
                        Z=None, terms=ALL_TERMS, plateau_rtol=PLATEAU_RTOL):
    """Pullback radii sup_[-1,0] |u|^2 and sup_[-1/2,0] |u|_H1^2 for each t0.

    Every solve uses one noise path (same omega).  The plateau value over
    the three deepest t0 is the radius estimate; t2 is the latest t0 from
    which every deeper start lies inside it.
    """
    hp = as_hurst(H)
    sched = sorted((float(t) for t in t0_schedule), reverse=True)
    if any(t >= -1.0 for t in sched):
        raise ConfigurationError("absorption needs t0 < -1")
    Z = _pullback_noise(noise, hp, dt, seed, sched, Z)
    cond = condition_check(C1, hp, spectrum)
    M = max(float(modal_norm(u.modal(spectrum), spectrum, 0.0)) for u in initial_set) if initial_set else 0.0
    radii, radii_V = [], []
    for t0 in sched:
        rH = rV = 0.0
        for u0 in initial_set:
            try:
                u = pullback_solve(u0, t0, Z=Z, p=p, spectrum=spectrum, ws=ws, terms=terms)
            except Exception as exc:
                exc.args = (f"{exc.args[0] if exc.args else exc} [t0={t0}, |u0|={modal_norm(u0.modal(spectrum), spectrum, 0):.6g}]",)
                raise
            t = u.times
            rH = max(rH, float((u.norms[t >= -1.0 - 1e-12, 0] ** 2).max()))
            rV = max(rV, float((u.norms[t >= -0.5 - 1e-12, 1] ** 2).max()))
        radii.append(rH)
        radii_V.append(rV)
    deep = radii[-3:]
    deepV = radii_V[-3:]
    rho_H = max(deep)
    rho_V = max(deepV)
    plateau = (max(deep) - min(deep)) <= plateau_rtol * max(rho_H, 1e-300)
    t2 = None
    for i in range(len(sched) - 1, -1, -1):
        if radii[i] <= rho_H * (1 + plateau_rtol):
            t2 = sched[i]
        else:
            break
    rho_formula, consts = _formula_radius(Z, spectrum, p, C1, hp, cond)
    growth = g2_growth_exponent(Z, spectrum, p, C1)
    return AbsorptionReport(sched, radii, radii_V, rho_H, rho_V, t2, bool(plateau), cond.to_dict(),
                            not cond.satisfied, rho_formula, consts, growth, M)


# --- attraction ---------------------------------------------------------------------------


@dataclass
class DecayTable:
    t0: List[float]
    distance: List[float]
    rate: Optional[float]
    monotone: bool

    def to_dict(self):
        return _jsonable(asdict(self))

    def table(self):
        return np.column_stack([self.t0, self.distance])


def attraction_test(noise, H, p, spectrum, ws, u0_a, u0_b, t0_schedule, seed, dt, Z=None, terms=ALL_TERMS):
    """|u_a(0) - u_b(0)| for pullback solves from t0 with one shared noise path."""
    hp = as_hurst(H)
    sched = sorted((float(t) for t in t0_schedule), reverse=True)
    Z = _pullback_noise(noise, hp, dt, seed, sched, Z)
    dist = []
    for t0 in sched:
        ua = pullback_solve(u0_a, t0, Z=Z, p=p, spectrum=spectrum, ws=ws, terms=terms)
        ub = pullback_solve(u0_b, t0, Z=Z, p=p, spectrum=spectrum, ws=ws, terms=terms)
        # u_a - u_b = v_a - v_b; the shared Z cancels, so difference the v parts
        dist.append(float(modal_norm(ua.meta["v_final"] - ub.meta["v_final"], spectrum, 0.0)))
    d = np.asarray(dist)
    pos = d > 0
    rate = None
    if pos.sum() >= 2:
        rate = float(np.polyfit(np.asarray(sched)[pos], np.log(d[pos]), 1)[0])
    monotone = bool(np.all(np.diff(d) <= 0))
    return DecayTable(sched, dist, rate, monotone)
