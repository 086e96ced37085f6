"""Command-line entry point: every command runs from a manifest and writes
a self-describing output directory."""
import argparse
import math
import os
import sys
import traceback
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import stats

from . import io
from .attractor import attraction_test, condition_check, estimate_absorption
from .errors import ConfigurationError, DivergenceError, FbmFluidError, NumericalError
from .fbm import generate_fbm
from .galerkin import GridWorkspace, SpectralField, measure_C1, modal_norm
from .manifest import COMMANDS, RunManifest
from .mild import FixedPointConfig, add_noise, evolve_v, picard_solve, shared_noise
from .noise import (check_assumption, convolve_field, mean_square_It, mean_square_Z,
                    sample_convolution, sample_stationary, stationary_mode_variance)
from .rng import stream
from .specfun import paper_bound_It, paper_bound_Z, quadrant_lattice_exact, quadrant_lattice_sum
from .specfun import gamma as gamma_fn

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2


def _map(fn, items, threads):
    # results come back in input order, so reductions stay fixed-order
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _prepare(m, files):
    out = io.ensure_dir(m.outputs["dir"])
    io.write_text(os.path.join(out, "manifest.json"), m.dumps())
    io.write_schema(out, files)
    return out


# --- gen -----------------------------------------------------------------------------


def cmd_gen(m):
    hp = m.hurst_param()
    grid = m.time_grid()
    method = m.params["method"]
    R = m.seeds["replicas"]
    out = _prepare(m, {"fbm_r{replica}.bin/.json": "fBm path values, <f8, shape (n_steps+1,)",
                       "fbm_r{replica}.txt": "columns: time value"})

    def one(r):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            path = generate_fbm(grid, hp, m.seeds["master"], method=method, replica=r)
        io.export_fbm_path(path, os.path.join(out, f"fbm_r{r}"))

    _map(one, range(R), m.threads)
    return EXIT_OK


# --- convolve --------------------------------------------------------------------------


def cmd_convolve(m):
    hp = m.hurst_param()
    grid = m.time_grid()
    noise = m.noise_assumption()
    seed = m.seeds["master"]
    R = m.seeds["replicas"]
    method = m.params["method"]
    out = _prepare(m, {"conv_r{replica}.bin/.json": "mode coefficients, <f8, shape (K, n_steps+1)",
                       "summary.txt": "columns: t mean|z|^2 exact|z|^2 bound"})

    def one(r):
        s = convolve_field(noise, hp, grid, seed, replica=r, method=method)
        io.export_convolution(s, os.path.join(out, f"conv_r{r}"))
        return np.sum(s.z_coeffs ** 2, axis=0)

    energies = _map(one, range(R), m.threads)
    mean = np.sum(energies, axis=0) / R
    t = grid.times - grid.t0
    exact = np.array([mean_square_It(noise, hp, float(x)) if x > 0 else 0.0 for x in t])
    bound = np.full_like(t, paper_bound_It(hp))
    io.write_columns(os.path.join(out, "summary.txt"), ["t", "mean|z|^2", "exact|z|^2", "bound"],
                     [grid.times, mean, exact, bound])
    return EXIT_OK


# --- check-bounds ------------------------------------------------------------------------


def _mc(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else math.inf


def check_bounds_report(m):
    hp = m.hurst_param()
    H = hp.value
    noise = m.noise_assumption()
    sp = noise.spectrum
    seed = m.seeds["master"]
    R = m.seeds["replicas"]
    P = m.params
    k = float(P["sigma"])
    report = {"assumption": check_assumption(noise).to_dict(), "bounds": []}
    if not report["assumption"]["satisfied"]:
        raise ConfigurationError(
            f"noise assumption {noise.variant} fails: weight series is not summable "
            f"(fitted decay exponent {report['assumption']['decay_exponent']})")

    # lattice sum behind the z bound: closed-form bound versus sharp value
    s = 2 * H
    lattice = float(quadrant_lattice_exact(s))
    sharp = 2 * float(gamma_fn(2 * H - 1)) * lattice
    trunc = quadrant_lattice_sum(s, int(P["lattice_terms"]))
    bound_It = paper_bound_It(hp)
    report["lattice"] = {
        "s": s, "exact": lattice, "truncated": float(trunc),
        "truncated_error_bound": trunc.abs_error_bound,
        "paper_bound_It": bound_It, "sharp_bound_It": sharp,
        "pass": bool(sharp <= bound_It),
    }
    report["bounds"].append({"name": "lattice_sharp_below_bound", "value": sharp,
                             "bound": bound_It, "pass": bool(sharp <= bound_It)})

    dt = float(P["convolution_dt"])
    times = [float(t) for t in P["times"]]
    steps = [int(round(t / dt)) for t in times]
    for t, n in zip(times, steps):
        if n < 1 or abs(n * dt - t) > 1e-9 * max(t, 1):
            raise ConfigurationError(f"time {t} is not a positive multiple of convolution_dt {dt}")
    from .fbm import TimeGrid
    grid = TimeGrid(0.0, dt, max(steps))
    z = sample_convolution(noise, hp, grid, seed, R, keep=steps)
    for j, t in enumerate(times):
        e = np.sum(z[:, j, :] ** 2, axis=1)
        mean, se = _mc(e)
        exact = mean_square_It(noise, hp, t)
        report["bounds"].append({
            "name": f"E|z({t:g})|^2", "mc_mean": mean, "mc_se": se, "quadrature": exact,
            "bound": bound_It, "below_bound": bool(mean + k * se < bound_It),
            "matches_quadrature": bool(abs(mean - exact) <= k * se),
            "pass": bool(mean + k * se < bound_It and abs(mean - exact) <= k * se),
        })

    burn = max(10.0 / sp.lambda1, 1.0)
    Z = sample_stationary(noise, hp, TimeGrid(0.0, dt, 0), burn, seed, R)[:, 0, :]
    e = np.sum(sp.k2 * Z ** 2, axis=1)
    mean, se = _mc(e)
    bz = paper_bound_Z(hp)
    exact = mean_square_Z(noise, hp, 0.5)
    report["bounds"].append({
        "name": "E|Z|_H1^2", "mc_mean": mean, "mc_se": se, "exact": exact, "bound": bz,
        "below_bound": bool(mean + k * se < bz), "matches_exact": bool(abs(mean - exact) <= k * se),
        "pass": bool(mean + k * se < bz and abs(mean - exact) <= k * se),
    })
    var = Z.var(axis=0, ddof=1)
    target = sp.noise_scale ** 2 * stationary_mode_variance(sp.lam, hp)
    if R > 1:
        # standard error of a Gaussian sample variance
        dev = (var - target) / (target * math.sqrt(2.0 / (R - 1)))
        # the K modes are tested as one family at the false-alarm rate of a single k-sigma test
        alpha = 2 * stats.norm.sf(k)
        z_fam = float(stats.norm.isf(0.5 * (1 - (1 - alpha) ** (1.0 / sp.K))))
        chi2_p = float(stats.chi2.sf(np.sum(dev ** 2), sp.K))
        ok = bool(np.max(np.abs(dev)) <= z_fam and chi2_p > alpha)
    else:
        dev, z_fam, chi2_p, ok = np.array([np.inf]), math.inf, 0.0, False
    report["bounds"].append({
        "name": "stationary_mode_variance", "max_deviation_sigma": float(np.max(np.abs(dev))),
        "n_modes": int(sp.K), "familywise_threshold_sigma": z_fam, "chi2_pvalue": chi2_p, "pass": ok,
    })
    report["pass"] = all(b["pass"] for b in report["bounds"])
    return report


def cmd_check_bounds(m):
    report = check_bounds_report(m)
    out = _prepare(m, {"report.json": "bound verification report"})
    io.write_json(os.path.join(out, "report.json"), report)
    return EXIT_OK if report["pass"] else EXIT_NUMERICAL


# --- solve -------------------------------------------------------------------------------


def _workspace(m, sp):
    M = m.params.get("grid_M")
    return GridWorkspace(m.truncation, None if M is None else int(M), sp)


def cmd_solve(m):
    hp = m.hurst_param()
    grid = m.time_grid()
    noise = m.noise_assumption()
    sp = noise.spectrum
    P = m.params
    seed = m.seeds["master"]
    p = m.phys_params()
    ws = _workspace(m, sp)
    terms = tuple(P["terms"])
    solver = P["solver"]
    if solver not in ("evolve", "picard", "both"):
        raise ConfigurationError(f"solver must be evolve, picard or both, got {solver!r}")
    out = _prepare(m, {
        "{solver}_norms.txt": "columns: t |u| |u|_H1 |u|_V",
        "{solver}_coeffs.bin/.json": "modal coefficients, <f8, shape (n_steps+1, K)",
        "{solver}_diagnostics.json": "solver diagnostics",
        "agreement.txt": "columns: t |u_picard - u_evolve| (solver=both)",
        "failure.json": "written instead of results when the solver diverges",
    })
    u0 = SpectralField.random(m.truncation, stream(seed, "initial", 0), P["u0_decay"], P["u0_norm"])
    z = convolve_field(noise, hp, grid, seed)
    results = {}
    try:
        if solver in ("evolve", "both"):
            v = evolve_v(u0, z, p=p, spectrum=sp, ws=ws, terms=terms)
            results["evolve"] = add_noise(v, z)
        if solver in ("picard", "both"):
            cfg = FixedPointConfig(int(P["max_iter"]), float(P["tol"]),
                                   max_contraction=float(P["max_contraction"]),
                                   initial_window=P["initial_window"])
            results["picard"] = picard_solve(u0, z, cfg, p, sp, ws, terms)
    except NumericalError as exc:
        bundle = {"error": type(exc).__name__, "message": str(exc), "manifest": m.to_dict(),
                  "context": getattr(exc, "context", None)}
        hist = getattr(exc, "history", None)
        if hist is not None:
            bundle["history"] = hist
        io.write_json(os.path.join(out, "failure.json"), bundle)
        raise

    a0 = u0.modal(sp)
    for name, tr in results.items():
        diag = {k: v for k, v in tr.meta.items() if k != "v_final"}
        diag["x_norm"] = tr.x_norm()
        if not terms:
            t = tr.times - grid.t0
            exact = np.exp(-np.outer(t, sp.lam)) * a0 + z.time_major()
            diag["linear_closed_form_error"] = float(np.max(np.abs(
                tr.norms[:, 0] - modal_norm(exact, sp, 0.0))))
        io.export_trajectory(tr, os.path.join(out, name), diagnostics=diag)
    if solver == "both":
        d = modal_norm(results["picard"].coeffs - results["evolve"].coeffs, sp, 0.0)
        io.write_columns(os.path.join(out, "agreement.txt"), ["t", "distance"], [grid.times, d])
        io.write_json(os.path.join(out, "agreement.json"), {"max_distance": float(d.max())})
    return EXIT_OK


# --- pullback ----------------------------------------------------------------------------


def cmd_pullback(m):
    hp = m.hurst_param()
    noise = m.noise_assumption()
    sp = noise.spectrum
    P = m.params
    seed = m.seeds["master"]
    p = m.phys_params()
    ws = _workspace(m, sp)
    dt = float(m.grid["dt"])
    terms = tuple(P["terms"])
    sched = sorted((float(t) for t in P["t0_schedule"]), reverse=True)
    if not sched or sched[0] >= 0:
        raise ConfigurationError("t0_schedule must contain negative times")
    out = _prepare(m, {"report.json": "absorption report, condition verdict and decay summary",
                       "absorption.txt": "columns: t0 sup|u|^2 sup|u|_H1^2",
                       "decay.txt": "columns: t0 distance closed_form (closed form in the linear case)"})
    init = [SpectralField.random(m.truncation, stream(seed, "initial", i), P["u0_decay"], r)
            for i, r in enumerate(P["initial_norms"])]
    if len(init) < 2:
        raise ConfigurationError("initial_norms needs at least two entries")
    C1 = P["C1"]
    if C1 is None:
        C1 = measure_C1(ws, stream(seed, "battery", 0)).value
    C1 = float(C1)
    Z = shared_noise(noise, hp, dt, seed, horizon=math.ceil(-sched[-1]))
    report = {"C1": C1, "condition": condition_check(C1, hp, sp).to_dict()}
    absorb_sched = [t for t in sched if t < -1.0]
    if len(absorb_sched) >= 3:
        ab = estimate_absorption(noise, hp, p, sp, ws, init, absorb_sched, seed, dt, C1, Z=Z, terms=terms)
        report["absorption"] = ab.to_dict()
        io.write_columns(os.path.join(out, "absorption.txt"), ["t0", "sup|u|^2", "sup|u|_H1^2"],
                         [ab.t0_schedule, ab.radii, ab.radii_V])
    dec = attraction_test(noise, hp, p, sp, ws, init[0], init[-1], sched, seed, dt, Z=Z, terms=terms)
    report["attraction"] = dec.to_dict()
    cols = [dec.t0, dec.distance]
    names = ["t0", "distance"]
    if not terms:
        diff = init[0].modal(sp) - init[-1].modal(sp)
        closed = [float(np.sqrt(np.sum((np.exp(sp.lam * t0) * diff) ** 2))) for t0 in dec.t0]
        rel = max(abs(a - b) / b for a, b in zip(dec.distance, closed) if b > 0)
        report["attraction"]["closed_form_max_rel_error"] = rel
        cols.append(closed)
        names.append("closed_form")
    io.write_columns(os.path.join(out, "decay.txt"), names, cols)
    io.write_json(os.path.join(out, "report.json"), report)
    return EXIT_OK


COMMAND_FUNCS = {"gen": cmd_gen, "convolve": cmd_convolve, "solve": cmd_solve,
                 "pullback": cmd_pullback, "check-bounds": cmd_check_bounds}


def build_manifest(args):
    if args.manifest:
        m = RunManifest.load(args.manifest)
        d = m.to_dict()
        if d["command"]["name"] != args.command:
            raise ConfigurationError(
                f"manifest is for command {d['command']['name']!r}, not {args.command!r}")
    else:
        d = RunManifest(command={"name": args.command, "params": {}}).to_dict()
    if args.out is not None:
        d["outputs"]["dir"] = args.out
    if args.seed is not None:
        d["seeds"]["master"] = args.seed
    if args.replicas is not None:
        d["seeds"]["replicas"] = args.replicas
    if args.threads is not None:
        d["threads"] = args.threads
    if args.hurst is not None:
        d["hurst"] = args.hurst
    if args.N is not None:
        d["truncation"] = args.N
    if args.n_steps is not None:
        d["grid"]["n_steps"] = args.n_steps
    if args.dt is not None:
        d["grid"]["dt"] = args.dt
    return RunManifest.from_dict(d)


def make_parser():
    ap = argparse.ArgumentParser(prog="fbmfluid", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--manifest", metavar="PATH")
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--seed", type=int, metavar="U64")
        sp.add_argument("--replicas", type=int, metavar="K")
        sp.add_argument("--threads", type=int, metavar="K")
        sp.add_argument("--hurst", type=float, metavar="H")
        sp.add_argument("--N", type=int, metavar="N", help="Galerkin truncation")
        sp.add_argument("--n-steps", type=int, dest="n_steps")
        sp.add_argument("--dt", type=float)
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        m = build_manifest(args)
        m.hurst_param()
        return COMMAND_FUNCS[args.command](m)
    except (ConfigurationError, ValueError) as exc:
        print(f"fbmfluid: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ArithmeticError, FbmFluidError) as exc:
        print(f"fbmfluid: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except Exception:
        traceback.print_exc()
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
