"""Independent high-precision reference values (mpmath).  Run as a script
to regenerate the numbers frozen in the tests; not collected by pytest."""
import mpmath as mp

mp.mp.dps = 30


def dbeta(s):
    return mp.nsum(lambda k: (-1) ** k / (2 * k + 1) ** s, [0, mp.inf])


def lattice(s):
    # sum over m, n >= 1 of (m^2 + n^2)^-s from the full-lattice identity
    full = 4 * mp.zeta(s) * dbeta(s)
    axes = 4 * mp.zeta(2 * s)
    return (full - axes) / 4


def kernel(H, t, s):
    H = mp.mpf(H)
    c = mp.sqrt(H * (2 * H - 1) / mp.beta(2 - 2 * H, H - mp.mpf(1) / 2))
    a = H - mp.mpf(1) / 2
    return c / a * (t / s) ** a * (t - s) ** a * mp.hyp2f1(-a, 1, H + mp.mpf(1) / 2, 1 - s / t)


def main():
    out = {}
    out["gamma(0.4)"] = mp.quad(lambda t: t ** (-0.6) * mp.e ** (-t), [0, 1, mp.inf])
    out["zeta(3)"] = mp.zeta(3)
    out["zeta(1.5)"] = mp.zeta(1.5)
    out["beta(2)"] = dbeta(2)
    out["beta(1.5)"] = dbeta(1.5)
    out["lattice(3)"] = lattice(3)
    out["lattice(1.5)"] = lattice(1.5)
    for H in (0.6, 0.75, 0.9):
        out[f"boundIt({H})"] = 2 * mp.gamma(2 * H - 1) * dbeta(4 * H) * mp.zeta(4 * H)
        out[f"boundZ({H})"] = 2 * mp.gamma(2 * H - 1) * dbeta(4 * H - 1) * mp.zeta(4 * H - 1)
    out["rhs(0.75,4)"] = mp.mpf(4) ** (mp.mpf(2) / 3) / (8 * mp.gamma(0.5) * dbeta(2) * mp.zeta(2))
    # kernel integrals
    H = 0.75
    out["intK2(1.3)"] = mp.quad(lambda s: kernel(H, 1.3, s) ** 2, [0, 1.3])
    out["intKK(1,0.5)"] = mp.quad(lambda r: kernel(H, 1, r) * kernel(H, 0.5, r), [0, 0.5])
    out["K(1,0.3)"] = kernel(H, 1, mp.mpf("0.3"))
    out["K(2,0.7)"] = kernel(0.6, 2, mp.mpf("0.7"))
    # twisted inner product of t with itself on [0, 1]
    h = mp.mpf(H)
    f = lambda s, t: s * t * abs(s - t) ** (2 * h - 2)
    out["<t,t>_H"] = h * (2 * h - 1) * 2 * mp.quad(lambda t: mp.quad(lambda s: f(s, t), [0, t]), [0, 1])
    # stationary OU second moment by the double integral
    lam = mp.mpf(3)
    g = lambda u, v: mp.e ** (-lam * (u + v)) * abs(u - v) ** (2 * h - 2)
    out["statvar(3)"] = h * (2 * h - 1) * 2 * mp.quad(lambda v: mp.quad(lambda u: g(u, v), [0, v]), [0, mp.inf])
    out["HG2H(3)"] = h * mp.gamma(2 * h) * lam ** (-2 * h)
    # finite-time E z(t)^2, lambda=2, t=0.5
    lam, T = mp.mpf(2), mp.mpf("0.5")
    g = lambda u, v: mp.e ** (-lam * (u + v)) * abs(u - v) ** (2 * h - 2)
    out["var_z(2,0.5)"] = h * (2 * h - 1) * 2 * mp.quad(lambda v: mp.quad(lambda u: g(u, v), [0, v]), [0, T])
    for m in (0, 1, 3, 12):
        out[f"xi_cov(0.75,3,0.1,{m})"] = one_step_cov(0.75, 3, 0.1, m)
    out["xi_cov(0.6,50,0.1,1)"] = one_step_cov(0.6, 50, 0.1, 1)
    for k, v in out.items():
        print(f"{k:22s} {mp.nstr(v, 17)}")


def one_step_cov(H, lam, dt, m):
    """Cov of the one-step convolution integrals at lag m (2-D quadrature)."""
    h, lam, dt = mp.mpf(H), mp.mpf(lam), mp.mpf(dt)
    p = 2 * h - 2
    f = lambda u, v: mp.e ** (-lam * (dt - u)) * mp.e ** (-lam * ((m + 1) * dt - v)) * abs(u - v) ** p
    if m == 0:
        val = 2 * mp.quad(lambda v: mp.quad(lambda u: f(u, v), [0, v]), [0, dt])
    else:
        val = mp.quad(lambda v: mp.quad(lambda u: f(u, v), [0, dt]), [m * dt, (m + 1) * dt])
    return h * (2 * h - 1) * val


if __name__ == "__main__":
    main()
