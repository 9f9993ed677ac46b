"""Independent brute-force oracles used to freeze reference values in the tests.

Nothing here imports the package: each oracle recomputes its target from
first principles (plain Euler paths, direct sampling, dense trapezoid sums).
Run ``python tests/oracles.py`` to regenerate the frozen numbers.
"""

import math

import numpy as np


def cir_factors_textbook(kappa, beta, eta, tau):
    """Textbook CIR bond factors, evaluated directly (no stable rewriting)."""
    g = math.sqrt(kappa * kappa + 2 * eta * eta)
    tau = np.asarray(tau, dtype=float)
    e = np.exp(g * tau) - 1.0
    den = (g + kappa) * e + 2 * g
    B = 2 * e / den
    A = (2 * g * np.exp((kappa + g) * tau / 2) / den) ** (2 * kappa * beta / (eta * eta))
    return A, B


def euler_survival(kappa, beta, eta, x0, T, dt, m, seed, omega=0.0, alpha=1.0, chunk=20_000):
    """Mean and standard error of exp(-int_0^T X) with full-truncation Euler and optional Exp jumps."""
    rng = np.random.default_rng(seed)
    n = int(round(T / dt))
    vals = []
    for start in range(0, m, chunk):
        size = min(chunk, m - start)
        x = np.full(size, x0)
        integral = np.zeros(size)
        for _ in range(n):
            xp = np.maximum(x, 0.0)
            xn = x + kappa * (beta - xp) * dt + eta * np.sqrt(xp * dt) * rng.standard_normal(size)
            if omega > 0:
                k = rng.poisson(omega * dt, size)
                hit = k > 0
                xn[hit] += rng.gamma(k[hit], 1.0 / alpha)
            integral += 0.5 * dt * (xp + np.maximum(xn, 0.0))
            x = xn
        vals.append(np.exp(-integral))
    v = np.concatenate(vals)
    return v.mean(), v.std(ddof=1) / math.sqrt(m)


def exact_cir_survival(kappa, beta, eta, x0, T, dt, m, seed):
    """exp(-int X) with exact noncentral chi-square transitions and a trapezoid in time."""
    rng = np.random.default_rng(seed)
    c = eta * eta * (1 - math.exp(-kappa * dt)) / (4 * kappa)
    df = 4 * kappa * beta / (eta * eta)
    x = np.full(m, float(x0))
    integral = np.zeros(m)
    for _ in range(int(round(T / dt))):
        xn = c * rng.noncentral_chisquare(df, x * math.exp(-kappa * dt) / c)
        integral += 0.5 * dt * (x + xn)
        x = xn
    v = np.exp(-integral)
    return v.mean(), v.std(ddof=1) / math.sqrt(m)


def theta_mixture_direct(kappa, beta, eta, x0, omega, alpha, T, m, seed):
    """E[A(theta_T) e^{-B(theta_T) x0}] with theta_T built jump by jump."""
    rng = np.random.default_rng(seed)
    n = rng.poisson(omega * T, m)
    theta = np.full(m, float(T))
    for k in range(1, n.max() + 1):
        more = n >= k
        theta[more] += rng.exponential(1.0 / alpha, more.sum())
    A, B = cir_factors_textbook(kappa, beta, eta, theta)
    v = A * np.exp(-B * x0)
    return v.mean(), v.std(ddof=1) / math.sqrt(m)


def killing_rate_dense(kappa, beta, eta, omega, alpha, x, n=2_000_001):
    s = np.linspace(0.0, 60.0 / alpha, n)
    A, B = cir_factors_textbook(kappa, beta, eta, s)
    f = (1 - A * np.exp(-B * x)) * omega * alpha * np.exp(-alpha * s)
    return x + np.sum(0.5 * np.diff(s) * (f[1:] + f[:-1]))


def independent_cva_dense(sigma, h, T, n=3_000_001):
    u = np.linspace(0.0, T, n)
    f = sigma * np.sqrt(u / (2 * math.pi)) * h * np.exp(-h * u)
    return np.sum(0.5 * np.diff(u) * (f[1:] + f[:-1]))


def bridge_moments_mc(sigma, gamma, T, u, m, seed, steps=3000):
    """Euler on the bridge SDE (fine steps, stopped at u < T)."""
    rng = np.random.default_rng(seed)
    dt = u / steps
    v = np.zeros(m)
    t = 0.0
    for _ in range(steps):
        v += (gamma * (T - t) - v / (T - t)) * dt + sigma * math.sqrt(dt) * rng.standard_normal(m)
        t += dt
    return v.mean(), v.var(ddof=1), v.std(ddof=1) / math.sqrt(m)


if __name__ == "__main__":
    print("cir set a T=3", exact_cir_survival(0.02, 0.161, 0.08, 0.03, 3.0, 0.005, 100_000, 1))
    print("cir set a T=1", exact_cir_survival(0.02, 0.161, 0.08, 0.03, 1.0, 0.005, 100_000, 2))
    print("jcir set a T=3", euler_survival(0.02, 0.161, 0.08, 0.03, 3.0, 1e-3, 100_000, 3, 0.07, 1 / 0.08))
    print("theta mixture T=3", theta_mixture_direct(0.02, 0.161, 0.08, 0.03, 0.6, 1 / 0.512, 3.0, 1_000_000, 4))
    print("killing rate x=0.03", repr(killing_rate_dense(0.02, 0.161, 0.08, 0.6, 1 / 0.512, 0.03)))
    print("independent cva", repr(independent_cva_dense(0.08, 0.05, 3.0)))
    print("bridge u=1.5", bridge_moments_mc(0.08, 0.001, 3.0, 1.5, 200_000, 5))
