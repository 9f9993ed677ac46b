"""Survival curves for CIR++, JCIR++ and the time-changed CIR++ model.

All survival probabilities here are for the *unshifted* intensity kernel; the
deterministic shift that fits the market curve is produced by
:func:`calibrate_shift`.

Parametrisation
---------------
``CirParams`` follows ``dX = kappa (beta - X) dt + eta sqrt(X) dW``.
``JumpParams`` describes a compound Poisson process with arrival rate ``omega``
and i.i.d. exponential sizes of *rate* ``alpha`` (mean ``1/alpha``).  The same
bundle is used for the intensity jumps of JCIR and for the jumps of the
stochastic clock ``theta_t = t + J'_t`` of TC-CIR.
"""

from __future__ import annotations

import csv
import functools
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate, interpolate, special, stats

from .errors import CalibrationDomainError, NumericalError, ParameterDomainError


class FellerWarning(UserWarning):
    pass


class Model(str, Enum):
    CIR = "CIR"
    JCIR = "JCIR"
    TCCIR = "TCCIR"

    @classmethod
    def parse(cls, value: "str | Model") -> "Model":
        if isinstance(value, Model):
            return value
        key = str(value).upper().replace("-", "").replace("_", "").replace("++", "")
        try:
            return cls(key)
        except ValueError:
            raise ParameterDomainError(f"unknown model {value!r}") from None


@dataclass(frozen=True)
class CirParams:
    kappa: float
    beta: float
    eta: float
    x0: float

    def __post_init__(self):
        vals = (self.kappa, self.beta, self.eta, self.x0)
        if not all(math.isfinite(v) for v in vals):
            raise ParameterDomainError(f"non-finite CIR parameters {vals}")
        if self.kappa <= 0 or self.eta <= 0:
            raise ParameterDomainError(f"kappa and eta must be positive, got {vals}")
        # beta = x0 = 0 is the degenerate zero-intensity model, kept on purpose
        if self.beta < 0 or self.x0 < 0:
            raise ParameterDomainError(f"beta and x0 must be nonnegative, got {vals}")
        if not self.feller:
            warnings.warn(
                f"Feller condition 2*kappa*beta > eta^2 violated for {self}", FellerWarning, stacklevel=3
            )

    @property
    def feller(self) -> bool:
        return 2.0 * self.kappa * self.beta > self.eta**2


@dataclass(frozen=True)
class JumpParams:
    omega: float
    alpha: float

    def __post_init__(self):
        if not (math.isfinite(self.omega) and math.isfinite(self.alpha)):
            raise ParameterDomainError(f"non-finite jump parameters {self}")
        if self.omega < 0 or self.alpha <= 0:
            raise ParameterDomainError(f"need omega >= 0 and alpha > 0, got {self}")

    @classmethod
    def from_mean(cls, omega: float, mean_size: float) -> "JumpParams":
        """Build from arrival rate and mean jump size (the convention of the shipped configs)."""
        if mean_size <= 0:
            raise ParameterDomainError(f"mean jump size must be positive, got {mean_size}")
        return cls(omega, 1.0 / mean_size)

    @property
    def mean_size(self) -> float:
        return 1.0 / self.alpha

    @property
    def active(self) -> bool:
        return self.omega > 0


NO_JUMPS = JumpParams(0.0, 1.0)


@dataclass(frozen=True, eq=False)
class MarketCurve:
    """Piecewise-constant hazard curve.

    ``times[i]`` is the start of the segment on which ``hazards[i]`` applies;
    the last segment extends to ``t_max``.
    """

    times: np.ndarray
    hazards: np.ndarray
    t_max: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        hazards = np.asarray(self.hazards, dtype=float)
        if times.ndim != 1 or times.shape != hazards.shape or times.size == 0:
            raise ParameterDomainError("times and hazards must be equal-length 1-d arrays")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ParameterDomainError("hazard segment starts must begin at 0 and increase")
        if np.any(hazards < 0) or not np.all(np.isfinite(hazards)):
            raise ParameterDomainError("hazard rates must be finite and nonnegative")
        if not self.t_max > times[-1]:
            raise ParameterDomainError("t_max must lie beyond the last segment start")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "hazards", hazards)
        seg = np.diff(np.append(times, max(self.t_max, times[-1])))
        object.__setattr__(self, "_cum", np.concatenate([[0.0], np.cumsum(hazards * seg)]))

    @classmethod
    def flat(cls, hazard: float, t_max: float) -> "MarketCurve":
        return cls(np.array([0.0]), np.array([float(hazard)]), float(t_max))

    @classmethod
    def from_file(cls, path: "str | Path", t_max: float) -> "MarketCurve":
        """Read (segment start, hazard) rows from a whitespace/comma text file."""
        text = Path(path).read_text().replace(",", " ")
        rows = [ln.split("#")[0].split() for ln in text.splitlines()]
        data = np.array([[float(v) for v in r] for r in rows if r])
        if data.ndim != 2 or data.shape[1] != 2:
            raise ParameterDomainError(f"{path}: expected two columns (time, hazard)")
        return cls(data[:, 0], data[:, 1], float(t_max))

    def hazard(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, None)
        return self.hazards[idx]

    def integrated(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, None)
        return self._cum[idx] + self.hazards[idx] * (t - self.times[idx])

    def survival(self, t):
        return np.exp(-self.integrated(t))


# ---------------------------------------------------------------------------
# affine CIR factors


def cir_bond_factors(p: CirParams, t, T):
    """Return ``(A, B)`` with ``E[exp(-int_t^T X) | X_t = x] = A exp(-B x)``.

    Written in terms of ``q = (1 - e^{-g tau}) (kappa - g) / (2 g)`` so that both
    factors stay accurate for large ``tau`` and for ``eta -> 0``.
    """
    tau = np.asarray(T, dtype=float) - np.asarray(t, dtype=float)
    if np.any(tau < 0):
        raise ParameterDomainError("cir_bond_factors needs t <= T")
    k, b, e = p.kappa, p.beta, p.eta
    g = math.sqrt(k * k + 2.0 * e * e)
    one_m = -np.expm1(-g * tau)
    d = -2.0 * e * e / (k + g)  # kappa - gamma without cancellation
    q = one_m * d / (2.0 * g)
    B = one_m / (g * (1.0 + q))
    with np.errstate(invalid="ignore", divide="ignore"):
        lq = np.where(q == 0.0, 1.0, np.log1p(q) / np.where(q == 0.0, 1.0, q))
    lnA = -(4.0 * k * b / (k + g)) * (0.5 * tau - one_m / (2.0 * g) * lq)
    return np.exp(lnA), B


def cir_survival(p: CirParams, t, T, x=None):
    if x is None:
        x = p.x0
    if np.any(np.asarray(x) < 0):
        raise ParameterDomainError("state must be nonnegative")
    A, B = cir_bond_factors(p, t, T)
    return A * np.exp(-B * np.asarray(x, dtype=float))


def _jump_correction(p: CirParams, j: JumpParams, tau: float, epsrel: float = 1e-9) -> float:
    """``int_0^tau B(0,u) / (alpha + B(0,u)) du`` by adaptive quadrature."""
    if tau <= 0.0:
        return 0.0

    def f(u):
        B = cir_bond_factors(p, 0.0, u)[1]
        return B / (j.alpha + B)

    res = integrate.quad(f, 0.0, tau, epsabs=0.0, epsrel=epsrel, limit=200, full_output=1)
    if len(res) > 3:
        raise NumericalError(
            "JCIR jump-transform quadrature did not converge",
            {"tau": tau, "value": res[0], "abserr": res[1], "message": res[3]},
        )
    return res[0]


def jcir_survival(p: CirParams, j: JumpParams, t, T, x=None):
    """Survival for CIR plus independent exponential upward jumps.

    The state coefficient is unchanged; the constant term picks up
    ``exp(-omega * int_t^T B(s,T) / (alpha + B(s,T)) ds)``.
    """
    if x is None:
        x = p.x0
    base = cir_survival(p, t, T, x)
    if not j.active:
        return base
    tau = np.atleast_1d(np.asarray(T, dtype=float) - np.asarray(t, dtype=float))
    corr = np.array([_jump_correction(p, j, float(u)) for u in tau.ravel()]).reshape(tau.shape)
    out = base * np.exp(-j.omega * corr)
    return out if np.ndim(T) or np.ndim(t) else float(out[0])


def levy_exponent(j: JumpParams, u):
    """Laplace exponent of ``theta_t = t + J'_t``: ``E[exp(-u theta_t)] = exp(-t phi(u))``."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ParameterDomainError("levy_exponent is defined for u >= 0")
    return u * (u + j.alpha + j.omega) / (u + j.alpha)


@functools.lru_cache(maxsize=None)
def _laguerre(n_nodes: int, shape: int):
    """Nodes and weights for ``int_0^inf f(u) u^(shape-1) e^-u du / Gamma(shape)``."""
    x, w = special.roots_genlaguerre(n_nodes, shape - 1.0)
    return x, w * math.exp(-special.gammaln(shape))


_NODE_LADDER = (16, 32, 64, 128, 256)


def _gamma_expectation(f: Callable, shape: int, rate: float, tol: float, rel: bool = False):
    """``E[f(S)]`` for ``S ~ Gamma(shape, rate)`` with node escalation."""
    prev = None
    for n in _NODE_LADDER:
        x, w = _laguerre(n, shape)
        val = np.tensordot(f(x / rate), w, axes=([-1], [0]))
        if prev is not None:
            err = np.max(np.abs(val - prev))
            scale = np.max(np.abs(val)) if rel else 1.0
            if err <= tol * max(scale, 1e-300) or err == 0.0:
                return val
        prev = val
    raise NumericalError(
        "Gauss-Laguerre escalation did not converge",
        {"shape": shape, "rate": rate, "tol": tol, "last_change": float(err)},
    )


MAX_SERIES_TERMS = 150


def subordinated_survival(p: CirParams, clock: JumpParams, T, x=None, tol: float = 1e-12):
    """Survival of the time-changed CIR model, ``P^theta(0, T)``.

    Evaluated as the Bochner mixture ``E[A(0, theta_T) exp(-B(0, theta_T) x)]``
    with ``theta_T = T + Gamma(N, alpha)``, ``N ~ Poisson(omega T)``.  The
    Poisson series is cut once the remaining mass is below ``tol``.
    """
    if x is None:
        x = p.x0
    if tol <= 0:
        raise ParameterDomainError("tol must be positive")
    Ts = np.atleast_1d(np.asarray(T, dtype=float))
    if np.any(Ts < 0):
        raise ParameterDomainError("T must be nonnegative")
    out = np.empty_like(Ts)
    for i, Ti in enumerate(Ts.ravel()):
        out.flat[i] = _subordinated_one(p, clock, float(Ti), float(x), tol)
    return out if np.ndim(T) else float(out[0])


def _subordinated_one(p, clock, T, x, tol):
    if T == 0.0:
        return 1.0
    base = float(cir_survival(p, 0.0, T, x))
    if not clock.active:
        return base
    lam = clock.omega * T
    n_max = int(stats.poisson.isf(tol, lam)) + 1
    if stats.poisson.sf(n_max, lam) >= tol:
        n_max += 5
    if n_max > MAX_SERIES_TERMS:
        raise NumericalError(
            "tolerance needs more Poisson terms than allowed",
            {"omega_T": lam, "tol": tol, "terms": n_max},
        )
    weights = stats.poisson.pmf(np.arange(n_max + 1), lam)
    total = weights[0] * base
    f = lambda s: cir_survival(p, 0.0, T + s, x)  # noqa: E731
    for n in range(1, n_max + 1):
        total += weights[n] * float(_gamma_expectation(f, n, clock.alpha, tol))
    return total


def adjusted_killing_rate(p: CirParams, clock: JumpParams, x, tol: float = 1e-10):
    """Killing rate of the subordinated process,
    ``k(x) = x + int (1 - A(0,s) e^{-B(0,s) x}) omega alpha e^{-alpha s} ds``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ParameterDomainError("state must be nonnegative")
    if not clock.active:
        return x + 0.0

    def f(s):
        A, B = cir_bond_factors(p, 0.0, s)
        with np.errstate(divide="ignore"):  # A underflows to 0 far in the tail; expm1(-inf) = -1
            return -np.expm1(np.log(A) - np.multiply.outer(x, B))

    return x + clock.omega * _gamma_expectation(f, 1, clock.alpha, tol, rel=True)


class KillingRateTable:
    """Spline of ``k(x) - x`` for fast evaluation along simulated paths.

    Values above the tabulated range fall back to direct quadrature.
    """

    def __init__(self, p: CirParams, clock: JumpParams, x_max: float | None = None, n_nodes: int = 2049):
        self.p, self.clock = p, clock
        if x_max is None:
            x_max = max(1.0, 20.0 * p.beta, 20.0 * p.x0)
        self.x_max = float(x_max)
        grid = np.linspace(0.0, self.x_max, n_nodes)
        excess = adjusted_killing_rate(p, clock, grid, tol=1e-12) - grid
        self._spline = interpolate.CubicSpline(grid, excess)

    def __call__(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        if not self.clock.active:
            return x
        out = x + self._spline(np.minimum(x, self.x_max))
        hi = x > self.x_max
        if np.any(hi):
            out[hi] = adjusted_killing_rate(self.p, self.clock, x[hi])
        return out


def model_survival(model: "Model | str", p: CirParams, jumps: JumpParams | None, T):
    """Unshifted model survival ``P(0, T)`` for any of the three models."""
    model = Model.parse(model)
    jumps = jumps or NO_JUMPS
    if model is Model.CIR:
        return cir_survival(p, 0.0, T)
    if model is Model.JCIR:
        return jcir_survival(p, jumps, 0.0, T)
    return subordinated_survival(p, jumps, T)


# ---------------------------------------------------------------------------
# shift

# shifts above -1e-5 (0.02% of a 5% hazard) count as nonnegative for pricing
DEFAULT_PSI_TOL = 1e-5


@dataclass(frozen=True, eq=False)
class ShiftCurve:
    times: np.ndarray
    values: np.ndarray
    model: Model
    tol: float = DEFAULT_PSI_TOL
    nonnegative: bool = field(init=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "nonnegative", bool(values.min() >= -self.tol))
        steps = np.diff(times)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * steps * (values[1:] + values[:-1]))])
        object.__setattr__(self, "_cum", cum)

    @classmethod
    def zero(cls, t_max: float, model: "Model | str" = Model.CIR) -> "ShiftCurve":
        return cls(np.array([0.0, t_max]), np.zeros(2), Model.parse(model))

    @property
    def min_value(self) -> float:
        return float(self.values.min())

    @property
    def argmin_time(self) -> float:
        return float(self.times[np.argmin(self.values)])

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    def integral(self, t):
        """Exact integral from 0 to ``t`` of the linearly interpolated shift."""
        t = np.asarray(t, dtype=float)
        i = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
        t0, v0 = self.times[i], self.values[i]
        h = self.times[i + 1] - t0
        slope = (self.values[i + 1] - v0) / h
        d = t - t0
        inside = self._cum[i] + v0 * d + 0.5 * slope * d * d
        beyond = self._cum[-1] + self.values[-1] * (t - self.times[-1])
        return np.where(t > self.times[-1], beyond, inside)

    def to_csv(self, path: "str | Path") -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "psi"])
            for t, v in zip(self.times, self.values):
                w.writerow([repr(float(t)), repr(float(v))])


def calibrate_shift(
    model: "Model | str",
    p: CirParams,
    jumps: JumpParams | None,
    market: MarketCurve,
    step: float,
    tol_psi: float = DEFAULT_PSI_TOL,
) -> ShiftCurve:
    """Tabulate the deterministic shift fitting ``market`` on a grid of spacing ``<= step``.

    ``psi(t) = h(t) + d/dt ln P_model(0, t)``, differentiated with central
    differences inside and second-order one-sided differences at the ends.
    """
    if step <= 0:
        raise ParameterDomainError("shift grid step must be positive")
    model = Model.parse(model)
    n = max(2, int(math.ceil(market.t_max / step - 1e-9)))
    times = np.linspace(0.0, market.t_max, n + 1)
    surv = np.asarray(model_survival(model, p, jumps, times), dtype=float)
    bad = ~(surv > 0.0) | ~np.isfinite(surv)
    if np.any(bad):
        t_bad = float(times[np.argmax(bad)])
        raise CalibrationDomainError(f"{model.value} survival vanishes at t={t_bad}", t=t_bad)
    dlog = np.gradient(np.log(surv), times, edge_order=2)
    return ShiftCurve(times, market.hazard(times) + dlog, model, tol=tol_psi)


def max_nonnegative_jump_rate(
    model: "Model | str",
    p: CirParams,
    mean_size: float,
    market: MarketCurve,
    step: float = 0.01,
    hi: float = 10.0,
    tol: float = 1e-4,
) -> float:
    """Largest jump arrival rate keeping the calibrated shift nonnegative (bisection)."""
    model = Model.parse(model)

    def ok(omega):
        return calibrate_shift(model, p, JumpParams.from_mean(omega, mean_size), market, step).nonnegative

    if not ok(0.0):
        return 0.0
    lo = 0.0
    if ok(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo
