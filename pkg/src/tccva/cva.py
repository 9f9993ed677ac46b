"""CVA estimators: plain Monte Carlo, independent closed form, adaptive control variate."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import integrate

from .curves import MarketCurve, Model
from .engine import IntensityModel, iter_bundles
from .errors import InconsistentShiftError, NumericalError, ParameterDomainError
from .exposure import ExposureParams, expected_positive_part
from .paths import SimConfig

Z95 = 1.959963984540054
MU_CLAMP = 100.0

CSV_FIELDS = ["model", "rho", "estimator", "cva", "std_error", "ci_lo", "ci_hi", "m", "runtime_seconds"]


class Estimator(str, Enum):
    PLAIN = "PlainMC"
    ADAPTIVE_CV = "AdaptiveCV"
    SHUFFLE_CV = "ShuffleCV"
    INDEPENDENT = "IndependentClosedForm"


@dataclass(frozen=True)
class PricingConfig:
    recovery: float = 0.0
    rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.recovery < 1.0:
            raise ParameterDomainError(f"recovery {self.recovery} outside [0, 1)")

    @property
    def lgd(self) -> float:
        return 1.0 - self.recovery

    def discount(self, t):
        return np.exp(-self.rate * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class CvaEstimate:
    value: float
    std_error: float
    m: int
    estimator: Estimator
    rho: float | None = None
    model: Model | None = None
    runtime_seconds: float | None = None
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def ci95(self) -> tuple[float, float]:
        return self.value - Z95 * self.std_error, self.value + Z95 * self.std_error

    def row(self, record_runtime: bool = False) -> dict:
        lo, hi = self.ci95
        rt = "" if not record_runtime or self.runtime_seconds is None else f"{self.runtime_seconds:.3f}"
        return {
            "model": "" if self.model is None else Model.parse(self.model).value,
            "rho": "" if self.rho is None else repr(float(self.rho)),
            "estimator": Estimator(self.estimator).value,
            "cva": repr(float(self.value)),
            "std_error": repr(float(self.std_error)),
            "ci_lo": repr(float(lo)),
            "ci_hi": repr(float(hi)),
            "m": str(self.m),
            "runtime_seconds": rt,
        }


def write_results_csv(estimates, path: "str | Path", record_runtime: bool = False) -> None:
    """Write estimates in the fixed schema; runtimes only when asked, to keep reruns byte-identical."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for e in estimates:
            w.writerow(e.row(record_runtime))


def cva_independent(
    market: MarketCurve,
    exposure: ExposureParams,
    pricing: PricingConfig = PricingConfig(),
    epsabs: float = 1e-12,
) -> CvaEstimate:
    """``(1-R) int_0^T E[V_u+] / B_u  h(u) exp(-int_0^u h) du`` by adaptive quadrature."""
    T = exposure.T
    if market.t_max < T:
        raise ParameterDomainError("market curve shorter than the exposure maturity")

    def f(u):
        return expected_positive_part(exposure, u) * pricing.discount(u) * market.hazard(u) * market.survival(u)

    brk = [t for t in np.asarray(market.times) if 0.0 < t < T]
    val, err, info = integrate.quad(f, 0.0, T, points=brk or None, epsabs=epsabs, epsrel=1e-10,
                                    limit=200, full_output=True)[:3]
    if not np.isfinite(val) or err > max(1e-8, 1e-6 * abs(val)):
        raise NumericalError("independent CVA quadrature did not converge", {"value": val, "abserr": err})
    return CvaEstimate(pricing.lgd * float(val), pricing.lgd * float(err), 0, Estimator.INDEPENDENT)


def scenario_payoffs(V, S, times, pricing: PricingConfig) -> np.ndarray:
    """``-(1-R) sum_k V+_{t_k} / B_{t_k} (S_{t_k} - S_{t_{k-1}})`` per scenario (row)."""
    weight = np.maximum(V[:, 1:], 0.0) * pricing.discount(times[1:])
    return -pricing.lgd * np.sum(weight * np.diff(S, axis=1), axis=1)


@dataclass(eq=False)
class SimulatedPayoffs:
    """Per-scenario CVA payoff ``Y`` and its control ``Z`` (S-perp survival, same exposure)."""

    Y: np.ndarray
    Z: np.ndarray | None
    Z_shuffle: np.ndarray | None
    runtime_seconds: float


def simulate_payoffs(
    im: IntensityModel,
    exposure: ExposureParams,
    sim: SimConfig,
    pricing: PricingConfig = PricingConfig(),
    controls: bool = True,
    shuffle: bool = False,
    threads: int = 1,
    block_size: int | None = None,
) -> SimulatedPayoffs:
    t0 = time.perf_counter()
    Y = np.empty(sim.m)
    Z = np.empty(sim.m) if controls else None
    Zs = np.empty(sim.m) if shuffle else None
    first_v = carry = None  # carry: survival path of the previous block's last scenario
    for b in iter_bundles(im, sim, exposure=exposure, with_perp=controls, threads=threads,
                         block_size=block_size):
        sl = slice(b.start, b.start + b.size)
        Y[sl] = scenario_payoffs(b.V, b.S, b.times, pricing)
        if controls:
            Z[sl] = scenario_payoffs(b.V, b.S_perp, b.times, pricing)
        if shuffle:
            # cyclic pairing: survival path of scenario i with the exposure of scenario i + 1
            if carry is None:
                first_v = b.V[:1].copy()
            else:
                Zs[b.start - 1] = scenario_payoffs(b.V[:1], carry, b.times, pricing)[0]
            Zs[b.start : b.start + b.size - 1] = scenario_payoffs(b.V[1:], b.S[:-1], b.times, pricing)
            carry = b.S[-1:].copy()
    if shuffle:
        Zs[-1] = scenario_payoffs(first_v, carry, sim.times, pricing)[0]
    return SimulatedPayoffs(Y, Z, Zs, time.perf_counter() - t0)


def _plain(Y: np.ndarray) -> tuple[float, float]:
    return float(np.mean(Y)), float(np.std(Y, ddof=1) / math.sqrt(Y.size)) if Y.size > 1 else 0.0


class CvControlState:
    """Running ``C_k = sum Y_i Xi_i``, ``V_k = sum Xi_i^2`` and ``mu_k = C_k / V_k`` (``mu_0 = 0``)."""

    def __init__(self, clamp: float = MU_CLAMP):
        self.k = 0
        self.C = 0.0
        self.V = 0.0
        self.clamp = clamp

    @property
    def mu(self) -> float:
        if self.V <= 0.0:
            return 0.0
        return float(np.clip(self.C / self.V, -self.clamp, self.clamp))

    def update(self, y: float, xi: float) -> None:
        self.k += 1
        self.C += y * xi
        self.V += xi * xi


def running_mu(Y, Xi, clamp: float = MU_CLAMP) -> np.ndarray:
    """``mu_0 .. mu_m`` of :class:`CvControlState`, vectorised."""
    C = np.concatenate([[0.0], np.cumsum(Y * Xi)])
    V = np.concatenate([[0.0], np.cumsum(Xi * Xi)])
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(V > 0.0, C / np.where(V > 0.0, V, 1.0), 0.0)
    return np.clip(mu, -clamp, clamp)


def adaptive_control_variate(Y, Z, mean_z: float, clamp: float = MU_CLAMP):
    """Estimate ``E[Y]`` by ``mean(Y_k - mu_{k-1} (Z_k - E[Z]))``.

    Returns (estimate, standard error, mu path).  ``mu_{k-1}`` only uses
    scenarios before ``k``, so each term is unbiased.
    """
    Y = np.asarray(Y, dtype=float)
    Xi = np.asarray(Z, dtype=float) - mean_z
    mu = running_mu(Y, Xi, clamp)
    terms = Y - mu[:-1] * Xi
    est, se = _plain(terms)
    return est, se, mu


def _require_consistent(im: IntensityModel):
    if not im.shift.nonnegative:
        raise InconsistentShiftError(
            f"{im.model.value} shift reaches {im.shift.min_value:.3e} at t={im.shift.argmin_time:.4g}; "
            "the shifted intensity is not a valid Cox intensity",
            params=im.describe(),
        )


def cva_plain_mc(
    im: IntensityModel,
    exposure: ExposureParams,
    sim: SimConfig,
    pricing: PricingConfig = PricingConfig(),
    threads: int = 1,
) -> CvaEstimate:
    _require_consistent(im)
    pay = simulate_payoffs(im, exposure, sim, pricing, controls=False, threads=threads)
    est, se = _plain(pay.Y)
    return CvaEstimate(est, se, sim.m, Estimator.PLAIN, sim.rho, im.model, pay.runtime_seconds)


def cva_adaptive_cv(
    im: IntensityModel,
    exposure: ExposureParams,
    sim: SimConfig,
    market: MarketCurve,
    pricing: PricingConfig = PricingConfig(),
    threads: int = 1,
) -> CvaEstimate:
    """Control ``Z``: same exposure, survival re-simulated with W-perp alone; ``E[Z]`` = independent CVA."""
    _require_consistent(im)
    mean_z = cva_independent(market, exposure, pricing).value
    pay = simulate_payoffs(im, exposure, sim, pricing, controls=True, threads=threads)
    est, se, mu = adaptive_control_variate(pay.Y, pay.Z, mean_z)
    return CvaEstimate(est, se, sim.m, Estimator.ADAPTIVE_CV, sim.rho, im.model, pay.runtime_seconds,
                       {"mu": mu})


def estimates_from_payoffs(
    pay: SimulatedPayoffs,
    mean_z: float | None,
    sim: SimConfig,
    model: Model,
    estimators=(Estimator.PLAIN, Estimator.ADAPTIVE_CV),
) -> list[CvaEstimate]:
    """Several estimators on one set of simulated payoffs (paired comparisons)."""
    out = []
    for name in estimators:
        name = Estimator(name)
        if name is Estimator.PLAIN:
            est, se = _plain(pay.Y)
            extra = {}
        elif name is Estimator.ADAPTIVE_CV:
            est, se, mu = adaptive_control_variate(pay.Y, pay.Z, mean_z)
            extra = {"mu": mu}
        elif name is Estimator.SHUFFLE_CV:
            est, se, mu = adaptive_control_variate(pay.Y, pay.Z_shuffle, mean_z)
            extra = {"mu": mu}
        else:
            raise ValueError(f"{name.value} is not a simulation estimator")
        out.append(CvaEstimate(est, se, sim.m, name, sim.rho, model, pay.runtime_seconds, extra))
    return out


def rho_sweep(
    models: list[IntensityModel],
    rhos,
    exposure: ExposureParams,
    sim: SimConfig,
    market: MarketCurve,
    pricing: PricingConfig = PricingConfig(),
    estimators=(Estimator.PLAIN, Estimator.ADAPTIVE_CV),
    threads: int = 1,
    include_independent: bool = False,
) -> list[CvaEstimate]:
    """CVA over a correlation grid.

    Every point reuses the seed of ``sim``, so scenario ``i`` sees the same
    random numbers at every correlation and for every model (common random numbers).
    """
    estimators = tuple(Estimator(e) for e in estimators)
    indep = cva_independent(market, exposure, pricing)
    need_z = any(e is not Estimator.PLAIN for e in estimators)
    shuffle = Estimator.SHUFFLE_CV in estimators
    rows = []
    if include_independent:
        rows.append(indep)
    for im in models:
        _require_consistent(im)
        for rho in rhos:
            s = replace(sim, rho=float(rho))
            pay = simulate_payoffs(im, exposure, s, pricing, controls=need_z, shuffle=shuffle, threads=threads)
            rows.extend(estimates_from_payoffs(pay, indep.value, s, im.model, estimators))
    return rows
