"""Exposure models driven by a supplied Brownian path, and their Gaussian marginals."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import ParameterDomainError, ShapeError


class ExposureKind(str, Enum):
    GAUSSIAN = "gaussian_forward"
    BRIDGE = "drifted_bridge"

    @classmethod
    def parse(cls, value: "str | ExposureKind") -> "ExposureKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"gaussian": cls.GAUSSIAN, "forward": cls.GAUSSIAN, "bridge": cls.BRIDGE}
        if key in aliases:
            return aliases[key]
        return cls(key)


@dataclass(frozen=True)
class ExposureParams:
    """``GAUSSIAN``: dV = sigma dW.  ``BRIDGE``: dV = [gamma (T-t) - V/(T-t)] dt + sigma dW."""

    kind: ExposureKind
    sigma: float
    T: float
    gamma: float = 0.0
    V0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ExposureKind.parse(self.kind))
        if self.sigma < 0:
            raise ParameterDomainError(f"exposure volatility must be nonnegative, got {self.sigma}")
        if self.T <= 0:
            raise ParameterDomainError("exposure maturity must be positive")

    @property
    def needs_residual(self) -> bool:
        return self.kind is ExposureKind.BRIDGE and self.sigma > 0


def _bridge_weights(T: float, times: np.ndarray):
    """Per-step projection of ``int (T-s)^-1 dW`` on the step increment, and the residual scale.

    Over a step ``[a, b]`` with ``b < T``:
    ``int_a^b (T-s)^-1 dW = w * (W_b - W_a) + r * Z`` with
    ``w = ln((T-a)/(T-b)) / (b-a)`` (covariance with the increment divided by its variance)
    and ``r^2 = 1/(T-b) - 1/(T-a) - w^2 (b-a)`` (Ito isometry minus the explained part).
    """
    a, b = times[:-1], times[1:]
    h = b - a
    open_ = (T - b) > 0
    w = np.zeros_like(h)
    r = np.zeros_like(h)
    ra, rb = T - a[open_], T - b[open_]
    w[open_] = np.log(ra / rb) / h[open_]
    i2 = h[open_] / (ra * rb)
    r[open_] = np.sqrt(np.maximum(i2 - w[open_] ** 2 * h[open_], 0.0))
    return w, r


def simulate_exposure(e: ExposureParams, times, dw, residual=None) -> np.ndarray:
    """Exposure path on ``times`` from driver increments ``dw`` (last axis = steps).

    The Gaussian forward is exact.  The bridge uses ``U = V / (T - t)``, which
    satisfies ``dU = gamma dt + sigma (T-t)^-1 dW``; each step is sampled exactly
    given the driver increment, with ``residual`` supplying the independent
    standard normals for the part of the weighted integral the increment does
    not explain.  At ``t = T`` the bridge returns its pinned value 0.
    """
    times = np.asarray(times, dtype=float)
    dw = np.asarray(dw, dtype=float)
    if dw.shape[-1] != times.size - 1:
        raise ShapeError(f"{dw.shape[-1]} increments for {times.size} grid nodes")
    lead = dw.shape[:-1]
    if e.kind is ExposureKind.GAUSSIAN:
        out = np.empty(lead + (times.size,))
        out[..., 0] = e.V0
        np.cumsum(e.sigma * dw, axis=-1, out=out[..., 1:])
        out[..., 1:] += e.V0
        return out
    if np.any(times > e.T * (1 + 1e-12)):
        raise ParameterDomainError("bridge grid extends beyond maturity")
    w, r = _bridge_weights(e.T, times)
    du = e.gamma * np.diff(times) + e.sigma * w * dw
    if e.needs_residual:
        if residual is None:
            raise ValueError("bridge exposure needs residual normals")
        residual = np.asarray(residual, dtype=float)
        if residual.shape != dw.shape:
            raise ShapeError("residual normals must match the driver increments")
        du = du + e.sigma * r * residual
    u = np.empty(lead + (times.size,))
    u[..., 0] = e.V0 / e.T
    np.cumsum(du, axis=-1, out=u[..., 1:])
    u[..., 1:] += e.V0 / e.T
    v = u * np.maximum(e.T - times, 0.0)
    return v


def exposure_moments(e: ExposureParams, u):
    """Mean and standard deviation of the Gaussian marginal ``V_u``.

    Bridge: from ``V_u = (T-u) [V0/T + gamma u + sigma int_0^u (T-s)^-1 dW]``,
    mean ``V0 (T-u)/T + gamma u (T-u)`` and variance
    ``sigma^2 (T-u)^2 (1/(T-u) - 1/T) = sigma^2 u (T-u) / T``.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or np.any(u > e.T * (1 + 1e-12)):
        raise ParameterDomainError("exposure time outside [0, T]")
    if e.kind is ExposureKind.GAUSSIAN:
        return np.full_like(u, e.V0), e.sigma * np.sqrt(u)
    rest = np.maximum(e.T - u, 0.0)
    mean = e.V0 * rest / e.T + e.gamma * u * rest
    return mean, e.sigma * np.sqrt(u * rest / e.T)


def expected_positive_part(e: ExposureParams, u):
    """``E[max(V_u, 0)] = m Phi(m/s) + s phi(m/s)`` for ``V_u ~ N(m, s^2)``."""
    scalar = np.ndim(u) == 0
    mean, sd = exposure_moments(e, np.atleast_1d(u))
    out = np.maximum(mean, 0.0)
    pos = sd > 0
    z = mean[pos] / sd[pos]
    out[pos] = mean[pos] * stats.norm.cdf(z) + sd[pos] * stats.norm.pdf(z)
    return float(out[0]) if scalar else out


def write_profile_csv(e: ExposureParams, times, path: "str | Path") -> None:
    times = np.asarray(times, dtype=float)
    values = np.atleast_1d(expected_positive_part(e, times))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "expected_positive_exposure"])
        for t, v in zip(times, values):
            w.writerow([repr(float(t)), repr(float(v))])
