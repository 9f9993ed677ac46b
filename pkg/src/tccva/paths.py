"""Reference path operations: clock, refined grids, Diop scheme, synchronised drivers.

These functions work on one scenario (or on a stack of scenarios sharing a
grid) and favour clarity.  :mod:`tccva.engine` runs the same construction
compiled, for many scenarios at once, and is tested against this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curves import CirParams, JumpParams
from .errors import InconsistentShiftError, ParameterDomainError, ShapeError, StructuralError

# relative slack when comparing a clock increment with the base step
GRID_EPS = 1e-9


@dataclass(frozen=True)
class SimConfig:
    T: float
    delta: float
    m: int
    rho: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (self.T > 0 and 0 < self.delta <= self.T):
            raise ParameterDomainError(f"need 0 < delta <= T, got delta={self.delta}, T={self.T}")
        if self.m < 1:
            raise ParameterDomainError("need at least one scenario")
        if not -1.0 <= self.rho <= 1.0:
            raise ParameterDomainError(f"correlation {self.rho} outside [-1, 1]")

    @property
    def n_steps(self) -> int:
        return n_base_steps(self.T, self.delta)

    @property
    def times(self) -> np.ndarray:
        return base_grid(self.T, self.delta)

    def with_rho(self, rho: float) -> "SimConfig":
        return SimConfig(self.T, self.delta, self.m, rho, self.seed)


def n_base_steps(T: float, delta: float) -> int:
    return max(1, int(math.ceil(T / delta - GRID_EPS)))


def base_grid(T: float, delta: float) -> np.ndarray:
    return np.linspace(0.0, T, n_base_steps(T, delta) + 1)


@dataclass(frozen=True, eq=False)
class ClockPath:
    """``theta_t = t + sum of jump sizes up to t`` (right-continuous)."""

    jump_times: np.ndarray
    jump_sizes: np.ndarray
    T: float

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        js = np.asarray(self.jump_sizes, dtype=float)
        if jt.shape != js.shape or np.any(np.diff(jt) < 0) or np.any(js <= 0):
            raise StructuralError("jump times must be sorted and sizes positive")
        if jt.size and (jt[0] <= 0 or jt[-1] > self.T):
            raise StructuralError("jump times must lie in (0, T]")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "jump_sizes", js)
        object.__setattr__(self, "_cum", np.concatenate([[0.0], np.cumsum(js)]))

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)

    def theta_at(self, t):
        t = np.asarray(t, dtype=float)
        return t + self._cum[np.searchsorted(self.jump_times, t, side="right")]

    def theta_left(self, t):
        t = np.asarray(t, dtype=float)
        return t + self._cum[np.searchsorted(self.jump_times, t, side="left")]


def compound_poisson(j: JumpParams, T: float, rng: np.random.Generator):
    """Arrival times on (0, T] from exponential inter-arrivals, then Exp(alpha) sizes."""
    if not j.active:
        return np.empty(0), np.empty(0)
    scale = 1.0 / j.omega
    chunk = max(8, int(2 * j.omega * T) + 8)
    times = np.cumsum(rng.exponential(scale, chunk))
    while times[-1] <= T:
        times = np.concatenate([times, times[-1] + np.cumsum(rng.exponential(scale, chunk))])
    times = times[times <= T]
    sizes = rng.exponential(1.0 / j.alpha, times.size)
    return times, sizes


def sample_clock(j: JumpParams, T: float, rng: np.random.Generator) -> ClockPath:
    if T <= 0:
        raise ParameterDomainError("clock horizon must be positive")
    times, sizes = compound_poisson(j, T, rng)
    return ClockPath(times, sizes, T)


def fill_count(dtheta, delta):
    """Number of equal sub-steps ``ceil(dtheta / delta)`` with float slack."""
    return np.maximum(1, np.ceil(np.asarray(dtheta) / delta - GRID_EPS)).astype(np.int64)


@dataclass(frozen=True, eq=False)
class RefinedGrid:
    base: np.ndarray  # t_0 .. t_n
    theta: np.ndarray  # theta at the base nodes
    fine: np.ndarray  # sorted simulation nodes in clock time
    index: np.ndarray  # fine[index[k]] == theta[k]
    gaps: np.ndarray  # (n_jumps, 2): (theta_{t-}, theta_t) for each clock jump
    delta: float

    @property
    def max_spacing(self) -> float:
        return float(np.max(np.diff(self.fine))) if self.fine.size > 1 else 0.0

    @property
    def sample_times(self) -> np.ndarray:
        """Nodes on which a driver must be known: fine nodes plus gap endpoints."""
        return np.unique(np.concatenate([self.fine, self.gaps.ravel()]))


def build_refined_grid(clock: ClockPath, T: float, delta: float) -> RefinedGrid:
    base = base_grid(T, delta)
    theta = clock.theta_at(base)
    dtheta = np.diff(theta)
    counts = fill_count(dtheta, delta)
    pieces = [theta[:1]]
    for k in range(base.size - 1):
        n_k = counts[k]
        pieces.append(theta[k] + np.arange(1, n_k + 1) * (dtheta[k] / n_k))
        pieces[-1][-1] = theta[k + 1]
    fine = np.concatenate(pieces)
    index = np.concatenate([[0], np.cumsum(counts)])
    gaps = np.column_stack([clock.theta_left(clock.jump_times), clock.theta_at(clock.jump_times)])
    if fine.size > 1 and np.max(np.diff(fine)) > delta * (1.0 + GRID_EPS):
        raise StructuralError("refined grid spacing exceeds the base step")
    return RefinedGrid(base, theta, fine, index, gaps.reshape(-1, 2), float(delta))


def simulate_cir_diop(p: CirParams, times, dW) -> np.ndarray:
    """Euler scheme with the positive part inside drift and diffusion.

    ``dW`` has shape ``(..., len(times) - 1)``; leading axes are scenarios.
    """
    times = np.asarray(times, dtype=float)
    dW = np.asarray(dW, dtype=float)
    if dW.shape[-1] != times.size - 1:
        raise ShapeError(f"{dW.shape[-1]} increments for {times.size} grid nodes")
    h = np.diff(times)
    if np.any(h <= 0):
        raise ShapeError("grid must be strictly increasing")
    x = np.empty(dW.shape[:-1] + (times.size,))
    x[..., 0] = p.x0
    for i in range(h.size):
        xp = np.maximum(x[..., i], 0.0)
        x[..., i + 1] = x[..., i] + p.kappa * (p.beta - xp) * h[i] + p.eta * np.sqrt(xp) * dW[..., i]
    return x


def simulate_jcir(
    p: CirParams,
    j: JumpParams,
    times,
    dW,
    rng: np.random.Generator | None = None,
    jumps: tuple | None = None,
) -> np.ndarray:
    """Diop scheme plus compound-Poisson jumps, added at the node closing their step.

    Jumps come from ``jumps=(arrival_times, sizes)`` when given, otherwise they
    are sampled from ``rng``.
    """
    times = np.asarray(times, dtype=float)
    dW = np.asarray(dW, dtype=float)
    if dW.ndim != 1:
        raise ShapeError("simulate_jcir runs one scenario at a time")
    if jumps is None:
        if rng is None:
            raise ValueError("need either rng or explicit jumps")
        jumps = compound_poisson(j, float(times[-1]), rng)
    jt, js = (np.asarray(a, dtype=float) for a in jumps)
    slot = np.searchsorted(times, jt, side="left")  # jump at u lands on first node >= u
    add = np.zeros(times.size)
    np.add.at(add, slot, js)
    h = np.diff(times)
    x = np.empty(times.size)
    x[0] = p.x0
    for i in range(h.size):
        xp = max(x[i], 0.0)
        x[i + 1] = x[i] + p.kappa * (p.beta - xp) * h[i] + p.eta * math.sqrt(xp) * dW[i] + add[i + 1]
    return x


def brownian_on(times, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Brownian motion sampled at sorted ``times`` (value 0 at time 0)."""
    times = np.asarray(times, dtype=float)
    steps = np.diff(np.concatenate([[0.0], times]))
    shape = (steps.size,) if size is None else (size, steps.size)
    return np.cumsum(np.sqrt(steps) * rng.standard_normal(shape), axis=-1)


def _lookup(times, values, query, what):
    idx = np.searchsorted(times, query)
    idx = np.clip(idx, 0, times.size - 1)
    if not np.allclose(times[idx], query, rtol=0.0, atol=1e-12):
        raise StructuralError(f"driver not sampled at the {what}")
    return values[..., idx]


def reconstruct_synchronized_bm(w_times, w_values, grid: RefinedGrid) -> np.ndarray:
    """Driver that follows ``W`` along the clock but skips every clock-jump gap.

    ``w_values`` holds ``W`` at ``w_times`` in clock time (typically
    ``grid.sample_times``).  Returns the reconstructed path at the base nodes:
    ``W_theta(t) - sum_{t_j <= t} (W_theta(t_j) - W_theta(t_j-))``.
    """
    w_times = np.asarray(w_times, dtype=float)
    w_values = np.asarray(w_values, dtype=float)
    if grid.gaps is None:
        raise StructuralError("refined grid carries no jump-gap markers")
    if w_times[0] != 0.0:
        w_times = np.concatenate([[0.0], w_times])
        w_values = np.concatenate([np.zeros(w_values.shape[:-1] + (1,)), w_values], axis=-1)
    at_nodes = _lookup(w_times, w_values, grid.theta, "clock image of the base grid")
    if grid.gaps.size == 0:
        return at_nodes
    lo = _lookup(w_times, w_values, grid.gaps[:, 0], "left end of a jump gap")
    hi = _lookup(w_times, w_values, grid.gaps[:, 1], "right end of a jump gap")
    across = hi - lo
    # a gap counts from the first base node whose clock value is at or beyond its right end
    first = np.searchsorted(grid.theta, grid.gaps[:, 1] - 1e-12)
    per_node = np.zeros(w_values.shape[:-1] + (grid.theta.size,))
    for g, k in enumerate(first):
        per_node[..., k] += across[..., g]
    return at_nodes - np.cumsum(per_node, axis=-1)


def correlate_drivers(rho: float, dw_v, dw_perp):
    if not -1.0 <= rho <= 1.0:
        raise ParameterDomainError(f"correlation {rho} outside [-1, 1]")
    dw_v = np.asarray(dw_v, dtype=float)
    dw_perp = np.asarray(dw_perp, dtype=float)
    if dw_v.shape != dw_perp.shape:
        raise ShapeError("driver increments must have equal shapes")
    return rho * dw_v + math.sqrt(1.0 - rho * rho) * dw_perp


def survival_path(lam, times, tol: float = 0.0, context=None) -> np.ndarray:
    """``S_t = exp(-int_0^t lambda)`` with the trapezoidal rule along the last axis."""
    lam = np.asarray(lam, dtype=float)
    times = np.asarray(times, dtype=float)
    if lam.shape[-1] != times.size:
        raise ShapeError("intensity path and grid lengths differ")
    if np.any(lam < -tol):
        raise InconsistentShiftError(
            f"negative intensity {float(lam.min()):.3e} on the simulated paths", params=context
        )
    h = np.diff(times)
    integral = np.cumsum(0.5 * h * (lam[..., 1:] + lam[..., :-1]), axis=-1)
    out = np.ones_like(lam)
    out[..., 1:] = np.exp(-integral)
    return out
