"""Compiled multi-scenario path engine.

One kernel covers the three intensity models.  For every scenario it walks the
base grid; each base interval is split into ``ceil(dtheta / delta)`` equal
steps in clock time (a single step when there is no clock).  A step overlaps
the continuous part of the clock by ``c`` and the jump gaps by ``g``; the
exposure driver only collects the continuous part, which is the synchronised
reconstruction, while the intensity driver sees the full clock-time increment.

Random numbers for scenario ``i`` come from the Philox substreams
``(seed, i, purpose)`` of :mod:`tccva.rng`, so a scenario's path does not
depend on the block it was simulated in nor on the number of worker threads.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .curves import (
    NO_JUMPS,
    CirParams,
    JumpParams,
    KillingRateTable,
    MarketCurve,
    Model,
    ShiftCurve,
    calibrate_shift,
)
from .errors import InconsistentShiftError, ParameterDomainError
from .exposure import ExposureParams, simulate_exposure
from .paths import SimConfig, compound_poisson, fill_count
from .rng import Purpose, StreamFactory

# scenario-by-node cells per block; bounds memory, not results
BLOCK_CELLS = 1 << 21
SURVIVAL_MODES = ("killing", "clock")


@dataclass(frozen=True, eq=False)
class IntensityModel:
    """Calibrated intensity: CIR state, jumps (intensity jumps for JCIR, clock for TCCIR), shift."""

    model: Model
    cir: CirParams
    jumps: JumpParams
    shift: ShiftCurve
    killing: KillingRateTable | None = None

    @property
    def intensity_jumps(self) -> JumpParams:
        return self.jumps if self.model is Model.JCIR else NO_JUMPS

    @property
    def clock(self) -> JumpParams:
        return self.jumps if self.model is Model.TCCIR else NO_JUMPS

    def killing_rate(self, x):
        """State-to-intensity map before the shift: ``x+`` or the adjusted killing rate."""
        if self.killing is not None:
            return self.killing(x)
        return np.maximum(x, 0.0)

    def describe(self) -> dict:
        return {
            "model": self.model.value,
            "cir": (self.cir.kappa, self.cir.beta, self.cir.eta, self.cir.x0),
            "jumps": (self.jumps.omega, self.jumps.alpha),
            "psi_min": self.shift.min_value,
        }


def build_model(
    model: "Model | str",
    cir: CirParams,
    jumps: JumpParams | None = None,
    market: MarketCurve | None = None,
    shift: ShiftCurve | None = None,
    psi_step: float = 0.005,
    psi_tol: float | None = None,
) -> IntensityModel:
    """Calibrate (or take) the shift and prepare the killing-rate table."""
    model = Model.parse(model)
    jumps = jumps or NO_JUMPS
    if model is Model.CIR:
        jumps = NO_JUMPS
    if shift is None:
        if market is None:
            raise ValueError("need a market curve or a precomputed shift")
        kw = {} if psi_tol is None else {"tol_psi": psi_tol}
        shift = calibrate_shift(model, cir, jumps, market, psi_step, **kw)
    killing = KillingRateTable(cir, jumps) if model is Model.TCCIR and jumps.active else None
    return IntensityModel(model, cir, jumps, shift, killing)


@dataclass(eq=False)
class PathBundle:
    """Paths of scenarios ``start .. start + size - 1`` on the base grid."""

    start: int
    times: np.ndarray
    X: np.ndarray  # state at the base nodes (clock image for TCCIR)
    W: np.ndarray  # synchronised exposure driver
    S: np.ndarray  # survival process
    theta_T: np.ndarray  # clock value at the horizon
    X_perp: np.ndarray | None = None
    S_perp: np.ndarray | None = None  # survival re-simulated with W-perp as the only driver
    V: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.X.shape[0]

    @property
    def scenarios(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.size)


@njit(cache=True, nogil=True)
def _kernel(
    times, counts, cj_off, cj_t, cj_y, jump_add, z_off, zv, zg, zp,
    kappa, beta, eta, x0, rho, use_v, use_g, use_p, want_perp, want_int,
    X, Xp, Wt, Ic, theta_T,
):  # fmt: skip
    n_scen, n_nodes = X.shape
    srho = math.sqrt(max(0.0, 1.0 - rho * rho))
    for s in range(n_scen):
        x = x0
        xp = x0
        w = 0.0
        th = 0.0
        acc = 0.0
        X[s, 0] = x0
        Wt[s, 0] = 0.0
        if want_perp:
            Xp[s, 0] = x0
        if want_int:
            Ic[s, 0] = 0.0
        jp = cj_off[s]
        jend = cj_off[s + 1]
        zi = z_off[s]
        for k in range(n_nodes - 1):
            t0 = times[k]
            t1 = times[k + 1]
            first = jp
            extra = 0.0
            while jp < jend and cj_t[jp] <= t1:
                extra += cj_y[jp]
                jp += 1
            dth = (t1 - t0) + extra
            nk = counts[s, k]
            hf = dth / nk
            for i in range(nk):
                lo = i * hf
                hi = dth if i == nk - 1 else (i + 1) * hf
                step = hi - lo
                g = 0.0
                cum = 0.0
                for q in range(first, jp):
                    left = (cj_t[q] - t0) + cum
                    right = left + cj_y[q]
                    cum += cj_y[q]
                    ov = min(hi, right) - max(lo, left)
                    if ov > 0.0:
                        g += ov
                c = step - g
                if c < 0.0:
                    c = 0.0
                dv = 0.0
                if use_v:
                    dc = math.sqrt(c) * zv[zi]
                    w += dc
                    dv = dc
                if use_g and g > 0.0:
                    dv += math.sqrt(g) * zg[zi]
                dp = 0.0
                if use_p:
                    dp = math.sqrt(step) * zp[zi]
                xpos = x if x > 0.0 else 0.0
                x += kappa * (beta - xpos) * step + eta * math.sqrt(xpos) * (rho * dv + srho * dp)
                if want_int:
                    acc += 0.5 * step * (xpos + (x if x > 0.0 else 0.0))
                if want_perp:
                    xpos = xp if xp > 0.0 else 0.0
                    xp += kappa * (beta - xpos) * step + eta * math.sqrt(xpos) * dp
                zi += 1
            x += jump_add[s, k + 1]
            xp += jump_add[s, k + 1]
            th += dth
            X[s, k + 1] = x
            Wt[s, k + 1] = w
            if want_perp:
                Xp[s, k + 1] = xp
            if want_int:
                Ic[s, k + 1] = acc
        theta_T[s] = th


def _csr(pieces):
    off = np.zeros(len(pieces) + 1, dtype=np.int64)
    off[1:] = np.cumsum([p.size for p in pieces])
    flat = np.concatenate(pieces) if pieces else np.empty(0)
    return off, flat


def simulate_block(
    im: IntensityModel,
    sim: SimConfig,
    start: int,
    stop: int,
    exposure: ExposureParams | None = None,
    with_perp: bool = False,
    check_tol: float | None = None,
    survival: str = "killing",
    with_driver: bool = False,
) -> PathBundle:
    """Simulate scenarios ``start .. stop - 1``.

    ``survival="killing"`` integrates ``k(X) + psi`` along the base grid.
    ``survival="clock"`` instead integrates ``X+`` over all of clock time,
    gaps included, plus the shift: the exact conditional survival given the
    whole clock-time path.  The two coincide without a clock.
    """
    if not 0 <= start < stop:
        raise ParameterDomainError("empty or negative scenario range")
    if survival not in SURVIVAL_MODES:
        raise ValueError(f"survival mode must be one of {SURVIVAL_MODES}")
    times = sim.times
    n = times.size - 1
    size = stop - start
    rho = float(sim.rho)
    streams = StreamFactory(sim.seed)
    clock = im.clock
    ijumps = im.intensity_jumps

    c_times, c_sizes, jump_add = [], [], np.zeros((size, n + 1))
    counts = np.ones((size, n), dtype=np.int64)
    for b in range(size):
        s = start + b
        if clock.active:
            jt, js = compound_poisson(clock, sim.T, streams(s, Purpose.CLOCK))
            if jt.size:
                dtheta = np.diff(times).copy()
                np.add.at(dtheta, np.searchsorted(times, jt, side="left") - 1, js)
                counts[b] = fill_count(dtheta, sim.delta)
        else:
            jt = js = np.empty(0)
        c_times.append(jt)
        c_sizes.append(js)
        if ijumps.active:
            it, iy = compound_poisson(ijumps, sim.T, streams(s, Purpose.INTENSITY_JUMPS))
            np.add.at(jump_add[b], np.searchsorted(times, it, side="left"), iy)

    cj_off, cj_t = _csr(c_times)
    _, cj_y = _csr(c_sizes)
    per_scen = counts.sum(axis=1)
    z_off = np.zeros(size + 1, dtype=np.int64)
    z_off[1:] = np.cumsum(per_scen)
    total = int(z_off[-1])

    need_w = exposure is not None or with_driver
    use_v = need_w or rho != 0.0
    use_g = rho != 0.0 and clock.active
    use_p = abs(rho) != 1.0 or with_perp
    empty = np.empty(0)
    zv = np.empty(total) if use_v else empty
    zg = np.empty(total) if use_g else empty
    zp = np.empty(total) if use_p else empty
    for b in range(size):
        s = start + b
        lo, hi = z_off[b], z_off[b + 1]
        if use_v:
            streams(s, Purpose.W_V).standard_normal(out=zv[lo:hi])
        if use_g:
            streams(s, Purpose.W_V_GAP).standard_normal(out=zg[lo:hi])
        if use_p:
            streams(s, Purpose.W_PERP).standard_normal(out=zp[lo:hi])

    X = np.empty((size, n + 1))
    Xp = np.empty((size, n + 1)) if with_perp else np.empty((1, 1))
    want_int = survival == "clock"
    Ic = np.empty((size, n + 1)) if want_int else np.empty((1, 1))
    Wt = np.empty((size, n + 1))
    theta_T = np.empty(size)
    p = im.cir
    _kernel(
        times, counts, cj_off, cj_t, cj_y, jump_add, z_off, zv, zg, zp,
        p.kappa, p.beta, p.eta, p.x0, rho, use_v, use_g, use_p, with_perp, want_int,
        X, Xp, Wt, Ic, theta_T,
    )  # fmt: skip

    psi_int = im.shift.integral(times)
    tol = im.shift.tol if check_tol is None else check_tol
    if want_int:
        _check_shift(im, times, np.maximum(X, 0.0), tol)
        S = np.exp(-(Ic + psi_int))
    else:
        S = _survival(im, times, X, psi_int, tol)
    bundle = PathBundle(start, times, X, Wt, S, theta_T)
    if with_perp:
        bundle.X_perp = Xp
        bundle.S_perp = _survival(im, times, Xp, psi_int, tol)
    if exposure is not None:
        residual = None
        if exposure.needs_residual:
            residual = np.empty((size, n))
            for b in range(size):
                streams(start + b, Purpose.EXPOSURE_RESIDUAL).standard_normal(out=residual[b])
        bundle.V = simulate_exposure(exposure, times, np.diff(Wt, axis=1), residual)
    return bundle


def _check_shift(im: IntensityModel, times, k, tol):
    if im.shift.min_value < -tol:
        lam = k + im.shift(times)
        if np.any(lam < -tol):
            row, col = np.unravel_index(np.argmin(lam), lam.shape)
            raise InconsistentShiftError(
                f"negative intensity {float(lam[row, col]):.3e} at t={float(times[col]):.4g}",
                params=im.describe(),
            )


def _survival(im: IntensityModel, times, X, psi_int, tol):
    """``exp(-int k(X+) - Psi(t))``; trapezoid for the state part, exact for the shift."""
    k = im.killing_rate(X)
    _check_shift(im, times, k, tol)
    h = np.diff(times)
    integral = np.empty_like(k)
    integral[:, 0] = 0.0
    np.cumsum(0.5 * h * (k[:, 1:] + k[:, :-1]), axis=1, out=integral[:, 1:])
    return np.exp(-(integral + psi_int))


def default_block_size(sim: SimConfig) -> int:
    return int(min(sim.m, max(16, min(8192, BLOCK_CELLS // (sim.n_steps + 1)))))


def iter_bundles(
    im: IntensityModel,
    sim: SimConfig,
    exposure: ExposureParams | None = None,
    with_perp: bool = False,
    threads: int = 1,
    block_size: int | None = None,
    check_tol: float | None = None,
    survival: str = "killing",
    with_driver: bool = False,
):
    """Yield PathBundles covering scenarios ``0 .. m-1`` in index order."""
    bs = block_size or default_block_size(sim)
    bounds = [(a, min(a + bs, sim.m)) for a in range(0, sim.m, bs)]

    def run(ab):
        return simulate_block(im, sim, ab[0], ab[1], exposure, with_perp, check_tol, survival, with_driver)

    if threads <= 1:
        for ab in bounds:
            yield run(ab)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # bounded look-ahead keeps memory flat while workers stay busy
        pending = []
        it = iter(bounds)
        for ab in it:
            pending.append(pool.submit(run, ab))
            if len(pending) >= 2 * threads:
                break
        while pending:
            bundle = pending.pop(0).result()
            nxt = next(it, None)
            if nxt is not None:
                pending.append(pool.submit(run, nxt))
            yield bundle


def dump_paths(bundles, path: "str | Path", every: int = 1) -> None:
    """Long-format CSV: scenario, t, X, S, V (V blank when no exposure was simulated)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "t", "X", "S", "V"])
        for b in bundles:
            for row in range(b.size):
                for k in range(0, b.times.size, every):
                    v = "" if b.V is None else repr(float(b.V[row, k]))
                    w.writerow([b.start + row, repr(float(b.times[k])), repr(float(b.X[row, k])),
                                repr(float(b.S[row, k])), v])
