"""YAML run configuration with environment and command-line overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .curves import CirParams, JumpParams, MarketCurve, Model
from .cva import Estimator, PricingConfig
from .errors import ParameterDomainError
from .exposure import ExposureParams
from .paths import SimConfig

ENV_PREFIX = "TCCVA_"
DEFAULT_RHOS = (-0.9, -0.6, -0.3, 0.0, 0.3, 0.6, 0.9)


@dataclass(frozen=True)
class RunConfig:
    name: str
    models: tuple[Model, ...]
    cir: CirParams
    jcir_jumps: JumpParams | None
    clock: JumpParams | None
    market: MarketCurve
    exposure: ExposureParams
    sim: SimConfig
    pricing: PricingConfig = PricingConfig()
    rhos: tuple[float, ...] = (0.0,)
    estimators: tuple[Estimator, ...] = (Estimator.PLAIN, Estimator.ADAPTIVE_CV)
    psi_step: float = 0.005
    psi_tol: float = 1e-5
    output: Path = Path("out")
    threads: int = 1
    dump_scenarios: int = 10
    source: Path | None = field(default=None, compare=False)

    def jumps_for(self, model: Model) -> JumpParams | None:
        if model is Model.JCIR:
            return self.jcir_jumps
        if model is Model.TCCIR:
            return self.clock
        return None

    def with_overrides(self, seed=None, threads=None, output=None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, sim=replace(cfg.sim, seed=int(seed)))
        if threads is not None:
            if int(threads) < 1:
                raise ParameterDomainError("threads must be >= 1")
            cfg = replace(cfg, threads=int(threads))
        if output is not None:
            cfg = replace(cfg, output=Path(output))
        return cfg


def _jumps(section):
    if section is None:
        return None
    if "alpha" in section and "mean_size" in section:
        raise ParameterDomainError("give either alpha or mean_size for a jump section, not both")
    omega = float(section["omega"])
    if "mean_size" in section:
        return JumpParams.from_mean(omega, float(section["mean_size"]))
    return JumpParams(omega, float(section["alpha"]))


def _market(section, horizon, base: Path):
    section = section or {}
    t_max = float(section.get("t_max", horizon))
    if "file" in section:
        path = Path(section["file"])
        if not path.is_absolute():
            path = base / path
        if not path.exists():
            raise FileNotFoundError(f"market curve file {path} not found")
        return MarketCurve.from_file(path, t_max)
    return MarketCurve.flat(float(section.get("flat_hazard", 0.05)), t_max)


def parse_config(data: dict, base: Path = Path("."), source: Path | None = None) -> RunConfig:
    """Build and validate a RunConfig from parsed YAML."""
    sim_s = data.get("sim", {})
    T = float(sim_s.get("T", 3.0))
    sim = SimConfig(T, float(sim_s.get("delta", 0.01)), int(sim_s.get("m", 100_000)),
                    float(sim_s.get("rho", 0.0)), int(sim_s.get("seed", 0)))
    exp_s = data.get("exposure", {})
    exposure = ExposureParams(exp_s.get("kind", "gaussian_forward"), float(exp_s.get("sigma", 0.08)),
                              float(exp_s.get("T", T)), float(exp_s.get("gamma", 0.0)), float(exp_s.get("V0", 0.0)))
    c = data["cir"]
    cir = CirParams(float(c["kappa"]), float(c["beta"]), float(c["eta"]), float(c["x0"]))
    models = tuple(Model.parse(m) for m in data.get("models", ["CIR", "JCIR", "TCCIR"]))
    jj, clk = _jumps(data.get("jcir_jumps")), _jumps(data.get("clock"))
    if Model.JCIR in models and jj is None:
        raise ParameterDomainError("JCIR selected but no jcir_jumps section")
    if Model.TCCIR in models and clk is None:
        raise ParameterDomainError("TCCIR selected but no clock section")
    pr = data.get("pricing", {})
    rhos = tuple(float(r) for r in data.get("rhos", DEFAULT_RHOS))
    for r in rhos:
        if not -1.0 <= r <= 1.0:
            raise ParameterDomainError(f"correlation {r} outside [-1, 1]")
    market = _market(data.get("market"), T, base)
    if market.t_max < T:
        raise ParameterDomainError("market curve horizon shorter than the simulation horizon")
    return RunConfig(
        name=str(data.get("name", "run")),
        models=models,
        cir=cir,
        jcir_jumps=jj,
        clock=clk,
        market=market,
        exposure=exposure,
        sim=sim,
        pricing=PricingConfig(float(pr.get("recovery", 0.0)), float(pr.get("rate", 0.0))),
        rhos=rhos,
        estimators=tuple(Estimator(e) for e in data.get("estimators", ["PlainMC", "AdaptiveCV"])),
        psi_step=float(data.get("psi_step", sim.delta / 2)),
        psi_tol=float(data.get("psi_tol", 1e-5)),
        output=Path(data.get("output", "out")),
        threads=int(data.get("threads", 1)),
        dump_scenarios=int(data.get("dump_scenarios", 10)),
        source=source,
    )


def load_config(path: "str | Path") -> RunConfig:
    path = Path(path)
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    return parse_config(data, base=path.parent, source=path)


def env_value(name: str, environ=None):
    """``TCCVA_<NAME>`` from the environment, or None."""
    environ = os.environ if environ is None else environ
    return environ.get(ENV_PREFIX + name.upper())


def env_flag(name: str, environ=None) -> bool:
    value = env_value(name, environ)
    return value is not None and value.strip().lower() in {"1", "true", "yes", "on"}
