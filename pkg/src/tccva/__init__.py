"""Monte Carlo CVA with CIR++, JCIR++ and time-changed CIR++ default intensities."""

from .curves import (
    CirParams,
    JumpParams,
    KillingRateTable,
    MarketCurve,
    Model,
    ShiftCurve,
    adjusted_killing_rate,
    calibrate_shift,
    cir_bond_factors,
    cir_survival,
    jcir_survival,
    levy_exponent,
    model_survival,
    subordinated_survival,
)
from .cva import CvaEstimate, PricingConfig, cva_adaptive_cv, cva_independent, cva_plain_mc, rho_sweep
from .engine import IntensityModel, PathBundle, build_model, iter_bundles, simulate_block
from .exposure import ExposureKind, ExposureParams, expected_positive_part, simulate_exposure
from .paths import SimConfig

__all__ = [
    "CirParams", "JumpParams", "KillingRateTable", "MarketCurve", "Model", "ShiftCurve",
    "adjusted_killing_rate", "calibrate_shift", "cir_bond_factors", "cir_survival", "jcir_survival",
    "levy_exponent", "model_survival", "subordinated_survival",
    "CvaEstimate", "PricingConfig", "cva_adaptive_cv", "cva_independent", "cva_plain_mc", "rho_sweep",
    "IntensityModel", "PathBundle", "build_model", "iter_bundles", "simulate_block",
    "ExposureKind", "ExposureParams", "expected_positive_part", "simulate_exposure",
    "SimConfig",
]

__version__ = "0.1.0"
