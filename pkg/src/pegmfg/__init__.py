"""pegmfg: stablecoin de-peg dynamics as a two-population mean-field game.

Solves discounted linear-quadratic best responses for retail traders and
arbitrageurs against an aggregate market state, iterates to a certified
mean-field equilibrium, fits the model to observed mispricing series, and
decomposes peg-restoring order flow by market channel.
"""

from .backend import active_backend
from .params import (
    AgentParams,
    GarchParams,
    MarketParams,
    ModelParams,
    SimConfig,
    ValidationReport,
    baseline_params,
    validate,
)
from .meanfield import MeanFieldPath, ShockStream
from .lq import AffinePolicy, ValueQuadratic, best_response, evaluate_policy, stage_costs
from .env import garch_step, rollout, scale_impacts, softmax_route, step_mean_field
from .mfe import EquilibriumResult, exploitability, solve_mfe
from .analysis import ar1_half_life, decompose_flows, sweep
from .klines import KlineRecord, ObservedSeries, parse_klines, to_mispricing
from .calibration import (
    CalibrationResult,
    CalibrationSpec,
    RegimeSegmentation,
    calibrate,
    out_of_sample_eval,
    price_loss,
    segment_regimes,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "active_backend",
    "AgentParams",
    "GarchParams",
    "MarketParams",
    "ModelParams",
    "SimConfig",
    "ValidationReport",
    "baseline_params",
    "validate",
    "MeanFieldPath",
    "ShockStream",
    "AffinePolicy",
    "ValueQuadratic",
    "best_response",
    "evaluate_policy",
    "stage_costs",
    "garch_step",
    "rollout",
    "scale_impacts",
    "softmax_route",
    "step_mean_field",
    "EquilibriumResult",
    "exploitability",
    "solve_mfe",
    "ar1_half_life",
    "decompose_flows",
    "sweep",
    "KlineRecord",
    "ObservedSeries",
    "parse_klines",
    "to_mispricing",
    "CalibrationResult",
    "CalibrationSpec",
    "RegimeSegmentation",
    "calibrate",
    "out_of_sample_eval",
    "price_loss",
    "segment_regimes",
]
