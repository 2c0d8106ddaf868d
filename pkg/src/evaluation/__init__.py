from .defense import (
    DefenseReport,
    DefenseSample,
    NoiseCurve,
    RelayParams,
    defense_downsample,
    defense_noise_probe,
    relay_chain,
    relay_simulate,
)
from .metrics import Alignment, align, sroa
from .report import EvaluationRow, evaluate_samples, summarize
