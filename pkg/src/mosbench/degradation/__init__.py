"""Corpus synthesis: condition plans, DSP impairments, segmentation, external tools."""
from .adapters import run_external_adapter
from .dsp import (
    add_white_noise,
    apply_filter,
    clip_amplitude,
    convolve_rir,
    mix_background_noise,
    synthetic_rir,
)
from .pipeline import PlanRun, apply_condition, execute_plan
from .plan import (
    TENCENT_STAGE1_WEIGHTS,
    TENCENT_STAGE2_WEIGHTS,
    ConditionPlan,
    ConditionSpec,
    sample_plan,
)
from .segment import segment_speech, speech_activity

__all__ = [
    "TENCENT_STAGE1_WEIGHTS",
    "TENCENT_STAGE2_WEIGHTS",
    "ConditionPlan",
    "ConditionSpec",
    "PlanRun",
    "add_white_noise",
    "apply_condition",
    "apply_filter",
    "clip_amplitude",
    "convolve_rir",
    "execute_plan",
    "mix_background_noise",
    "run_external_adapter",
    "sample_plan",
    "segment_speech",
    "speech_activity",
    "synthetic_rir",
]
