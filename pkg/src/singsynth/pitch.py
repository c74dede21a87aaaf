"""Inference-time pitch adaptation.

When converting a song to an unseen singer, the source contour usually
sits in the wrong register. The fix is a plain additive shift in Hz:
move the voiced part of the source contour so its mean matches the mean
of the target references, leaving melodic shape and unvoiced frames
untouched. Training never uses this; it only exists at inference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal import voiced_mean, voiced_mean_multi


@dataclass(frozen=True)
class PitchShiftConfig:
    enabled: bool = True
    f0_lower_bound: float = 65.0  # Hz, applied after shifting

    def __post_init__(self):
        if self.f0_lower_bound <= 0:
            raise ValueError("f0_lower_bound must be positive")


def shift_f0(
    source_f0: np.ndarray,
    source_mean: float,
    target_mean: float,
    cfg: PitchShiftConfig = PitchShiftConfig(),
) -> np.ndarray:
    """Add (target_mean - source_mean) to every voiced frame.

    Unvoiced frames (0.0) pass through untouched; voiced frames are
    clamped from below at ``cfg.f0_lower_bound`` after the shift so the
    output stays a legal contour.
    """
    source_f0 = np.asarray(source_f0, dtype=np.float64)
    if not cfg.enabled:
        return source_f0.copy()
    voiced = source_f0 > 0.0
    out = source_f0.copy()
    shifted = source_f0[voiced] + (target_mean - source_mean)
    out[voiced] = np.maximum(shifted, cfg.f0_lower_bound)
    return out


def shift_to_references(
    source_f0: np.ndarray,
    reference_f0s: list[np.ndarray],
    cfg: PitchShiftConfig = PitchShiftConfig(),
) -> np.ndarray:
    """Shift the source contour onto the register of the reference set.

    The target mean pools the voiced frames of all references. Raises
    NoVoicedFramesError when either side is entirely unvoiced.
    """
    if not cfg.enabled:
        return np.asarray(source_f0, dtype=np.float64).copy()
    return shift_f0(
        source_f0, voiced_mean(source_f0), voiced_mean_multi(reference_f0s), cfg
    )
