"""Vocoder input stack: discrete pitch embedding fused with mel.

Each frame's pitch bin selects an 80-dim row from a learned table; the
row is concatenated with the frame's 80 mel values and a fully
connected layer fuses the 160 numbers back to 80. The fused matrix is
handed to a pluggable waveform backend. The default backend performs
spectral inversion, and the fuse layer initializes to an exact identity
on the mel half (pitch half zeroed), so an untrained conditioner passes
mel through bit-for-bit and the whole stack works without any vocoder
training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .signal import FeatureConfig, denormalize_mel, invert_mel


@dataclass
class VocoderConditioning:
    features: torch.Tensor  # [T, n_mels] fused conditioning
    mel: torch.Tensor  # the mel that went in
    pitch_bins: torch.Tensor  # the bin sequence that went in

    def __post_init__(self):
        if not (
            self.features.shape[0] == self.mel.shape[0] == self.pitch_bins.shape[0]
        ):
            raise ValueError("conditioning rows must match mel and pitch lengths")


def build_conditioning(
    mel: torch.Tensor,
    pitch_bins: torch.Tensor,
    table: torch.Tensor,
    fuse_weight: torch.Tensor,
    fuse_bias: torch.Tensor,
) -> VocoderConditioning:
    """Fuse one utterance: concat(mel row, table[bin]) through the FC.

    mel: [T, n_mels]; pitch_bins: [T] ints within the table; table:
    [pitch_bins, n_mels]; fuse_weight: [n_mels, 2*n_mels] (torch linear
    layout); fuse_bias: [n_mels].
    """
    if mel.dim() != 2 or pitch_bins.dim() != 1:
        raise ValueError("mel must be [T, n_mels] and pitch_bins [T]")
    if mel.shape[0] != pitch_bins.shape[0]:
        raise ValueError(
            f"length mismatch: mel has {mel.shape[0]} frames, "
            f"pitch_bins has {pitch_bins.shape[0]}"
        )
    if ((pitch_bins < 0) | (pitch_bins >= table.shape[0])).any():
        raise ValueError(f"pitch bin outside table range [0, {table.shape[0]})")
    stacked = torch.cat([mel, table[pitch_bins]], dim=1)
    fused = stacked @ fuse_weight.t() + fuse_bias
    return VocoderConditioning(fused, mel, pitch_bins)


class VocoderConditioner(nn.Module):
    def __init__(self, pitch_bins: int, n_mels: int = 80):
        super().__init__()
        if pitch_bins < 2:
            raise ValueError("pitch_bins must be >= 2")
        self.n_mels = n_mels
        self.table = nn.Embedding(pitch_bins, n_mels)
        self.fuse = nn.Linear(2 * n_mels, n_mels)
        with torch.no_grad():
            self.fuse.weight.zero_()
            self.fuse.weight[:, :n_mels].copy_(torch.eye(n_mels))
            self.fuse.bias.zero_()

    def forward(self, mel: torch.Tensor, pitch_bins: torch.Tensor) -> VocoderConditioning:
        return build_conditioning(
            mel, pitch_bins, self.table.weight, self.fuse.weight, self.fuse.bias
        )


def _griffin_lim_backend(
    features: np.ndarray, cfg: FeatureConfig, n_iters: int
) -> np.ndarray:
    # conditioning lives in the model's [0, 1] feature scale; map back
    # to log-mel before inversion
    return invert_mel(denormalize_mel(features, cfg), cfg, n_iters=n_iters)


VOCODER_BACKENDS = {"griffin-lim": _griffin_lim_backend}


def vocode(
    conditioning: VocoderConditioning,
    cfg: FeatureConfig,
    backend: str = "griffin-lim",
    n_iters: int = 60,
) -> np.ndarray:
    """Conditioning to waveform via a named backend, (T-1)*hop samples."""
    if backend not in VOCODER_BACKENDS:
        known = ", ".join(sorted(VOCODER_BACKENDS))
        raise ValueError(f"unknown vocoder backend {backend!r} (known: {known})")
    features = conditioning.features.detach().cpu().numpy().astype(np.float32)
    return VOCODER_BACKENDS[backend](features, cfg, n_iters)