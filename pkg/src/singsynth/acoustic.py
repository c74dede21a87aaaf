"""Non-autoregressive acoustic model for singing synthesis.

Phoneme ids run through an embedding plus a stack of self-attention
blocks with convolutional feed-forward layers, get expanded to frame
rate by repeating each state for its phoneme duration, receive additive
pitch and speaker conditioning, and a decoder stack of the same block
type maps the frames to an 80-band mel-spectrogram. There is no
duration predictor: durations are always given.

Everything is batch-first with explicit boolean masks (True = real
position). Single-utterance tensors are accepted and promoted.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn


@dataclass
class ModelConfig:
    n_phonemes: int
    d_model: int = 256
    n_heads: int = 2
    encoder_blocks: int = 4
    decoder_blocks: int = 4
    ffn_filter: int = 1024
    ffn_kernel: int = 9
    n_mels: int = 80
    pitch_bins: int = 256
    dropout: float = 0.1
    spk_dim: int = 256
    hf_dim: int = 256
    max_frames: int = 4000
    use_positional: bool = True  # test hook: off = permutation-equivariant attention

    def __post_init__(self):
        if self.n_phonemes < 1:
            raise ValueError("n_phonemes must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.d_model % 2 != 0:
            raise ValueError("d_model must be even for sinusoidal tables")
        if self.pitch_bins < 2:
            raise ValueError("pitch_bins must be >= 2")
        if self.ffn_kernel % 2 != 1:
            raise ValueError("ffn_kernel must be odd")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @classmethod
    def paper_profile(cls, n_phonemes: int, **overrides) -> "ModelConfig":
        return cls(n_phonemes=n_phonemes, **overrides)

    @classmethod
    def toy_profile(cls, n_phonemes: int, **overrides) -> "ModelConfig":
        """Small profile for CPU-scale runs and the acceptance suite."""
        base = dict(
            d_model=64,
            n_heads=2,
            encoder_blocks=1,
            decoder_blocks=1,
            ffn_filter=256,
            ffn_kernel=9,
            pitch_bins=128,
            dropout=0.0,
            hf_dim=128,
        )
        base.update(overrides)
        return cls(n_phonemes=n_phonemes, **base)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def sinusoidal_table(n_positions: int, d_model: int) -> torch.Tensor:
    """Standard alternating sin/cos position table, [n_positions, d_model]."""
    position = torch.arange(n_positions, dtype=torch.float64).unsqueeze(1)
    div = torch.exp(
        torch.arange(0, d_model, 2, dtype=torch.float64)
        * (-math.log(10000.0) / d_model)
    )
    table = torch.zeros(n_positions, d_model, dtype=torch.float64)
    table[:, 0::2] = torch.sin(position * div)
    table[:, 1::2] = torch.cos(position * div)
    return table.to(torch.get_default_dtype())


def quantize_pitch(
    f0: np.ndarray, f0_floor: float, f0_ceil: float, bins: int
) -> np.ndarray:
    """Map an f0 contour in Hz to integer bins.

    Bin 0 is reserved for unvoiced frames. Voiced values are clamped
    into [f0_floor, f0_ceil] and spread log-uniformly over bins
    1..bins-1, so equal musical intervals span equal bin counts.
    """
    if bins < 2:
        raise ValueError("need at least 2 bins")
    if not 0 < f0_floor < f0_ceil:
        raise ValueError("need 0 < f0_floor < f0_ceil")
    f0 = np.asarray(f0, dtype=np.float64)
    voiced = f0 > 0.0
    clamped = np.clip(f0, f0_floor, f0_ceil)
    frac = (np.log(clamped) - np.log(f0_floor)) / (np.log(f0_ceil) - np.log(f0_floor))
    idx = 1 + np.floor((bins - 2) * frac).astype(np.int64)
    idx = np.clip(idx, 1, bins - 1)
    return np.where(voiced, idx, 0).astype(np.int64)


def length_regulate(
    hidden: torch.Tensor, durations: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Repeat each phoneme state for its duration.

    hidden: [L, d] or [B, L, d]; durations: matching [L] or [B, L] of
    non-negative ints. Returns (frames, frame_mask) where frames is
    [B, T_max, d] zero-padded per item and frame_mask is [B, T_max]
    bool. Unbatched input comes back unbatched with a [T] mask.
    """
    unbatched = hidden.dim() == 2
    if unbatched:
        hidden = hidden.unsqueeze(0)
        durations = durations.unsqueeze(0)
    if durations.shape != hidden.shape[:2]:
        raise ValueError("durations shape does not match hidden states")
    if torch.is_floating_point(durations):
        raise ValueError("durations must be integers")
    if (durations < 0).any():
        raise ValueError("negative duration")
    totals = durations.sum(dim=1)
    t_max = int(totals.max().item()) if totals.numel() else 0
    b, _, d = hidden.shape
    frames = hidden.new_zeros(b, t_max, d)
    mask = torch.zeros(b, t_max, dtype=torch.bool, device=hidden.device)
    for i in range(b):
        t_i = int(totals[i].item())
        if t_i:
            frames[i, :t_i] = torch.repeat_interleave(hidden[i], durations[i], dim=0)
            mask[i, :t_i] = True
    if unbatched:
        return frames.squeeze(0), mask.squeeze(0)
    return frames, mask


class FFTBlock(nn.Module):
    """Self-attention + 1-D convolutional feed-forward, post-norm residuals."""

    def __init__(self, d_model, n_heads, ffn_filter, ffn_kernel, dropout):
        super().__init__()
        self.attention = nn.MultiheadAttention(
            d_model, n_heads, dropout=dropout, batch_first=True
        )
        self.attention_norm = nn.LayerNorm(d_model)
        self.conv_in = nn.Conv1d(d_model, ffn_filter, ffn_kernel, padding=ffn_kernel // 2)
        self.conv_out = nn.Conv1d(ffn_filter, d_model, 1)
        self.ffn_norm = nn.LayerNorm(d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        # x: [B, L, d], mask: [B, L] bool, True = real
        attended, _ = self.attention(
            x, x, x, key_padding_mask=~mask, need_weights=False
        )
        x = self.attention_norm(x + self.dropout(attended))
        # zero padding before the convolution so its kernel sees the same
        # zeros past the boundary that an unpadded sequence would
        x = x * mask.unsqueeze(-1)
        y = self.conv_out(F.relu(self.conv_in(x.transpose(1, 2)))).transpose(1, 2)
        x = self.ffn_norm(x + self.dropout(y))
        return x * mask.unsqueeze(-1)


class AcousticModel(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.d_model
        self.phoneme_embedding = nn.Embedding(cfg.n_phonemes, d)
        self.pitch_embedding = nn.Embedding(cfg.pitch_bins, d)
        # start the pitch table on a smooth position-style code over bin
        # index so nearby bins decode to nearby conditioning even where
        # training data covers the pitch range sparsely
        with torch.no_grad():
            self.pitch_embedding.weight.copy_(sinusoidal_table(cfg.pitch_bins, d))
        self.spk_proj = nn.Linear(cfg.spk_dim, d)
        self.hf_proj = nn.Linear(cfg.hf_dim, d)
        self.encoder = nn.ModuleList(
            FFTBlock(d, cfg.n_heads, cfg.ffn_filter, cfg.ffn_kernel, cfg.dropout)
            for _ in range(cfg.encoder_blocks)
        )
        self.decoder = nn.ModuleList(
            FFTBlock(d, cfg.n_heads, cfg.ffn_filter, cfg.ffn_kernel, cfg.dropout)
            for _ in range(cfg.decoder_blocks)
        )
        self.mel_head = nn.Linear(d, cfg.n_mels)
        self.input_dropout = nn.Dropout(cfg.dropout)
        self.register_buffer(
            "positions", sinusoidal_table(cfg.max_frames, d), persistent=False
        )

    def _positions(self, length: int) -> torch.Tensor:
        if length > self.positions.shape[0]:
            raise ValueError(
                f"sequence of {length} frames exceeds position table "
                f"({self.positions.shape[0]}); raise max_frames"
            )
        return self.positions[:length]

    def encode_phonemes(
        self, phonemes: torch.Tensor, mask: torch.Tensor | None = None
    ) -> torch.Tensor:
        """Phoneme ids [L] or [B, L] to hidden states of the same layout."""
        unbatched = phonemes.dim() == 1
        if unbatched:
            phonemes = phonemes.unsqueeze(0)
        if phonemes.shape[1] == 0:
            raise ValueError("zero-length phoneme sequence")
        if ((phonemes < 0) | (phonemes >= self.cfg.n_phonemes)).any():
            raise ValueError("phoneme id outside inventory")
        if mask is None:
            mask = torch.ones_like(phonemes, dtype=torch.bool)
        x = self.phoneme_embedding(phonemes)
        if self.cfg.use_positional:
            x = x + self._positions(x.shape[1])
        x = self.input_dropout(x) * mask.unsqueeze(-1)
        for block in self.encoder:
            x = block(x, mask)
        return x.squeeze(0) if unbatched else x

    def frame_states(
        self,
        phonemes: torch.Tensor,
        durations: torch.Tensor,
        pitch_bins: torch.Tensor,
        spk_embedding: torch.Tensor,
        phoneme_mask: torch.Tensor | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Frame-rate hidden states before reference attention.

        Returns (h, frame_mask) with h: [B, T, d]. These rows are the
        queries for the reference-attention stage; its output is added
        on top by forward.
        """
        unbatched = phonemes.dim() == 1
        if unbatched:
            phonemes = phonemes.unsqueeze(0)
            durations = durations.unsqueeze(0)
            pitch_bins = pitch_bins.unsqueeze(0)
        if spk_embedding.dim() == 1:
            spk_embedding = spk_embedding.unsqueeze(0)
        hidden = self.encode_phonemes(phonemes, phoneme_mask)
        frames, frame_mask = length_regulate(hidden, durations)
        if pitch_bins.shape != frame_mask.shape:
            raise ValueError(
                f"pitch_bins length {tuple(pitch_bins.shape)} does not match "
                f"sum(durations) frame stream {tuple(frame_mask.shape)}"
            )
        if ((pitch_bins < 0) | (pitch_bins >= self.cfg.pitch_bins)).any():
            raise ValueError("pitch bin outside table range")
        h = frames + self.pitch_embedding(pitch_bins) * frame_mask.unsqueeze(-1)
        if self.cfg.use_positional:
            h = h + self._positions(h.shape[1]) * frame_mask.unsqueeze(-1)
        h = h + self.spk_proj(spk_embedding).unsqueeze(1) * frame_mask.unsqueeze(-1)
        if unbatched:
            return h.squeeze(0), frame_mask.squeeze(0)
        return h, frame_mask

    def decode(self, h: torch.Tensor, frame_mask: torch.Tensor) -> torch.Tensor:
        unbatched = h.dim() == 2
        if unbatched:
            h = h.unsqueeze(0)
            frame_mask = frame_mask.unsqueeze(0)
        x = h
        for block in self.decoder:
            x = block(x, frame_mask)
        mel = self.mel_head(x) * frame_mask.unsqueeze(-1)
        return mel.squeeze(0) if unbatched else mel

    def forward(
        self,
        phonemes: torch.Tensor,
        durations: torch.Tensor,
        pitch_bins: torch.Tensor,
        spk_embedding: torch.Tensor,
        hf_embeddings: torch.Tensor | None = None,
        phoneme_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Predict a mel-spectrogram, [T, n_mels] (or [B, T, n_mels]).

        hf_embeddings, when given, are per-frame reference-attention
        outputs shaped like the frame stream ([T, hf_dim] / [B, T,
        hf_dim]) and are projected and added before decoding.
        """
        unbatched = phonemes.dim() == 1
        h, frame_mask = self.frame_states(
            phonemes, durations, pitch_bins, spk_embedding, phoneme_mask
        )
        if unbatched:
            h = h.unsqueeze(0)
            frame_mask = frame_mask.unsqueeze(0)
        if hf_embeddings is not None:
            if hf_embeddings.dim() == 2:
                hf_embeddings = hf_embeddings.unsqueeze(0)
            if hf_embeddings.shape[:2] != h.shape[:2]:
                raise ValueError(
                    f"hf_embeddings length {tuple(hf_embeddings.shape[:2])} does "
                    f"not match frame stream {tuple(h.shape[:2])}"
                )
            h = h + self.hf_proj(hf_embeddings) * frame_mask.unsqueeze(-1)
        mel = self.decode(h, frame_mask)
        return mel.squeeze(0) if unbatched else mel


def reconstruction_loss(predicted: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute error over every cell; shapes must match exactly."""
    if predicted.shape != target.shape:
        raise ValueError(
            f"shape mismatch: predicted {tuple(predicted.shape)} "
            f"vs target {tuple(target.shape)}"
        )
    return (predicted - target).abs().mean()


def masked_l1(
    predicted: torch.Tensor, target: torch.Tensor, frame_mask: torch.Tensor
) -> torch.Tensor:
    """Mean absolute error over real frames only (padding contributes 0)."""
    if predicted.shape != target.shape:
        raise ValueError(
            f"shape mismatch: predicted {tuple(predicted.shape)} "
            f"vs target {tuple(target.shape)}"
        )
    diff = (predicted - target).abs() * frame_mask.unsqueeze(-1)
    denom = frame_mask.sum() * predicted.shape[-1]
    if int(denom.item()) == 0:
        raise ValueError("mask selects no frames")
    return diff.sum() / denom