"""Timbre encoders: a frozen fixed-size embedding and a trainable
multi-reference attention encoder.

The fixed-size path maps any number of reference mels to one unit
vector summarizing overall timbre. The default backend is a frozen
random projection of per-band statistics: deterministic, training-free,
and swappable for real speaker-verification vectors via the
external-file backend. It is deliberately implemented in plain numpy so
no optimizer can ever touch it.

The multi-reference path is the trainable half: each reference mel runs
through two strided convolutions and a bidirectional LSTM, the outputs
are flattened into one long key/value sequence, and every generated
frame queries that sequence with multi-head attention to pick up
fine-grained timbre detail.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import mrsv

# Seed of the frozen stats-projection matrix. Changing it changes every
# builtin embedding, so it is part of the format contract.
STATS_PROJECTION_SEED = 7919

SPEAKER_EMBED_DIM = 256
MIN_REF_FRAMES = 4


# ---------------------------------------------------------------------------
# fixed-size speaker embedding
# ---------------------------------------------------------------------------


def _stats_projection(n_stats: int, dim: int) -> np.ndarray:
    rng = np.random.default_rng(STATS_PROJECTION_SEED)
    return (rng.standard_normal((n_stats, dim)) / math.sqrt(n_stats)).astype(
        np.float32
    )


def builtin_stats_embedding(mel: np.ndarray) -> np.ndarray:
    """Frozen projection of per-band mean and standard deviation.

    mel: [T, n_mels] log-mel. Returns a unit-norm float32 vector of
    length SPEAKER_EMBED_DIM.
    """
    mel = np.asarray(mel, dtype=np.float64)
    if mel.ndim != 2 or mel.shape[0] < 1:
        raise ValueError("mel must be [T, n_mels] with T >= 1")
    stats = np.concatenate([mel.mean(axis=0), mel.std(axis=0)])
    proj = _stats_projection(stats.shape[0], SPEAKER_EMBED_DIM)
    vec = stats.astype(np.float32) @ proj
    norm = float(np.linalg.norm(vec))
    if norm < 1e-12:
        raise ValueError("degenerate mel statistics (zero vector)")
    return (vec / norm).astype(np.float32)


class ExternalEmbeddings:
    """Utterance-id keyed speaker vectors from an MRSV bundle file."""

    def __init__(self, vectors: dict[str, np.ndarray]):
        self.vectors = {}
        for utt_id, vec in vectors.items():
            vec = np.asarray(vec, dtype=np.float32).reshape(-1)
            if vec.shape != (SPEAKER_EMBED_DIM,):
                raise ValueError(
                    f"embedding for {utt_id!r} has shape {vec.shape}, "
                    f"expected ({SPEAKER_EMBED_DIM},)"
                )
            self.vectors[utt_id] = vec

    @classmethod
    def load(cls, path: str | Path) -> "ExternalEmbeddings":
        tensors, _ = mrsv.read_bundle(path)
        return cls(tensors)

    def lookup(self, utt_id: str) -> np.ndarray:
        if utt_id not in self.vectors:
            raise KeyError(f"no external embedding for utterance {utt_id!r}")
        vec = self.vectors[utt_id]
        norm = float(np.linalg.norm(vec))
        if norm < 1e-12:
            raise ValueError(f"external embedding for {utt_id!r} is a zero vector")
        return vec / norm


def fixed_embed(
    ref_mels: list[np.ndarray],
    backend: str = "builtin-stats",
    utt_ids: list[str] | None = None,
    external: ExternalEmbeddings | None = None,
) -> np.ndarray:
    """One embedding per reference, arithmetic mean, renormalized."""
    if not ref_mels:
        raise ValueError("need at least one reference")
    if backend == "builtin-stats":
        vectors = [builtin_stats_embedding(m) for m in ref_mels]
    elif backend == "external-file":
        if external is None or utt_ids is None or len(utt_ids) != len(ref_mels):
            raise ValueError(
                "external-file backend needs an embedding store and one "
                "utterance id per reference"
            )
        vectors = [external.lookup(u) for u in utt_ids]
    else:
        raise ValueError(f"unknown speaker-embedding backend {backend!r}")
    mean = np.stack(vectors).mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm < 1e-12:
        raise ValueError("reference embeddings cancel out; cannot normalize")
    return (mean / norm).astype(np.float32)


# ---------------------------------------------------------------------------
# multi-reference encoder
# ---------------------------------------------------------------------------


@dataclass
class MultiRefConfig:
    n_mels: int = 80
    conv_filter: int = 512
    conv_kernel: int = 3
    conv_stride: int = 2
    lstm_cells: int = 256
    lstm_layers: int = 2
    d_query: int = 256  # width of the frame hidden states doing the querying
    d_model: int = 256  # attention width d_m
    heads: int = 8

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ValueError("d_model must be divisible by heads")
        if self.conv_kernel % 2 != 1:
            raise ValueError("conv_kernel must be odd")
        if self.conv_stride < 1:
            raise ValueError("conv_stride must be >= 1")

    @classmethod
    def toy_profile(cls, d_query: int = 64, **overrides) -> "MultiRefConfig":
        """Shrunk proportions for CPU-scale runs; same architecture."""
        base = dict(conv_filter=128, lstm_cells=64, d_query=d_query, d_model=128)
        base.update(overrides)
        return cls(**base)

    @property
    def d_ref(self) -> int:
        return 2 * self.lstm_cells

    @property
    def d_head(self) -> int:
        return self.d_model // self.heads

    def conv_out_length(self, n_frames: int) -> int:
        pad = self.conv_kernel // 2
        return (n_frames + 2 * pad - self.conv_kernel) // self.conv_stride + 1

    def encoded_length(self, n_frames: int) -> int:
        return self.conv_out_length(self.conv_out_length(n_frames))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MultiRefConfig":
        return cls(**d)


@dataclass
class FlattenedReference:
    """Encoded references glued into one attention memory.

    boundaries has len(refs) + 1 offsets; rows boundaries[i]:
    boundaries[i+1] of S belong to reference i.
    """

    S: torch.Tensor  # [L_r, d_ref]
    boundaries: list[int]

    def __post_init__(self):
        if self.S.dim() != 2:
            raise ValueError("S must be [L_r, d_ref]")
        if self.boundaries[0] != 0 or self.boundaries[-1] != self.S.shape[0]:
            raise ValueError("boundaries must partition [0, L_r)")


class MultiRefEncoder(nn.Module):
    def __init__(self, cfg: MultiRefConfig):
        super().__init__()
        self.cfg = cfg
        pad = cfg.conv_kernel // 2
        self.conv1 = nn.Conv1d(
            cfg.n_mels, cfg.conv_filter, cfg.conv_kernel, stride=cfg.conv_stride,
            padding=pad,
        )
        self.conv2 = nn.Conv1d(
            cfg.conv_filter, cfg.conv_filter, cfg.conv_kernel, stride=cfg.conv_stride,
            padding=pad,
        )
        self.lstm = nn.LSTM(
            cfg.conv_filter,
            cfg.lstm_cells,
            num_layers=cfg.lstm_layers,
            bidirectional=True,
            batch_first=True,
        )
        self.w_q = nn.Linear(cfg.d_query, cfg.d_model, bias=False)
        self.w_k = nn.Linear(cfg.d_ref, cfg.d_model, bias=False)
        self.w_v = nn.Linear(cfg.d_ref, cfg.d_model, bias=False)
        self.out_proj = nn.Linear(cfg.d_model, cfg.d_model, bias=False)

    def encode_many(self, ref_mels: list[torch.Tensor]) -> list[torch.Tensor]:
        """Encode several references in one conv + packed-LSTM pass.

        Gives the same values as encoding one at a time: trimming each
        padded conv output to its true encoded length removes every
        position that could have seen another reference's padding, and
        the packed LSTM recurs over true lengths only.
        """
        if not ref_mels:
            raise ValueError("need at least one reference")
        for i, mel in enumerate(ref_mels):
            if mel.dim() != 2 or mel.shape[1] != self.cfg.n_mels:
                raise ValueError(
                    f"reference {i} must be [T, {self.cfg.n_mels}], "
                    f"got {tuple(mel.shape)}"
                )
            if mel.shape[0] < MIN_REF_FRAMES:
                raise ValueError(
                    f"reference {i} has {mel.shape[0]} frames; "
                    f"need at least {MIN_REF_FRAMES}"
                )
        lengths = [m.shape[0] for m in ref_mels]
        mid_lengths = [self.cfg.conv_out_length(n) for n in lengths]
        enc_lengths = [self.cfg.encoded_length(n) for n in lengths]
        t_max = max(lengths)
        x = torch.stack(
            [F.pad(m, (0, 0, 0, t_max - m.shape[0])) for m in ref_mels]
        ).transpose(1, 2)  # [N, n_mels, T_max]
        x = F.relu(self.conv1(x))
        # zero each reference's pad tail so the second conv reads the
        # same zeros its own edge padding would have supplied
        tail = torch.arange(x.shape[2]).unsqueeze(0) < torch.tensor(
            mid_lengths
        ).unsqueeze(1)
        x = x * tail.unsqueeze(1).to(x.dtype)
        x = F.relu(self.conv2(x))
        x = x.transpose(1, 2)  # [N, T', filter]
        packed = nn.utils.rnn.pack_padded_sequence(
            x, enc_lengths, batch_first=True, enforce_sorted=False
        )
        out, _ = self.lstm(packed)
        out, _ = nn.utils.rnn.pad_packed_sequence(out, batch_first=True)
        return [out[i, : enc_lengths[i]] for i in range(len(ref_mels))]

    def encode_references(self, ref_mels: list[torch.Tensor]) -> FlattenedReference:
        """Each reference is encoded independently of the others, then
        the outputs are concatenated in input order. Per-reference
        encoding is what makes attention invariant to reference order
        (only row order changes)."""
        pieces = self.encode_many(ref_mels)
        boundaries = [0]
        for piece in pieces:
            boundaries.append(boundaries[-1] + piece.shape[0])
        return FlattenedReference(torch.cat(pieces, dim=0), boundaries)

    def _attention(
        self, h: torch.Tensor, ref: FlattenedReference
    ) -> tuple[torch.Tensor, torch.Tensor]:
        if ref.S.shape[0] == 0:
            raise ValueError("empty reference sequence (L_r == 0)")
        cfg = self.cfg
        t = h.shape[0]
        l_r = ref.S.shape[0]
        q = self.w_q(h).view(t, cfg.heads, cfg.d_head)
        k = self.w_k(ref.S).view(l_r, cfg.heads, cfg.d_head)
        v = self.w_v(ref.S).view(l_r, cfg.heads, cfg.d_head)
        scores = torch.einsum("thd,lhd->htl", q, k) / math.sqrt(cfg.d_head)
        weights = torch.softmax(scores, dim=-1)  # [heads, T, L_r]
        mixed = torch.einsum("htl,lhd->thd", weights, v).reshape(t, cfg.d_model)
        return self.out_proj(mixed), weights

    def attend(self, h: torch.Tensor, ref: FlattenedReference) -> torch.Tensor:
        """Per-frame timbre embeddings, [T, d_model].

        Every frame of h independently soft-selects rows of the
        flattened reference memory; there is no coupling across frames.
        """
        if h.dim() != 2 or h.shape[1] != self.cfg.d_query:
            raise ValueError(
                f"queries must be [T, {self.cfg.d_query}], got {tuple(h.shape)}"
            )
        out, _ = self._attention(h, ref)
        return out

    def attention_weights(
        self, h: torch.Tensor, ref: FlattenedReference
    ) -> torch.Tensor:
        """Softmax attention maps, [heads, T, L_r]. Test/diagnostic hook."""
        _, weights = self._attention(h, ref)
        return weights

    def forward(self, h: torch.Tensor, ref_mels: list[torch.Tensor]) -> torch.Tensor:
        return self.attend(h, self.encode_references(ref_mels))