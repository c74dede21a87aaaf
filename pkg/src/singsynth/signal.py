"""Deterministic signal kernels: mel analysis, f0 tracking, inversion.

All kernels are pure functions of their inputs — repeated calls produce
bit-identical outputs — and share one frame grid: a waveform of N samples
yields ``N // hop_size + 1`` frames centered at ``i * hop_size`` with
reflection padding, so mel and f0 streams always align with phoneme
durations.
"""

from __future__ import annotations

import hashlib
import json
import math
import wave as _wave
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np


class NoVoicedFramesError(ValueError):
    """Raised when a voiced-frame statistic is requested on unvoiced data."""

    def __init__(self, message: str = "no voiced frames"):
        super().__init__(message)


@dataclass(frozen=True)
class FeatureConfig:
    """Analysis settings shared by every feature in a corpus.

    ``mel_log_max`` is the normalization ceiling used when mapping log-mel
    values into [0, 1] for the acoustic model; together with the log floor
    it fixes the dynamic range the model sees.
    """

    sample_rate: int = 22050
    frame_size: int = 512
    hop_size: int = 128
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float | None = None  # None -> Nyquist
    log_floor: float = 1e-5
    mel_log_max: float = 10.0
    f0_floor: float = 65.0
    f0_ceil: float = 1100.0
    f0_window: int = 1024
    voicing_threshold: float = 0.5
    silence_db: float = -60.0

    def __post_init__(self):
        if not (self.frame_size > self.hop_size > 0):
            raise ValueError("need frame_size > hop_size > 0")
        if self.n_mels != 80:
            raise ValueError("n_mels is fixed at 80")
        if not (0 < self.f0_floor < self.f0_ceil):
            raise ValueError("need 0 < f0_floor < f0_ceil")
        if self.f0_window < self.frame_size:
            raise ValueError("f0_window must be >= frame_size")

    @property
    def nyquist(self) -> float:
        return self.sample_rate / 2.0

    @property
    def mel_fmax(self) -> float:
        return self.nyquist if self.fmax is None else self.fmax

    @property
    def log_min(self) -> float:
        return math.log(self.log_floor)

    @property
    def hop_seconds(self) -> float:
        return self.hop_size / self.sample_rate

    def frame_count(self, n_samples: int) -> int:
        if n_samples < 1:
            raise ValueError("empty waveform")
        return n_samples // self.hop_size + 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureConfig":
        return cls(**data)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def _periodic_hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _reflect_pad(x: np.ndarray, pad: int) -> np.ndarray:
    """Reflection padding that tolerates signals shorter than the pad."""
    n = len(x)
    if n == 1:
        return np.full(n + 2 * pad, x[0], dtype=x.dtype)
    idx = np.arange(-pad, n + pad)
    period = 2 * n - 2
    idx = np.abs(idx) % period
    idx = np.where(idx >= n, period - idx, idx)
    return x[idx]


def _frame_signal(x: np.ndarray, frame: int, hop: int) -> np.ndarray:
    """[T, frame] slices centered at i*hop, T = len(x)//hop + 1."""
    n = len(x)
    t = n // hop + 1
    padded = _reflect_pad(x, frame // 2)
    offsets = np.arange(t) * hop
    cols = np.arange(frame)
    return padded[offsets[:, None] + cols[None, :]]


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: FeatureConfig) -> np.ndarray:
    """[n_mels, n_fft//2 + 1] triangular filters (unit peak) on the mel scale."""
    n_bins = cfg.frame_size // 2 + 1
    fft_freqs = np.arange(n_bins) * cfg.sample_rate / cfg.frame_size
    mel_pts = np.linspace(_hz_to_mel(cfg.fmin), _hz_to_mel(cfg.mel_fmax), cfg.n_mels + 2)
    hz_pts = _mel_to_hz(mel_pts)
    fb = np.zeros((cfg.n_mels, n_bins), dtype=np.float64)
    for m in range(cfg.n_mels):
        lo, center, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (fft_freqs - lo) / max(center - lo, 1e-12)
        down = (hi - fft_freqs) / max(hi - center, 1e-12)
        fb[m] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def _check_waveform(waveform) -> np.ndarray:
    x = np.asarray(waveform, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("waveform must be mono (1-D)")
    if x.size == 0:
        raise ValueError("empty waveform")
    return x


def _power_spectrogram(x: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    frames = _frame_signal(x, cfg.frame_size, cfg.hop_size)
    spec = np.fft.rfft(frames * _periodic_hann(cfg.frame_size)[None, :], axis=1)
    return np.abs(spec) ** 2


def extract_mel(waveform, cfg: FeatureConfig) -> np.ndarray:
    """Log mel-spectrogram [T, 80], values >= log(log_floor)."""
    x = _check_waveform(waveform)
    power = _power_spectrogram(x, cfg)
    energies = power @ mel_filterbank(cfg).T
    return np.log(np.maximum(energies, cfg.log_floor)).astype(np.float32)


def extract_f0(waveform, cfg: FeatureConfig) -> np.ndarray:
    """Frame-level f0 in Hz (0.0 = unvoiced), same T as extract_mel.

    Normalized autocorrelation (NSDF) peak picking inside
    [f0_floor, f0_ceil]: among local maxima the first one reaching 90% of
    the frame's best is selected, which suppresses octave-down errors, and
    a parabolic fit refines the lag. Frames fail the voicing gate when the
    peak's clarity is below ``voicing_threshold`` or the frame RMS is
    below ``silence_db``.
    """
    x = _check_waveform(waveform)
    sr = cfg.sample_rate
    w = cfg.f0_window
    frames = _frame_signal(x, w, cfg.hop_size)
    n_frames = frames.shape[0]

    lag_min = max(2, int(sr / cfg.f0_ceil))
    lag_max = min(w - 2, int(math.ceil(sr / cfg.f0_floor)))
    if lag_max <= lag_min:
        raise ValueError("f0 search range is empty; enlarge f0_window")

    # autocorrelation via FFT, plus the cumulative-energy normalizer
    fft_size = 1 << int(math.ceil(math.log2(2 * w)))
    spec = np.fft.rfft(frames, n=fft_size, axis=1)
    acf = np.fft.irfft(np.abs(spec) ** 2, n=fft_size, axis=1)[:, : lag_max + 2]
    sq = np.concatenate(
        [np.zeros((n_frames, 1)), np.cumsum(frames**2, axis=1)], axis=1
    )
    total = sq[:, -1]
    lags = np.arange(lag_max + 2)
    # m(tau) = sum x[0:w-tau]^2 + sum x[tau:w]^2
    m = sq[:, w - lags] + (total[:, None] - sq[:, lags])
    nsdf = np.where(m > 1e-12, 2.0 * acf / np.maximum(m, 1e-12), 0.0)

    band = nsdf[:, lag_min : lag_max + 1]
    left = nsdf[:, lag_min - 1 : lag_max]
    right = nsdf[:, lag_min + 1 : lag_max + 2]
    local_max = (band > left) & (band >= right)
    best = band.max(axis=1)
    accept = local_max & (band >= 0.9 * best[:, None]) & (band > 0)
    has_peak = accept.any(axis=1)
    pick = np.argmax(accept, axis=1)  # first accepted local max per frame

    rows = np.arange(n_frames)
    y0 = left[rows, pick]
    y1 = band[rows, pick]
    y2 = right[rows, pick]
    denom = y0 - 2.0 * y1 + y2
    flat = np.abs(denom) <= 1e-12
    delta = np.where(flat, 0.0, 0.5 * (y0 - y2) / np.where(flat, 1.0, denom))
    delta = np.clip(delta, -1.0, 1.0)
    lag_hat = lag_min + pick + delta

    f0 = sr / np.maximum(lag_hat, 1e-9)
    f0 = np.clip(f0, cfg.f0_floor, cfg.f0_ceil)

    rms = np.sqrt(np.mean(frames**2, axis=1))
    gate = 10.0 ** (cfg.silence_db / 20.0)
    voiced = has_peak & (y1 >= cfg.voicing_threshold) & (rms >= gate)
    return np.where(voiced, f0, 0.0).astype(np.float32)


def voiced_mean(f0) -> float:
    """Arithmetic mean of the strictly positive entries of one contour."""
    values = np.asarray(f0, dtype=np.float64)
    mask = values > 0.0
    if not mask.any():
        raise NoVoicedFramesError()
    return float(values[mask].mean())


def voiced_mean_multi(contours) -> float:
    """Frame-weighted voiced mean over several contours (concatenation)."""
    arrays = [np.asarray(c, dtype=np.float64) for c in contours]
    if not arrays:
        raise NoVoicedFramesError()
    return voiced_mean(np.concatenate(arrays))


def normalize_mel(mel_log, cfg: FeatureConfig) -> np.ndarray:
    """Map log-mel values into [0, 1] over the configured dynamic range."""
    lo, hi = cfg.log_min, cfg.mel_log_max
    out = (np.asarray(mel_log, dtype=np.float64) - lo) / (hi - lo)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def denormalize_mel(mel01, cfg: FeatureConfig) -> np.ndarray:
    lo, hi = cfg.log_min, cfg.mel_log_max
    return (np.asarray(mel01, dtype=np.float64) * (hi - lo) + lo).astype(np.float32)


def _istft(spec: np.ndarray, cfg: FeatureConfig, n_samples: int) -> np.ndarray:
    """Weighted overlap-add inverse of the centered STFT."""
    frame, hop = cfg.frame_size, cfg.hop_size
    window = _periodic_hann(frame)
    frames = np.fft.irfft(spec, n=frame, axis=1) * window[None, :]
    pad = frame // 2
    total = (spec.shape[0] - 1) * hop + frame
    acc = np.zeros(total)
    norm = np.zeros(total)
    for i in range(spec.shape[0]):
        start = i * hop
        acc[start : start + frame] += frames[i]
        norm[start : start + frame] += window**2
    out = acc / np.maximum(norm, 1e-8)
    return out[pad : pad + n_samples]


def invert_mel(mel_log, cfg: FeatureConfig, n_iters: int = 60) -> np.ndarray:
    """Griffin-Lim reconstruction through the pseudo-inverse filterbank.

    Deterministic: phases start at zero. The result has (T - 1) * hop
    samples, matching the analysis frame grid.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    mel_log = np.asarray(mel_log, dtype=np.float64)
    if mel_log.ndim != 2 or mel_log.shape[1] != cfg.n_mels:
        raise ValueError(f"mel must be [T, {cfg.n_mels}]")
    if not np.isfinite(mel_log).all():
        raise ValueError("mel contains NaN/Inf")

    fb = mel_filterbank(cfg)
    energies = np.exp(mel_log)
    # The filterbank is numerically rank-deficient, so the exact
    # pseudo-inverse amplifies band-level inconsistencies (as produced by
    # any predicted mel) into enormous spurious spectral peaks. Truncating
    # small singular values keeps the inversion stable for inconsistent
    # inputs at a negligible cost on consistent ones.
    power = np.clip(energies @ np.linalg.pinv(fb, rcond=1e-2).T, 0.0, None)
    magnitude = np.sqrt(power)

    n_samples = (mel_log.shape[0] - 1) * cfg.hop_size
    if n_samples == 0:
        return np.zeros(0, dtype=np.float32)
    phase = np.zeros_like(magnitude)
    x = np.zeros(n_samples)
    for _ in range(n_iters):
        x = _istft(magnitude * np.exp(1j * phase), cfg, n_samples)
        spec = np.fft.rfft(
            _frame_signal(x, cfg.frame_size, cfg.hop_size)
            * _periodic_hann(cfg.frame_size)[None, :],
            axis=1,
        )
        # (T-1)*hop samples re-frame to exactly T frames
        phase = np.angle(spec)
    peak = np.max(np.abs(x)) if x.size else 0.0
    if peak > 1.0:
        x = x / peak
    return x.astype(np.float32)


def write_wav(path: str | Path, waveform, sample_rate: int) -> None:
    """PCM 16-bit mono WAV."""
    x = np.asarray(waveform, dtype=np.float64)
    pcm = np.clip(np.round(x * 32767.0), -32768, 32767).astype("<i2")
    with _wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sample_rate)
        fh.writeframes(pcm.tobytes())


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Returns (float32 waveform in [-1, 1), sample_rate)."""
    try:
        with _wave.open(str(path), "rb") as fh:
            if fh.getnchannels() != 1:
                raise ValueError(f"{path}: expected mono audio")
            if fh.getsampwidth() != 2:
                raise ValueError(f"{path}: expected 16-bit PCM")
            sr = fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except (_wave.Error, EOFError) as exc:
        raise ValueError(f"{path}: not a readable WAV file: {exc}") from exc
    pcm = np.frombuffer(raw, dtype="<i2")
    return (pcm.astype(np.float32) / 32768.0), sr
