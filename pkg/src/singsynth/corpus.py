"""Corpus data model, on-disk layout, and the synthetic singer generator.

Directory layout::

    <root>/manifest.tsv     one row per utterance (tab separated)
    <root>/phones.txt       phoneme inventory, id = line index
    <root>/config.json      FeatureConfig used for every feature file
    <root>/mel/<id>.mrsv    [T, 80] float32 log-mel
    <root>/f0/<id>.mrsv     [T] float32 Hz contour, 0 = unvoiced
    <root>/align/<id>.txt   phoneme intervals in seconds (see below)
    <root>/wav/<id>.wav     optional PCM16 mono audio

Alignment files carry a ``frames <T>`` header followed by
``<label> <start_s> <end_s>`` rows that must tile time contiguously.
Seconds are converted to frame counts by nearest-frame rounding of each
boundary, and any residual rounding drift is absorbed by the final
phoneme so that ``sum(durations)`` always equals the header frame count.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import mrsv
from .signal import FeatureConfig, extract_mel, read_wav, write_wav

SILENCE_LABEL = "sil"
TOY_MAX_NOTES = 10
TOY_PEAK = 0.75


class AlignmentError(ValueError):
    """Malformed alignment file."""


@dataclass
class PhonemeAlignment:
    phonemes: np.ndarray  # [L] int64 ids
    durations: np.ndarray  # [L] int64 frame counts

    def __post_init__(self):
        self.phonemes = np.asarray(self.phonemes, dtype=np.int64)
        self.durations = np.asarray(self.durations, dtype=np.int64)
        if self.phonemes.shape != self.durations.shape or self.phonemes.ndim != 1:
            raise ValueError("phonemes and durations must be equal-length 1-D")
        if (self.durations < 0).any():
            raise ValueError("negative duration")

    @property
    def total_frames(self) -> int:
        return int(self.durations.sum())

    def __len__(self) -> int:
        return len(self.phonemes)


@dataclass
class Utterance:
    utt_id: str
    speaker_id: str
    alignment: PhonemeAlignment
    f0: np.ndarray  # [T] float32
    mel: np.ndarray  # [T, 80] float32
    waveform: np.ndarray | None = None  # mono float32 at cfg.sample_rate

    def check(self, cfg: FeatureConfig) -> list[str]:
        """Invariant violations as human-readable strings (empty = clean)."""
        problems = []
        t_mel = self.mel.shape[0]
        if self.mel.ndim != 2 or self.mel.shape[1] != cfg.n_mels:
            problems.append(f"mel shape {self.mel.shape} is not [T, {cfg.n_mels}]")
        if len(self.f0) != t_mel or self.alignment.total_frames != t_mel:
            problems.append(
                "length mismatch: mel %d, f0 %d, durations %d"
                % (t_mel, len(self.f0), self.alignment.total_frames)
            )
        if not np.isfinite(self.mel).all():
            problems.append("mel contains NaN/Inf")
        elif self.mel.size and float(self.mel.min()) < cfg.log_min - 1e-4:
            problems.append("mel below log floor")
        voiced = self.f0 > 0.0
        bad = voiced & ((self.f0 < cfg.f0_floor - 1e-3) | (self.f0 > cfg.f0_ceil + 1e-3))
        if bad.any():
            problems.append(f"f0 outside [{cfg.f0_floor}, {cfg.f0_ceil}] Hz")
        return problems


@dataclass
class ManifestEntry:
    utt_id: str
    speaker_id: str
    mel_path: str
    f0_path: str
    align_path: str
    wav_path: str | None = None


@dataclass
class CorpusManifest:
    root: Path
    entries: list[ManifestEntry]
    phoneme_inventory: list[str]
    config: FeatureConfig
    config_hash: str

    @property
    def inventory_map(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.phoneme_inventory)}

    def speakers(self) -> list[str]:
        seen: dict[str, None] = {}
        for e in self.entries:
            seen.setdefault(e.speaker_id, None)
        return list(seen)

    def entries_for_speaker(self, speaker_id: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.speaker_id == speaker_id]

    def entry(self, utt_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.utt_id == utt_id:
                return e
        raise KeyError(f"unknown utterance id {utt_id!r}")

    def load(self, utt_id: str, with_waveform: bool = False) -> Utterance:
        e = self.entry(utt_id)
        mel = mrsv.read_tensor(self.root / e.mel_path)
        f0 = mrsv.read_tensor(self.root / e.f0_path)
        alignment = load_alignment(
            self.root / e.align_path, self.config.hop_seconds, self.inventory_map
        )
        waveform = None
        if with_waveform and e.wav_path is not None:
            waveform, _ = read_wav(self.root / e.wav_path)
        return Utterance(e.utt_id, e.speaker_id, alignment, f0, mel, waveform)


# ---------------------------------------------------------------------------
# alignment files
# ---------------------------------------------------------------------------


def load_alignment(
    path: str | Path, hop_s: float, inventory: dict[str, int]
) -> PhonemeAlignment:
    """Parse an interval file into frame-count durations.

    Boundaries are rounded to the nearest frame; drift against the header
    frame count is pushed into the final phoneme.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    header_frames = None
    rows: list[tuple[int, str, float, float]] = []
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        fields = text.split()
        if header_frames is None:
            if fields[0] != "frames" or len(fields) != 2:
                raise AlignmentError(f"{path}:{lineno}: expected 'frames <T>' header")
            header_frames = int(fields[1])
            continue
        if len(fields) != 3:
            raise AlignmentError(f"{path}:{lineno}: expected 'label start end'")
        label = fields[0]
        try:
            start, end = float(fields[1]), float(fields[2])
        except ValueError as exc:
            raise AlignmentError(f"{path}:{lineno}: bad interval times") from exc
        rows.append((lineno, label, start, end))

    if header_frames is None:
        raise AlignmentError(f"{path}: missing 'frames <T>' header")
    if not rows:
        raise AlignmentError(f"{path}: empty alignment")

    tol = 1e-6
    prev_end = 0.0
    phonemes, durations = [], []
    for lineno, label, start, end in rows:
        if end < start - tol:
            raise AlignmentError(f"{path}:{lineno}: non-monotonic interval")
        if abs(start - prev_end) > tol:
            kind = "overlapping" if start < prev_end else "non-contiguous"
            raise AlignmentError(f"{path}:{lineno}: {kind} interval")
        if label not in inventory:
            raise AlignmentError(f"{path}:{lineno}: unknown phoneme label {label!r}")
        frames = int(np.floor(end / hop_s + 0.5)) - int(np.floor(start / hop_s + 0.5))
        phonemes.append(inventory[label])
        durations.append(frames)
        prev_end = end

    drift = header_frames - sum(durations)
    durations[-1] += drift
    if durations[-1] < 0:
        raise AlignmentError(
            f"{path}: header frame count {header_frames} inconsistent with intervals"
        )
    return PhonemeAlignment(np.array(phonemes), np.array(durations))


def write_alignment(
    path: str | Path,
    labels: list[str],
    durations: np.ndarray,
    hop_s: float,
) -> None:
    durations = np.asarray(durations, dtype=np.int64)
    lines = [f"frames {int(durations.sum())}"]
    edge = 0
    for label, dur in zip(labels, durations):
        lines.append(f"{label} {edge * hop_s:.9f} {(edge + dur) * hop_s:.9f}")
        edge += int(dur)
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# manifest I/O
# ---------------------------------------------------------------------------


def save_manifest(manifest: CorpusManifest) -> None:
    root = manifest.root
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.json").write_text(
        json.dumps(manifest.config.to_dict(), sort_keys=True, indent=2) + "\n"
    )
    (root / "phones.txt").write_text("\n".join(manifest.phoneme_inventory) + "\n")
    lines = [f"# config_hash {manifest.config.config_hash()}"]
    for e in manifest.entries:
        wav = e.wav_path if e.wav_path is not None else "-"
        lines.append(
            "\t".join([e.utt_id, e.speaker_id, e.mel_path, e.f0_path, e.align_path, wav])
        )
    (root / "manifest.tsv").write_text("\n".join(lines) + "\n")


def load_manifest(root: str | Path) -> CorpusManifest:
    root = Path(root)
    config = FeatureConfig.from_dict(json.loads((root / "config.json").read_text()))
    inventory = (root / "phones.txt").read_text().splitlines()
    config_hash = ""
    entries = []
    for line in (root / "manifest.tsv").read_text().splitlines():
        if line.startswith("#"):
            fields = line[1:].split()
            if len(fields) == 2 and fields[0] == "config_hash":
                config_hash = fields[1]
            continue
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 6:
            raise ValueError(f"{root / 'manifest.tsv'}: bad row: {line!r}")
        wav = None if cols[5] == "-" else cols[5]
        entries.append(ManifestEntry(cols[0], cols[1], cols[2], cols[3], cols[4], wav))
    return CorpusManifest(root, entries, inventory, config, config_hash)


# ---------------------------------------------------------------------------
# toy singer corpus
# ---------------------------------------------------------------------------


@dataclass
class ToySpeakerSpec:
    """A synthetic singer: pitch register plus a fixed spectral envelope.

    The envelope is sampled at the mel band center frequencies and shapes
    harmonic amplitudes, so timbre is a recoverable ground-truth property.
    """

    speaker_id: str
    base_f0: float
    f0_range: float
    envelope: np.ndarray  # [80] non-negative, unit peak
    seed: int

    def __post_init__(self):
        self.envelope = np.asarray(self.envelope, dtype=np.float64)
        if not 65.0 <= self.base_f0 <= 1100.0:
            raise ValueError("base_f0 must lie in [65, 1100] Hz")
        if (self.envelope < 0).any() or self.envelope.shape != (80,):
            raise ValueError("envelope must be 80 non-negative values")


def _band_centers(cfg: FeatureConfig) -> np.ndarray:
    from .signal import _hz_to_mel, _mel_to_hz

    mel_pts = np.linspace(_hz_to_mel(cfg.fmin), _hz_to_mel(cfg.mel_fmax), cfg.n_mels + 2)
    return _mel_to_hz(mel_pts)[1:-1]


def _random_envelope(rng: np.random.Generator, centers_hz: np.ndarray) -> np.ndarray:
    knee = rng.uniform(600.0, 2400.0)
    slope = rng.uniform(1.5, 3.0)
    env = (1.0 + (centers_hz / knee) ** 2) ** (-slope / 2.0)
    for _ in range(3):
        mu = np.exp(rng.uniform(np.log(300.0), np.log(6000.0)))
        sigma = mu * rng.uniform(0.25, 0.5)
        gain = rng.uniform(0.5, 2.0)
        env = env * (1.0 + gain * np.exp(-0.5 * ((centers_hz - mu) / sigma) ** 2))
    return env / env.max()


def default_toy_speakers(
    n_speakers: int, seed: int, cfg: FeatureConfig
) -> list[ToySpeakerSpec]:
    """Alternating low/high pitch registers with per-speaker envelopes."""
    centers = _band_centers(cfg)
    specs = []
    for i in range(n_speakers):
        rng = np.random.default_rng([seed, 11, i])
        base = (130.0 if i % 2 == 0 else 260.0) * (1.0 + 0.08 * (i // 2))
        base = min(base, 900.0)
        specs.append(
            ToySpeakerSpec(
                speaker_id=f"spk{i:03d}",
                base_f0=base,
                f0_range=0.45 * base,
                envelope=_random_envelope(rng, centers),
                seed=seed * 1000003 + i,
            )
        )
    return specs


def toy_inventory() -> list[str]:
    return [SILENCE_LABEL] + [f"n{j:02d}" for j in range(TOY_MAX_NOTES)]


def render_toy_utterance(
    spec: ToySpeakerSpec,
    note_f0s: np.ndarray,
    note_frames: np.ndarray,
    silence_frames: np.ndarray,
    cfg: FeatureConfig,
) -> tuple[np.ndarray, np.ndarray, list[str], np.ndarray]:
    """Render one harmonic-sum utterance on the analysis frame grid.

    ``silence_frames`` has one entry per gap: before each note and after
    the last (length = len(notes) + 1). Returns (waveform, frame f0,
    labels, durations); phases are continued across notes so partials
    stay click-free, and each note gets a short cosine fade.

    The generator doubles as the pitch oracle: interior frames of a note
    carry exactly the commanded f0.
    """
    note_f0s = np.asarray(note_f0s, dtype=np.float64)
    note_frames = np.asarray(note_frames, dtype=np.int64)
    silence_frames = np.asarray(silence_frames, dtype=np.int64)
    if len(silence_frames) != len(note_f0s) + 1:
        raise ValueError("need len(notes) + 1 silence gaps")
    if len(note_f0s) > TOY_MAX_NOTES:
        raise ValueError(f"at most {TOY_MAX_NOTES} notes per utterance")

    labels: list[str] = []
    durations: list[int] = []
    f0_frames: list[np.ndarray] = []
    for j, (f0_note, frames) in enumerate(zip(note_f0s, note_frames)):
        if silence_frames[j] > 0:
            labels.append(SILENCE_LABEL)
            durations.append(int(silence_frames[j]))
            f0_frames.append(np.zeros(int(silence_frames[j])))
        labels.append(f"n{j:02d}")
        durations.append(int(frames))
        f0_frames.append(np.full(int(frames), f0_note))
    if silence_frames[-1] > 0:
        labels.append(SILENCE_LABEL)
        durations.append(int(silence_frames[-1]))
        f0_frames.append(np.zeros(int(silence_frames[-1])))

    f0 = np.concatenate(f0_frames)
    total_frames = len(f0)
    hop = cfg.hop_size
    n_samples = (total_frames - 1) * hop + hop // 2

    f0_per_sample = np.repeat(f0, hop)[:n_samples]
    phase = 2.0 * np.pi * np.cumsum(f0_per_sample) / cfg.sample_rate

    centers = _band_centers(cfg)
    wave = np.zeros(n_samples)
    sample_edges = np.concatenate([[0], np.cumsum(np.asarray(durations) * hop)])
    sample_edges = np.minimum(sample_edges, n_samples)
    for (label, dur), start, stop in zip(
        zip(labels, durations), sample_edges[:-1], sample_edges[1:]
    ):
        if label == SILENCE_LABEL or stop <= start:
            continue
        f0_note = f0_per_sample[start]
        n_partials = max(1, min(60, int(0.95 * cfg.nyquist / f0_note)))
        seg = np.zeros(stop - start)
        for k in range(1, n_partials + 1):
            amp = float(np.interp(k * f0_note, centers, spec.envelope))
            if amp < 1e-4:
                continue
            seg += amp * np.sin(k * phase[start:stop])
        fade = min(96, len(seg) // 4)
        if fade > 0:
            ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(fade) / fade)
            seg[:fade] *= ramp
            seg[-fade:] *= ramp[::-1]
        wave[start:stop] = seg

    peak = np.max(np.abs(wave))
    if peak > 0:
        wave = wave * (TOY_PEAK / peak)
    return wave, f0.astype(np.float32), labels, np.asarray(durations, dtype=np.int64)


def _variant_offsets(
    pitch_variants: int, span_semitones: float, rng: np.random.Generator
) -> np.ndarray:
    """Transposition offsets in semitones for one utterance.

    Offset 0 is the base rendering; the rest spread evenly over the span
    with a small random dither so quantization boundaries are not aliased.
    """
    if pitch_variants < 2:
        return np.zeros(1)
    grid = np.linspace(-span_semitones, span_semitones, pitch_variants - 1)
    dither = rng.uniform(-0.3, 0.3, pitch_variants - 1)
    return np.concatenate([[0.0], grid + dither])


def generate_toy_corpus(
    out_dir: str | Path,
    n_speakers: int,
    utts_per_speaker: int,
    seed: int,
    cfg: FeatureConfig | None = None,
    pitch_variants: int = 1,
    variant_span_semitones: float = 4.0,
) -> CorpusManifest:
    """Write a fully-featured synthetic corpus; same seed, same bytes.

    ``pitch_variants`` > 1 additionally renders each utterance transposed
    to offsets spread over +-``variant_span_semitones``, with the same
    note layout, timing, and voice. Variants make the pitch input the
    only reliable pitch source during training: the same phoneme/duration
    pattern then appears at several registers, so a model cannot read
    pitch off the utterance's structure.
    """
    if n_speakers < 1 or utts_per_speaker < 1:
        raise ValueError("need n_speakers >= 1 and utts_per_speaker >= 1")
    if pitch_variants < 1:
        raise ValueError("need pitch_variants >= 1")
    cfg = cfg or FeatureConfig()
    root = Path(out_dir)
    for sub in ("mel", "f0", "align", "wav"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    entries = []
    for spec in default_toy_speakers(n_speakers, seed, cfg):
        spk_index = int(spec.speaker_id[3:])
        for u in range(utts_per_speaker):
            rng = np.random.default_rng([seed, 23, spk_index, u])
            n_notes = int(rng.integers(4, 8))
            note_f0s = rng.uniform(
                spec.base_f0 - spec.f0_range / 2.0,
                spec.base_f0 + spec.f0_range / 2.0,
                n_notes,
            )
            note_frames = rng.integers(20, 41, n_notes)
            gaps = np.where(rng.random(n_notes - 1) < 0.3, rng.integers(3, 9), 0)
            silence = np.concatenate(
                [[rng.integers(6, 12)], gaps, [rng.integers(6, 12)]]
            )
            offsets = _variant_offsets(
                pitch_variants,
                variant_span_semitones,
                np.random.default_rng([seed, 29, spk_index, u]),
            )
            for k, offset in enumerate(offsets):
                factor = 2.0 ** (offset / 12.0)
                variant_f0s = np.clip(
                    note_f0s * factor, cfg.f0_floor * 1.02, cfg.f0_ceil * 0.98
                )
                wave, f0, labels, durations = render_toy_utterance(
                    spec, variant_f0s, note_frames, silence, cfg
                )

                utt_id = f"{spec.speaker_id}_utt{u:03d}"
                if k > 0:
                    utt_id += f"v{k:02d}"
                wav_rel = f"wav/{utt_id}.wav"
                write_wav(root / wav_rel, wave, cfg.sample_rate)
                # features come from the PCM-quantized audio so
                # preprocessing the wavs reproduces the stored mel
                # bit-exactly
                wave_q, _ = read_wav(root / wav_rel)
                mel = extract_mel(wave_q, cfg)
                if mel.shape[0] != len(f0):
                    raise RuntimeError("generator frame bookkeeping is broken")
                mel_rel, f0_rel, align_rel = (
                    f"mel/{utt_id}.mrsv",
                    f"f0/{utt_id}.mrsv",
                    f"align/{utt_id}.txt",
                )
                mrsv.write_tensor(root / mel_rel, mel)
                mrsv.write_tensor(root / f0_rel, f0)
                write_alignment(root / align_rel, labels, durations, cfg.hop_seconds)
                entries.append(
                    ManifestEntry(
                        utt_id, spec.speaker_id, mel_rel, f0_rel, align_rel, wav_rel
                    )
                )

    manifest = CorpusManifest(root, entries, toy_inventory(), cfg, cfg.config_hash())
    save_manifest(manifest)
    return manifest


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass
class UtteranceReport:
    utt_id: str
    ok: bool
    problems: list[str]


@dataclass
class CorpusReport:
    reports: list[UtteranceReport]

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.reports)

    @property
    def n_failed(self) -> int:
        return sum(not r.ok for r in self.reports)

    def __len__(self) -> int:
        return len(self.reports)


def validate_corpus(manifest: CorpusManifest) -> CorpusReport:
    """Check every utterance against the data invariants; never raises on
    per-utterance data problems, never mutates anything."""
    cfg = manifest.config
    expected_hash = cfg.config_hash()
    reports = []
    for e in manifest.entries:
        problems = []
        if manifest.config_hash and manifest.config_hash != expected_hash:
            problems.append("manifest config_hash does not match config.json")
        mel = f0 = alignment = None
        for rel in (e.mel_path, e.f0_path, e.align_path):
            if not (manifest.root / rel).exists():
                problems.append(f"missing file: {rel}")
        if not problems:
            try:
                mel = mrsv.read_tensor(manifest.root / e.mel_path)
                f0 = mrsv.read_tensor(manifest.root / e.f0_path)
                alignment = load_alignment(
                    manifest.root / e.align_path, cfg.hop_seconds, manifest.inventory_map
                )
            except (ValueError, OSError) as exc:
                problems.append(str(exc))
        if not problems:
            utt = Utterance(e.utt_id, e.speaker_id, alignment, f0, mel)
            problems.extend(utt.check(cfg))
        reports.append(UtteranceReport(e.utt_id, not problems, problems))
    return CorpusReport(reports)


def corpus_digest(root: str | Path) -> str:
    """SHA-256 over every file (sorted relative paths + contents)."""
    root = Path(root)
    digest = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        digest.update(str(path.relative_to(root)).encode("utf-8"))
        digest.update(b"\x00")
        digest.update(path.read_bytes())
    return digest.hexdigest()
