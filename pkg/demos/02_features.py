"""
Mel spectrograms, pitch contours, and inversion
===============================================

Extracts the two model-facing features from a corpus utterance (a
log-mel spectrogram and an f0 contour), quantizes the contour to the
pitch table, and checks the Griffin-Lim round trip. Run demo 01 first.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from singsynth import (
    extract_f0,
    extract_mel,
    invert_mel,
    quantize_pitch,
    read_wav,
    voiced_mean,
    write_wav,
)
from singsynth.corpus import load_manifest

out_root = Path("demo_output")
manifest = load_manifest(out_root / "corpus")
cfg = manifest.config
entry = manifest.entries[0]

wave, sr = read_wav(Path(manifest.root) / entry.wav_path)
mel = extract_mel(wave, cfg)
f0 = extract_f0(wave, cfg)
print(f"{entry.utt_id}: {len(wave)} samples -> mel {mel.shape}, f0 {f0.shape}")
print(f"voiced fraction: {(f0 > 0).mean():.2f}")
print(f"voiced mean:     {voiced_mean(f0):.1f} Hz")

# the acoustic model and the vocoder conditioning share one pitch table:
# bin 0 is unvoiced, bins 1..N-1 tile [f0_floor, f0_ceil] in log-Hz
bins = quantize_pitch(f0, cfg.f0_floor, cfg.f0_ceil, 128)
print(f"voiced bins span {bins[bins > 0].min()}..{bins[bins > 0].max()} of 128")

# Griffin-Lim recovers a waveform whose re-extracted contour matches
reconstructed = invert_mel(mel, cfg, n_iters=60)
f0_round = extract_f0(reconstructed, cfg)
rel = abs(voiced_mean(f0_round) - voiced_mean(f0)) / voiced_mean(f0)
print(f"round-trip voiced-mean error: {rel * 100:.2f}%")
write_wav(out_root / "02_roundtrip.wav", reconstructed, cfg.sample_rate)

fig, axes = plt.subplots(2, 1, figsize=(9, 5), sharex=True)
axes[0].imshow(mel.T, origin="lower", aspect="auto", cmap="magma")
axes[0].set_ylabel("mel band")
axes[0].set_title("log-mel spectrogram")
frames = np.arange(len(f0))
axes[1].plot(frames, np.where(f0 > 0, f0, np.nan), linewidth=1.0)
axes[1].set_ylabel("f0 (Hz)")
axes[1].set_xlabel("frame")
axes[1].set_title("pitch contour (unvoiced gaps blank)")
fig.tight_layout()
fig.savefig(out_root / "02_features.png", dpi=120)
print(f"wrote {out_root / '02_features.png'} and 02_roundtrip.wav")
