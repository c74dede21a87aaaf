"""
Generating a synthetic singing corpus
=====================================

Builds a tiny deterministic corpus of two synthetic singers, inspects
its manifest and one alignment file, and plots the first utterance.
Outputs land in ./demo_output/corpus.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from singsynth import corpus_digest, generate_toy_corpus, read_wav
from singsynth.corpus import load_alignment, load_manifest

out_root = Path("demo_output")
corpus_root = out_root / "corpus"

# two singers in different registers, four melodies each; everything is
# a pure function of the seed, so re-running reproduces the same bytes
if not (corpus_root / "manifest.tsv").exists():
    manifest = generate_toy_corpus(
        corpus_root, n_speakers=2, utts_per_speaker=4, seed=42
    )
else:
    manifest = load_manifest(corpus_root)

print(f"utterances: {len(manifest.entries)}")
print(f"speakers:   {sorted(manifest.speakers())}")
print(f"phonemes:   {manifest.phoneme_inventory}")
print(f"digest:     {corpus_digest(corpus_root)}")

# the alignment gives each phoneme's time interval; frame counts follow
# from nearest-frame rounding of the interval edges
entry = manifest.entries[0]
alignment = load_alignment(
    corpus_root / entry.align_path,
    manifest.config.hop_seconds,
    {label: i for i, label in enumerate(manifest.phoneme_inventory)},
)
print(f"\nfirst utterance {entry.utt_id} ({alignment.total_frames} frames):")
for label_id, frames in zip(alignment.phonemes, alignment.durations):
    print(f"  {manifest.phoneme_inventory[label_id]:>4} {frames:3d} frames")

wave, sr = read_wav(corpus_root / entry.wav_path)
t = np.arange(len(wave)) / sr
fig, ax = plt.subplots(figsize=(9, 3))
ax.plot(t, wave, linewidth=0.4)
ax.set_xlabel("time (s)")
ax.set_ylabel("amplitude")
ax.set_title(f"{entry.utt_id} waveform")
fig.tight_layout()
fig.savefig(out_root / "01_waveform.png", dpi=120)
print(f"\nwrote {out_root / '01_waveform.png'}")
