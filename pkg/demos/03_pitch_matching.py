"""
Register matching by voiced-mean shifting
=========================================

Moves a low singer's contour into a high singer's register by adding
the difference of voiced means, the same operation conversion applies
before quantizing pitch. Unvoiced frames stay untouched and the voiced
mean lands exactly on the references' mean. Run demo 01 first.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from singsynth import (
    PitchShiftConfig,
    extract_f0,
    read_wav,
    shift_to_references,
    voiced_mean,
)
from singsynth.corpus import load_manifest
from singsynth.signal import voiced_mean_multi

out_root = Path("demo_output")
manifest = load_manifest(out_root / "corpus")
cfg = manifest.config

by_speaker = {}
for entry in manifest.entries:
    by_speaker.setdefault(entry.speaker_id, []).append(entry)

source_entry = by_speaker["spk000"][0]
ref_entries = by_speaker["spk001"][:3]

source_f0 = extract_f0(read_wav(Path(manifest.root) / source_entry.wav_path)[0], cfg)
ref_f0s = [
    extract_f0(read_wav(Path(manifest.root) / e.wav_path)[0], cfg)
    for e in ref_entries
]

shifted = shift_to_references(source_f0, ref_f0s, PitchShiftConfig())
print(f"source voiced mean:     {voiced_mean(source_f0):8.2f} Hz")
print(f"references voiced mean: {voiced_mean_multi(ref_f0s):8.2f} Hz")
print(f"shifted voiced mean:    {voiced_mean(shifted):8.2f} Hz")
print(f"residual: {abs(voiced_mean(shifted) - voiced_mean_multi(ref_f0s)):.2e} Hz")
same_mask = np.array_equal(shifted > 0, source_f0 > 0)
print(f"unvoiced mask preserved: {same_mask}")

frames = np.arange(len(source_f0))
fig, ax = plt.subplots(figsize=(9, 3.5))
ax.plot(frames, np.where(source_f0 > 0, source_f0, np.nan), label="source")
ax.plot(frames, np.where(shifted > 0, shifted, np.nan), label="shifted")
ax.axhline(voiced_mean_multi(ref_f0s), linestyle="--", color="gray",
           label="reference mean")
ax.set_xlabel("frame")
ax.set_ylabel("f0 (Hz)")
ax.legend()
ax.set_title("voiced-mean register matching")
fig.tight_layout()
fig.savefig(out_root / "03_pitch_shift.png", dpi=120)
print(f"wrote {out_root / '03_pitch_shift.png'}")
