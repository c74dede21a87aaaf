"""
Singing a score, transposed on demand
=====================================

Synthesizes a written melody in a reference singer's voice at three
pitch offsets. The score names phonemes, frame counts, and note
frequencies; the offset transposes the whole contour before
quantization. Run demo 06 first (this reuses its trained run).
"""

from pathlib import Path

from singsynth import extract_f0, read_wav, voiced_mean
from singsynth.cli import main as singsynth
from singsynth.corpus import load_manifest

out_root = Path("demo_output")
corpus_root = out_root / "varied_corpus"
run_dir = out_root / "conversion_run"
refs_dir = out_root / "refs_spk001"
if not any(run_dir.glob("step_*")):
    raise SystemExit("run demos/06_convert.py first to train the model")

score = out_root / "melody.txt"
score.write_text(
    "sil 8 0\n"
    "n00 30 220\n"
    "sil 4 0\n"
    "n01 25 196.5\n"
    "n02 28 246.9\n"
    "sil 8 0\n"
)
print(f"score:\n{score.read_text()}")

cfg = load_manifest(corpus_root).config
for offset in (-2, 0, 2):
    out = out_root / f"synth_{offset:+d}st"
    code = singsynth([
        "synthesize", "--score", str(score), "--refs", str(refs_dir),
        "--ckpt", str(run_dir), "--out", str(out),
        "--phones", str(corpus_root / "phones.txt"),
        "--pitch-offset", str(offset),
    ])
    assert code == 0
    wave, _ = read_wav(out / "output.wav")
    measured = voiced_mean(extract_f0(wave, cfg))
    print(f"offset {offset:+d} st: output voiced mean {measured:6.1f} Hz")

print(f"\nmel plots: {out_root}/synth_*st/synth_mel.png")
