"""
Converting a song to unseen reference singers
=============================================

Trains on a pitch-varied corpus (each melody rendered at several
transpositions, so pitch input generalizes beyond the written notes),
then converts a low-register song to a high-register singer given only
three reference recordings. Takes a few minutes on one CPU core.
"""

import shutil
from pathlib import Path

from singsynth import extract_f0, generate_toy_corpus, read_wav, voiced_mean
from singsynth.cli import main as singsynth
from singsynth.corpus import load_manifest
from singsynth.signal import voiced_mean_multi

out_root = Path("demo_output")
corpus_root = out_root / "varied_corpus"
run_dir = out_root / "conversion_run"

# each utterance appears at five transpositions spanning +-4 semitones;
# timing and timbre stay fixed, so pitch bins are the only pitch source
if not (corpus_root / "manifest.tsv").exists():
    print("generating pitch-varied corpus...")
    generate_toy_corpus(
        corpus_root, n_speakers=2, utts_per_speaker=4, seed=42,
        pitch_variants=5, variant_span_semitones=4.0,
    )
manifest = load_manifest(corpus_root)
print(f"corpus: {len(manifest.entries)} utterances")

if not any(run_dir.glob("step_*")):
    print("training 1000 steps (a few minutes)...")
    code = singsynth([
        "train", "--corpus", str(corpus_root), "--out", str(run_dir),
        "--profile", "toy", "--seed", "0", "--max-steps", "1000",
        "--eval-every", "500",
    ])
    assert code == 0

refs_dir = out_root / "refs_spk001"
refs_dir.mkdir(exist_ok=True)
for utt in ("spk001_utt000", "spk001_utt001", "spk001_utt002"):
    shutil.copy(corpus_root / "wav" / f"{utt}.wav", refs_dir / f"{utt}.wav")

source = corpus_root / "wav" / "spk000_utt000.wav"
for label, extra in (("with_shift", []), ("no_shift", ["--no-pitch-shift"])):
    out = out_root / f"convert_{label}"
    code = singsynth([
        "convert", "--source-audio", str(source), "--refs", str(refs_dir),
        "--ckpt", str(run_dir), "--out", str(out), *extra,
    ])
    assert code == 0

cfg = manifest.config
target = voiced_mean_multi(
    [extract_f0(read_wav(p)[0], cfg) for p in sorted(refs_dir.glob("*.wav"))]
)
print(f"\nreference register: {target:.1f} Hz")
for label in ("with_shift", "no_shift"):
    wave, _ = read_wav(out_root / f"convert_{label}" / "output.wav")
    measured = voiced_mean(extract_f0(wave, cfg))
    print(
        f"{label:>10}: output register {measured:6.1f} Hz "
        f"({abs(measured - target) / target * 100:5.1f}% off target)"
    )
print(f"\nlisten to {out_root / 'convert_with_shift' / 'output.wav'}")
