"""Command-line front end.

Subcommands cover the whole pipeline: corpus generation, feature
extraction, validation, training, conversion, score synthesis, and
objective evaluation. Every command takes --seed and writes a resolved
configuration snapshot (run_config.json, canonical JSON) next to its
outputs, so any artifact can be traced back to the exact settings that
produced it.

Exit codes: 0 success, 1 data or runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import torch

from . import mrsv
from .acoustic import ModelConfig, quantize_pitch
from .corpus import (
    AlignmentError,
    CorpusManifest,
    ManifestEntry,
    corpus_digest,
    generate_toy_corpus,
    load_alignment,
    load_manifest,
    save_manifest,
    validate_corpus,
)
from .pitch import PitchShiftConfig, shift_to_references
from .plotting import save_f0_comparison, save_mel_plot
from .signal import (
    FeatureConfig,
    NoVoicedFramesError,
    extract_f0,
    extract_mel,
    normalize_mel,
    read_wav,
    voiced_mean,
    voiced_mean_multi,
    write_wav,
)
from .speakers import ExternalEmbeddings, MultiRefConfig, fixed_embed
from .training import (
    CorpusData,
    OptimizerConfig,
    evaluate,
    load_checkpoint,
    synthesize_mel,
    train,
)
from .vocoder import vocode


class UsageError(Exception):
    """Bad flags or configuration; maps to exit code 2."""


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_snapshot(out_dir: Path, payload: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    (out_dir / "run_config.json").write_text(text)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        loaded = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(loaded, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return loaded


def _feature_config(sections: dict, corpus_root: Path | None) -> FeatureConfig:
    if "feature" in sections:
        return FeatureConfig.from_dict(sections["feature"])
    if corpus_root is not None and (corpus_root / "config.json").exists():
        return FeatureConfig.from_dict(
            json.loads((corpus_root / "config.json").read_text())
        )
    return FeatureConfig()


# ---------------------------------------------------------------------------
# score files
# ---------------------------------------------------------------------------


def parse_score(
    path: str | Path, inventory: dict[str, int]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read a score: one phoneme per line, "label frames f0".

    f0 is "0" for unvoiced, a single Hz value held for the whole
    phoneme, or "a:b" for a linear ramp across its frames. Returns
    (phoneme ids [L], durations [L], frame f0 [T]).
    """
    path = Path(path)
    phonemes: list[int] = []
    durations: list[int] = []
    segments: list[np.ndarray] = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise UsageError(
                f"{path}:{lineno}: expected 'label frames f0', got {raw!r}"
            )
        label, frames_s, f0_s = fields
        if label not in inventory:
            raise UsageError(f"{path}:{lineno}: unknown phoneme label {label!r}")
        try:
            frames = int(frames_s)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad frame count {frames_s!r}") from exc
        if frames < 0:
            raise UsageError(f"{path}:{lineno}: negative frame count")
        try:
            if ":" in f0_s:
                start_s, end_s = f0_s.split(":", 1)
                start, end = float(start_s), float(end_s)
                if start <= 0 or end <= 0:
                    raise UsageError(
                        f"{path}:{lineno}: ramp endpoints must be positive Hz"
                    )
                seg = np.linspace(start, end, frames)
            else:
                value = float(f0_s)
                if value < 0:
                    raise UsageError(f"{path}:{lineno}: negative f0")
                seg = np.full(frames, value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad f0 field {f0_s!r}") from exc
        phonemes.append(inventory[label])
        durations.append(frames)
        segments.append(seg)
    if not phonemes:
        raise UsageError(f"{path}: empty score")
    f0 = np.concatenate(segments) if segments else np.zeros(0)
    return (
        np.asarray(phonemes, dtype=np.int64),
        np.asarray(durations, dtype=np.int64),
        f0.astype(np.float32),
    )


def format_score(
    labels: list[str], durations: np.ndarray, f0: np.ndarray
) -> str:
    """Inverse of parse_score for contours constant within each phoneme."""
    lines = []
    edge = 0
    for label, dur in zip(labels, np.asarray(durations, dtype=np.int64)):
        seg = np.asarray(f0[edge : edge + dur], dtype=np.float64)
        edge += int(dur)
        if dur > 0 and (seg > 0).all():
            if np.allclose(seg, seg[0]):
                lines.append(f"{label} {int(dur)} {seg[0]:.6f}")
            else:
                lines.append(f"{label} {int(dur)} {seg[0]:.6f}:{seg[-1]:.6f}")
        else:
            lines.append(f"{label} {int(dur)} 0")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# source / reference resolution
# ---------------------------------------------------------------------------


def _list_ref_wavs(refs_dir: str) -> list[Path]:
    root = Path(refs_dir)
    if not root.is_dir():
        raise UsageError(f"references directory not found: {refs_dir}")
    wavs = sorted(root.glob("*.wav"))
    if not wavs:
        raise UsageError(f"no .wav files in references directory {refs_dir}")
    return wavs


def _load_refs(
    refs_dir: str, cfg: FeatureConfig
) -> tuple[list[str], list[np.ndarray], list[np.ndarray]]:
    """Reference ids, log-mels, and f0 contours from a directory of wavs."""
    ids, mels, f0s = [], [], []
    for path in _list_ref_wavs(refs_dir):
        wave, sr = read_wav(path)
        if sr != cfg.sample_rate:
            raise ValueError(
                f"{path}: sample rate {sr} != configured {cfg.sample_rate}"
            )
        ids.append(path.stem)
        mels.append(extract_mel(wave, cfg))
        f0s.append(extract_f0(wave, cfg))
    return ids, mels, f0s


def _resolve_source(
    source_audio: str, align_flag: str | None, phones_flag: str | None
) -> tuple[Path, Path, Path | None, Path | None]:
    """Locate alignment/phones for a source wav.

    A wav living in a corpus layout (<root>/wav/<id>.wav) resolves its
    sibling align/<id>.txt, phones.txt, and stored f0 automatically;
    flags override. Returns (wav, align, phones, stored_f0)."""
    wav = Path(source_audio)
    if not wav.exists():
        raise UsageError(f"source audio not found: {source_audio}")
    root = wav.parent.parent if wav.parent.name == "wav" else None
    align = Path(align_flag) if align_flag else None
    if align is None and root is not None:
        candidate = root / "align" / (wav.stem + ".txt")
        align = candidate if candidate.exists() else None
    if align is None or not align.exists():
        raise UsageError(
            f"no alignment for {source_audio}; pass --source-align or use a "
            "corpus-layout wav"
        )
    phones = Path(phones_flag) if phones_flag else None
    if phones is None and root is not None:
        candidate = root / "phones.txt"
        phones = candidate if candidate.exists() else None
    stored_f0 = None
    if root is not None:
        candidate = root / "f0" / (wav.stem + ".mrsv")
        stored_f0 = candidate if candidate.exists() else None
    return wav, align, phones, stored_f0


def _load_model(ckpt: str, step: int | None = None):
    model, step_loaded, configs = load_checkpoint(ckpt, step)
    feature_cfg = FeatureConfig.from_dict(configs["feature"])
    return model, step_loaded, configs, feature_cfg


def _inventory_from_file(path: Path, n_expected: int) -> dict[str, int]:
    labels = path.read_text().splitlines()
    if len(labels) != n_expected:
        raise UsageError(
            f"phoneme inventory {path} has {len(labels)} labels; the model "
            f"was built for {n_expected}"
        )
    return {label: i for i, label in enumerate(labels)}


def _synthesize_and_vocode(
    model, feature_cfg, phonemes, durations, bins, spk_vec, ref_norm, n_iters
):
    predicted = synthesize_mel(model, phonemes, durations, bins, spk_vec, ref_norm)
    cond = model.voc(
        torch.from_numpy(predicted), torch.from_numpy(np.asarray(bins, dtype=np.int64))
    )
    wave = vocode(cond, feature_cfg, n_iters=n_iters)
    return predicted, wave


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_make_toy_corpus(args) -> int:
    out = Path(args.out)
    if args.speakers < 1 or args.utts < 1:
        raise UsageError("--speakers and --utts must be >= 1")
    if args.pitch_variants < 1:
        raise UsageError("--pitch-variants must be >= 1")
    if out.exists() and any(out.iterdir()) and not args.force:
        raise UsageError(f"output directory {out} is not empty (use --force)")
    sections = _load_config_file(args.config)
    cfg = _feature_config(sections, None)
    _write_snapshot(
        out,
        {
            "command": "make-toy-corpus",
            "seed": args.seed,
            "speakers": args.speakers,
            "utts": args.utts,
            "pitch_variants": args.pitch_variants,
            "variant_span_semitones": args.variant_span,
            "feature": cfg.to_dict(),
        },
    )
    manifest = generate_toy_corpus(
        out,
        args.speakers,
        args.utts,
        args.seed,
        cfg,
        pitch_variants=args.pitch_variants,
        variant_span_semitones=args.variant_span,
    )
    print(f"wrote {len(manifest.entries)} utterances, "
          f"{len(manifest.speakers())} speakers to {out}")
    print(f"corpus digest: {corpus_digest(out)}")
    return 0


def cmd_preprocess(args) -> int:
    root = Path(args.corpus)
    wav_dir = root / "wav"
    if not wav_dir.is_dir():
        raise UsageError(f"{root} has no wav/ directory")
    sections = _load_config_file(args.config)
    cfg = _feature_config(sections, root)
    inventory_path = root / "phones.txt"
    if not inventory_path.exists():
        raise UsageError(f"{root} has no phones.txt")
    inventory = {
        label: i for i, label in enumerate(inventory_path.read_text().splitlines())
    }

    old_entries = {}
    if (root / "manifest.tsv").exists():
        old_entries = {e.utt_id: e for e in load_manifest(root).entries}

    (root / "mel").mkdir(exist_ok=True)
    (root / "f0").mkdir(exist_ok=True)
    entries = []
    failures = []
    for wav_path in sorted(wav_dir.glob("*.wav")):
        utt_id = wav_path.stem
        mel_path = root / "mel" / f"{utt_id}.mrsv"
        f0_path = root / "f0" / f"{utt_id}.mrsv"
        try:
            wave, sr = read_wav(wav_path)
            if sr != cfg.sample_rate:
                raise ValueError(f"sample rate {sr} != configured {cfg.sample_rate}")
            align_path = root / "align" / f"{utt_id}.txt"
            if not align_path.exists():
                raise FileNotFoundError(f"missing alignment {align_path}")
            load_alignment(align_path, cfg.hop_seconds, inventory)
            mel = extract_mel(wave, cfg)
            f0 = extract_f0(wave, cfg)
            mrsv.write_tensor(mel_path, mel)
            mrsv.write_tensor(f0_path, f0)
        except (ValueError, OSError) as exc:
            failures.append(f"{wav_path.name}: {exc}")
            for partial in (mel_path, f0_path):
                partial.unlink(missing_ok=True)
            continue
        speaker = (
            old_entries[utt_id].speaker_id
            if utt_id in old_entries
            else utt_id.split("_")[0]
        )
        entries.append(
            ManifestEntry(
                utt_id,
                speaker,
                f"mel/{utt_id}.mrsv",
                f"f0/{utt_id}.mrsv",
                f"align/{utt_id}.txt",
                f"wav/{utt_id}.wav",
            )
        )
    manifest = CorpusManifest(
        root, entries, inventory_path.read_text().splitlines(), cfg, cfg.config_hash()
    )
    save_manifest(manifest)
    _write_snapshot(
        root, {"command": "preprocess", "seed": args.seed, "feature": cfg.to_dict()}
    )
    print(f"preprocessed {len(entries)} utterances")
    if failures:
        for line in failures:
            print(f"FAILED {line}", file=sys.stderr)
        return 1
    print(f"corpus digest: {corpus_digest(root)}")
    return 0


def cmd_validate(args) -> int:
    manifest = load_manifest(args.corpus)
    report = validate_corpus(manifest)
    for utt in report.reports:
        if not utt.ok:
            for problem in utt.problems:
                print(f"FAIL {utt.utt_id}: {problem}", file=sys.stderr)
    print(f"checked {len(report)} utterances: "
          f"{len(report) - report.n_failed} ok, {report.n_failed} failed")
    return 0 if report.ok else 1


def _profile_configs(profile: str, n_phonemes: int, sections: dict):
    model_over = dict(sections.get("model", {}))
    mr_over = dict(sections.get("mr", {}))
    opt_over = dict(sections.get("optimizer", {}))
    if profile == "toy":
        model_cfg = ModelConfig.toy_profile(n_phonemes, **model_over)
        mr_cfg = MultiRefConfig.toy_profile(d_query=model_cfg.d_model, **mr_over)
        opt_defaults = dict(
            warmup=800,
            max_steps=5000,
            eval_every=250,
            checkpoint_every=1000,
        )
    elif profile == "paper":
        model_cfg = ModelConfig.paper_profile(n_phonemes, **model_over)
        mr_over.setdefault("d_query", model_cfg.d_model)
        mr_cfg = MultiRefConfig(**mr_over)
        opt_defaults = {}
    else:
        raise UsageError(f"unknown profile {profile!r}")
    opt_defaults.update(opt_over)
    opt_defaults["d_model"] = model_cfg.d_model
    opt_cfg = OptimizerConfig(**opt_defaults)
    return model_cfg, mr_cfg, opt_cfg


def cmd_train(args) -> int:
    manifest = load_manifest(args.corpus)
    run_dir = Path(args.out)
    sections = _load_config_file(args.config)

    if args.resume:
        if (
            not (run_dir / "config.json").exists()
            or not any(run_dir.glob("step_*/params.mrsv"))
        ):
            raise UsageError(f"--resume: no checkpoint under {run_dir}")
        configs = json.loads((run_dir / "config.json").read_text())
        model_cfg = ModelConfig.from_dict(configs["model"])
        mr_cfg = MultiRefConfig.from_dict(configs["mr"])
        opt_cfg = OptimizerConfig.from_dict(configs["optimizer"])
        if args.max_steps is not None:
            opt_cfg.max_steps = args.max_steps
        seed = configs["seed"]
        spk_backend = configs["spk_backend"]
    else:
        model_cfg, mr_cfg, opt_cfg = _profile_configs(
            args.profile, len(manifest.phoneme_inventory), sections
        )
        for value, attr in (
            (args.max_steps, "max_steps"),
            (args.warmup, "warmup"),
            (args.token_budget, "token_budget"),
            (args.early_stop_l1, "early_stop_l1"),
            (args.eval_every, "eval_every"),
            (args.checkpoint_every, "checkpoint_every"),
        ):
            if value is not None:
                setattr(opt_cfg, attr, value)
        seed = args.seed
        spk_backend = args.spk_backend

    external = None
    if spk_backend == "external-file":
        if not args.embeddings:
            raise UsageError("--spk-backend external-file needs --embeddings")
        external = ExternalEmbeddings.load(args.embeddings)

    resolved = {
        "command": "train",
        "seed": seed,
        "profile": args.profile,
        "model": model_cfg.to_dict(),
        "mr": mr_cfg.to_dict(),
        "optimizer": opt_cfg.to_dict(),
        "feature": manifest.config.to_dict(),
        "spk_backend": spk_backend,
        "corpus": str(Path(args.corpus)),
    }
    print(json.dumps(resolved, sort_keys=True, indent=2))
    _write_snapshot(run_dir, resolved)

    result = train(
        manifest,
        run_dir,
        model_cfg,
        mr_cfg,
        opt_cfg,
        seed=seed,
        spk_backend=spk_backend,
        external=external,
        resume=args.resume,
        log=print,
    )
    print(
        f"trained {result.steps_run} steps to step {result.final_step} "
        f"(early stop: {result.stopped_early}); last loss {result.last_loss:.4f}"
    )
    return 0


def cmd_convert(args) -> int:
    model, step, configs, cfg = _load_model(args.ckpt)
    out = Path(args.out)
    wav_path, align_path, phones_path, stored_f0 = _resolve_source(
        args.source_audio, args.source_align, args.phones
    )
    if phones_path is None:
        raise UsageError("no phoneme inventory; pass --phones")
    inventory = _inventory_from_file(phones_path, model.acoustic.cfg.n_phonemes)
    alignment = load_alignment(align_path, cfg.hop_seconds, inventory)

    wave, sr = read_wav(wav_path)
    if sr != cfg.sample_rate:
        raise ValueError(f"{wav_path}: sample rate {sr} != configured {cfg.sample_rate}")
    if stored_f0 is not None:
        f0_source = mrsv.read_tensor(stored_f0).astype(np.float32)
        f0_origin = "stored"
    else:
        f0_source = extract_f0(wave, cfg)
        f0_origin = "estimated"
    if alignment.total_frames != len(f0_source):
        raise ValueError(
            f"alignment frames {alignment.total_frames} != f0 frames "
            f"{len(f0_source)}"
        )

    ref_ids, ref_mels, ref_f0s = _load_refs(args.refs, cfg)
    shift_cfg = PitchShiftConfig(
        enabled=not args.no_pitch_shift, f0_lower_bound=cfg.f0_floor
    )
    f0_input = shift_to_references(f0_source, ref_f0s, shift_cfg)
    src_mean = voiced_mean(f0_source)
    ref_mean = voiced_mean_multi(ref_f0s)
    delta = (voiced_mean(f0_input) - src_mean) if (f0_input > 0).any() else 0.0
    print(f"f0 source ({f0_origin}) voiced mean: {src_mean:.2f} Hz")
    print(f"references voiced mean: {ref_mean:.2f} Hz")
    print(f"applied shift: {delta:+.2f} Hz")

    bins = quantize_pitch(f0_input, cfg.f0_floor, cfg.f0_ceil, model.acoustic.cfg.pitch_bins)
    external = None
    if configs["spk_backend"] == "external-file":
        if not args.embeddings:
            raise UsageError("model uses external-file embeddings; pass --embeddings")
        external = ExternalEmbeddings.load(args.embeddings)
    spk_vec = fixed_embed(
        ref_mels, configs["spk_backend"], utt_ids=ref_ids, external=external
    )
    ref_norm = [normalize_mel(m, cfg) for m in ref_mels]
    predicted, wave_out = _synthesize_and_vocode(
        model, cfg, alignment.phonemes, alignment.durations, bins, spk_vec,
        ref_norm, args.vocoder_iters,
    )

    out.mkdir(parents=True, exist_ok=True)
    write_wav(out / "output.wav", wave_out, cfg.sample_rate)
    mrsv.write_tensor(out / "pred_mel.mrsv", predicted)
    mrsv.write_tensor(out / "pitch_bins.mrsv", bins)
    save_f0_comparison(
        out / "f0_shift.png",
        {"source": f0_source, "shifted input": f0_input},
        title="pitch shift",
    )
    save_mel_plot(out / "output_mel.png", predicted, title="predicted mel", f0=f0_input)
    _write_snapshot(
        out,
        {
            "command": "convert",
            "seed": args.seed,
            "checkpoint": str(Path(args.ckpt)),
            "checkpoint_step": step,
            "source_audio": str(wav_path),
            "refs": str(Path(args.refs)),
            "pitch_shift": {
                "enabled": not args.no_pitch_shift,
                "f0_lower_bound": cfg.f0_floor,
            },
            "vocoder_iters": args.vocoder_iters,
            "feature": cfg.to_dict(),
        },
    )
    print(f"wrote {out / 'output.wav'}")
    print(f"output digest: {_file_digest(out / 'output.wav')}")
    return 0


def cmd_synthesize(args) -> int:
    model, step, configs, cfg = _load_model(args.ckpt)
    out = Path(args.out)
    if args.phones:
        phones_path = Path(args.phones)
    else:
        raise UsageError("cmd_synthesize needs --phones (phoneme inventory file)")
    inventory = _inventory_from_file(phones_path, model.acoustic.cfg.n_phonemes)
    phonemes, durations, f0 = parse_score(args.score, inventory)

    offset = float(args.pitch_offset)
    f0_shifted = (f0 * 2.0 ** (offset / 12.0)).astype(np.float32)
    bins = quantize_pitch(
        f0_shifted, cfg.f0_floor, cfg.f0_ceil, model.acoustic.cfg.pitch_bins
    )

    ref_ids, ref_mels, _ = _load_refs(args.refs, cfg)
    external = None
    if configs["spk_backend"] == "external-file":
        if not args.embeddings:
            raise UsageError("model uses external-file embeddings; pass --embeddings")
        external = ExternalEmbeddings.load(args.embeddings)
    spk_vec = fixed_embed(
        ref_mels, configs["spk_backend"], utt_ids=ref_ids, external=external
    )
    ref_norm = [normalize_mel(m, cfg) for m in ref_mels]
    predicted, wave_out = _synthesize_and_vocode(
        model, cfg, phonemes, durations, bins, spk_vec, ref_norm, args.vocoder_iters
    )

    out.mkdir(parents=True, exist_ok=True)
    write_wav(out / "output.wav", wave_out, cfg.sample_rate)
    mrsv.write_tensor(out / "pred_mel.mrsv", predicted)
    mrsv.write_tensor(out / "pitch_bins.mrsv", bins)
    save_mel_plot(
        out / "synth_mel.png",
        predicted,
        title=f"synthesized mel (offset {offset:+.1f} st)",
        f0=f0_shifted,
    )
    _write_snapshot(
        out,
        {
            "command": "synthesize",
            "seed": args.seed,
            "checkpoint": str(Path(args.ckpt)),
            "checkpoint_step": step,
            "score": str(Path(args.score)),
            "refs": str(Path(args.refs)),
            "pitch_offset_semitones": offset,
            "vocoder_iters": args.vocoder_iters,
            "feature": cfg.to_dict(),
        },
    )
    voiced = bins[bins > 0]
    print(f"pitch offset {offset:+.1f} semitones; "
          f"voiced bins min/mean/max: "
          f"{voiced.min() if voiced.size else 0}/"
          f"{voiced.mean() if voiced.size else 0:.1f}/"
          f"{voiced.max() if voiced.size else 0}")
    print(f"wrote {out / 'output.wav'}")
    print(f"output digest: {_file_digest(out / 'output.wav')}")
    return 0


def cmd_eval(args) -> int:
    model, step, configs, cfg = _load_model(args.ckpt)
    manifest = load_manifest(args.corpus)
    data = CorpusData(manifest, model.acoustic.cfg.pitch_bins)
    external = None
    if configs["spk_backend"] == "external-file":
        if not args.embeddings:
            raise UsageError("model uses external-file embeddings; pass --embeddings")
        external = ExternalEmbeddings.load(args.embeddings)
    utt_ids = sorted(data.items)
    if args.n_utts is not None:
        utt_ids = utt_ids[: args.n_utts]
    metrics = evaluate(
        model,
        data,
        utt_ids,
        n_refs=args.n_refs,
        seed=args.seed,
        spk_backend=configs["spk_backend"],
        external=external,
        vocode_iters=args.vocoder_iters,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(
        "step,mel_L1,f0_consistency,spk_cosine\n"
        f"{step},{metrics['mel_L1']:.6f},{metrics['f0_consistency']:.6f},"
        f"{metrics['spk_cosine']:.6f}\n"
    )
    _write_snapshot(
        out.parent,
        {
            "command": "eval",
            "seed": args.seed,
            "checkpoint": str(Path(args.ckpt)),
            "checkpoint_step": step,
            "corpus": str(Path(args.corpus)),
            "n_refs": args.n_refs,
            "feature": cfg.to_dict(),
        },
    )
    print(
        f"step {step}: mel_L1 {metrics['mel_L1']:.4f}, "
        f"f0_consistency {metrics['f0_consistency']:.2f} Hz, "
        f"spk_cosine {metrics['spk_cosine']:.4f}"
    )
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="singsynth",
        description="zero-shot multi-speaker singing synthesis pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-toy-corpus", help="generate a synthetic singer corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--speakers", type=int, default=2)
    p.add_argument("--utts", type=int, default=4)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--pitch-variants", type=int, default=1,
                   help="transposed copies rendered per utterance")
    p.add_argument("--variant-span", type=float, default=4.0,
                   help="semitone half-range of the transposed copies")
    p.add_argument("--config", help="JSON config file (feature section)")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_make_toy_corpus)

    p = sub.add_parser("preprocess", help="extract mel/f0 features from wavs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", help="JSON config file (feature section)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("validate", help="check corpus invariants")
    p.add_argument("--corpus", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("train", help="train the synthesis model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="run directory for checkpoints")
    p.add_argument("--profile", choices=("toy", "paper"), default="toy")
    p.add_argument("--config", help="JSON config file (model/mr/optimizer sections)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--warmup", type=int, default=None)
    p.add_argument("--token-budget", type=int, default=None)
    p.add_argument("--early-stop-l1", type=float, default=None)
    p.add_argument("--eval-every", type=int, default=None)
    p.add_argument("--checkpoint-every", type=int, default=None)
    p.add_argument(
        "--spk-backend", choices=("builtin-stats", "external-file"),
        default="builtin-stats",
    )
    p.add_argument("--embeddings", help="MRSV bundle for external-file backend")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("convert", help="convert a song to the reference singers")
    p.add_argument("--source-audio", required=True)
    p.add_argument("--refs", required=True, help="directory of reference wavs")
    p.add_argument("--ckpt", required=True, help="training run directory")
    p.add_argument("--out", required=True)
    p.add_argument("--no-pitch-shift", action="store_true")
    p.add_argument("--source-align", help="alignment file (corpus layout auto-detects)")
    p.add_argument("--phones", help="phoneme inventory file")
    p.add_argument("--vocoder-iters", type=int, default=60)
    p.add_argument("--embeddings", help="MRSV bundle for external-file backend")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("synthesize", help="synthesize from a score file")
    p.add_argument("--score", required=True)
    p.add_argument("--refs", required=True, help="directory of reference wavs")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pitch-offset", type=float, default=0.0, help="semitones")
    p.add_argument("--phones", help="phoneme inventory file")
    p.add_argument("--vocoder-iters", type=int, default=60)
    p.add_argument("--embeddings", help="MRSV bundle for external-file backend")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("eval", help="objective metrics for a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="metrics csv path")
    p.add_argument("--n-utts", type=int, default=None)
    p.add_argument("--n-refs", type=int, default=2)
    p.add_argument("--vocoder-iters", type=int, default=30)
    p.add_argument("--embeddings", help="MRSV bundle for external-file backend")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NoVoicedFramesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (
        ValueError,
        KeyError,
        OSError,
        RuntimeError,
        AlignmentError,
        mrsv.MrsvFormatError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())