"""Training loop: scheduled AdamW, reference sampling, checkpoints.

Determinism contract: everything random in a training run derives from
(seed, step) or (seed, epoch), never from hidden global state. A step
re-run from a checkpoint therefore reproduces its loss bit-for-bit,
and there is no RNG state to serialize.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import mrsv
from .acoustic import AcousticModel, ModelConfig, masked_l1, quantize_pitch
from .corpus import CorpusManifest, load_alignment
from .signal import FeatureConfig, extract_f0, extract_mel, normalize_mel
from .speakers import (
    ExternalEmbeddings,
    FlattenedReference,
    MultiRefConfig,
    MultiRefEncoder,
    builtin_stats_embedding,
    fixed_embed,
)
from .vocoder import VocoderConditioner, vocode

METRICS_COLUMNS = ("step", "mel_L1", "f0_consistency", "spk_cosine")


@dataclass
class OptimizerConfig:
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    weight_decay: float = 0.01
    warmup: int = 4000
    d_model: int = 256
    max_steps: int = 5000
    token_budget: int = 2000  # frames per batch
    n_refs: int = 2
    grad_clip: float = 1.0
    checkpoint_every: int = 1000
    eval_every: int = 500
    eval_utts: int = 8
    eval_vocode_iters: int = 30
    early_stop_l1: float | None = None

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("betas must lie in (0, 1)")
        if self.warmup < 1:
            raise ValueError("warmup must be >= 1")
        if self.token_budget < 1 or self.max_steps < 1 or self.n_refs < 1:
            raise ValueError("token_budget, max_steps and n_refs must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        return cls(**d)


def lr_schedule(step: int, d_model: int, warmup: int) -> float:
    """Warmup-then-inverse-sqrt schedule; peaks exactly at step == warmup."""
    if step < 1:
        raise ValueError("step must be >= 1")
    return d_model**-0.5 * min(step**-0.5, step * warmup**-1.5)


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


# ---------------------------------------------------------------------------
# model container and checkpoints
# ---------------------------------------------------------------------------


class SingingModel(nn.Module):
    """Trainable bundle: acoustic model, reference encoder, vocoder stack.

    The fixed-size speaker encoder is deliberately absent: it has no
    torch parameters, so freezing it is structural, not a flag.
    """

    def __init__(self, model_cfg: ModelConfig, mr_cfg: MultiRefConfig):
        super().__init__()
        if mr_cfg.d_query != model_cfg.d_model or mr_cfg.d_model != model_cfg.hf_dim:
            raise ValueError(
                "reference-encoder widths must match the acoustic model "
                f"(d_query {mr_cfg.d_query} vs d_model {model_cfg.d_model}; "
                f"attention {mr_cfg.d_model} vs hf_dim {model_cfg.hf_dim})"
            )
        self.acoustic = AcousticModel(model_cfg)
        self.mr = MultiRefEncoder(mr_cfg)
        self.voc = VocoderConditioner(model_cfg.pitch_bins, model_cfg.n_mels)


def build_optimizer(model: SingingModel, cfg: OptimizerConfig) -> torch.optim.AdamW:
    return torch.optim.AdamW(
        model.parameters(),
        lr=lr_schedule(1, cfg.d_model, cfg.warmup),
        betas=(cfg.beta1, cfg.beta2),
        eps=cfg.eps,
        weight_decay=cfg.weight_decay,
    )


def save_checkpoint(
    run_dir: str | Path,
    step: int,
    model: SingingModel,
    optimizer: torch.optim.AdamW | None = None,
) -> Path:
    step_dir = Path(run_dir) / f"step_{step}"
    step_dir.mkdir(parents=True, exist_ok=True)
    params = {name: t.detach().cpu().numpy() for name, t in model.state_dict().items()}
    mrsv.write_bundle(step_dir / "params.mrsv", params, meta={"step": step})
    if optimizer is not None:
        sd = optimizer.state_dict()
        tensors = {}
        steps = {}
        for pid, st in sd["state"].items():
            for key in ("exp_avg", "exp_avg_sq"):
                tensors[f"{pid}:{key}"] = st[key].detach().cpu().numpy()
            steps[str(pid)] = float(st["step"])
        meta = {"steps": steps, "param_groups": sd["param_groups"]}
        mrsv.write_bundle(step_dir / "optim.mrsv", tensors, meta=meta)
    return step_dir


def latest_step(run_dir: str | Path) -> int | None:
    steps = []
    for p in Path(run_dir).glob("step_*"):
        if p.is_dir() and (p / "params.mrsv").exists():
            try:
                steps.append(int(p.name.split("_", 1)[1]))
            except ValueError:
                continue
    return max(steps) if steps else None


def write_run_config(
    run_dir: str | Path,
    model_cfg: ModelConfig,
    mr_cfg: MultiRefConfig,
    opt_cfg: OptimizerConfig,
    feature_cfg: FeatureConfig,
    spk_backend: str,
    seed: int,
) -> None:
    payload = {
        "model": model_cfg.to_dict(),
        "mr": mr_cfg.to_dict(),
        "optimizer": opt_cfg.to_dict(),
        "feature": feature_cfg.to_dict(),
        "spk_backend": spk_backend,
        "seed": seed,
    }
    path = Path(run_dir) / "config.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def load_checkpoint(
    run_dir: str | Path, step: int | None = None
) -> tuple[SingingModel, int, dict]:
    """Rebuild the model from config.json plus a step_<N> parameter file.

    load_state_dict runs strict, so any shape or name drift between the
    stored bundle and the configured architecture fails loudly.
    """
    run_dir = Path(run_dir)
    if step is None:
        step = latest_step(run_dir)
        if step is None:
            raise FileNotFoundError(f"no checkpoints under {run_dir}")
    configs = json.loads((run_dir / "config.json").read_text())
    model = SingingModel(
        ModelConfig.from_dict(configs["model"]), MultiRefConfig.from_dict(configs["mr"])
    )
    tensors, _ = mrsv.read_bundle(run_dir / f"step_{step}" / "params.mrsv")
    state = {name: torch.from_numpy(arr.copy()) for name, arr in tensors.items()}
    model.load_state_dict(state, strict=True)
    return model, step, configs


def load_optimizer(
    run_dir: str | Path, step: int, model: SingingModel, opt_cfg: OptimizerConfig
) -> torch.optim.AdamW:
    optimizer = build_optimizer(model, opt_cfg)
    path = Path(run_dir) / f"step_{step}" / "optim.mrsv"
    if not path.exists():
        return optimizer
    tensors, meta = mrsv.read_bundle(path)
    state: dict[int, dict] = {}
    for name, arr in tensors.items():
        pid_s, key = name.split(":", 1)
        entry = state.setdefault(int(pid_s), {})
        entry[key] = torch.from_numpy(arr.copy())
    for pid_s, st in meta["steps"].items():
        state.setdefault(int(pid_s), {})["step"] = torch.tensor(float(st))
    optimizer.load_state_dict({"state": state, "param_groups": meta["param_groups"]})
    return optimizer


# ---------------------------------------------------------------------------
# data access
# ---------------------------------------------------------------------------


@dataclass
class UttData:
    utt_id: str
    speaker_id: str
    phonemes: np.ndarray  # [L] int64
    durations: np.ndarray  # [L] int64
    f0: np.ndarray  # [T] float32 Hz
    pitch_bins: np.ndarray  # [T] int64, quantized from f0
    mel_log: np.ndarray  # [T, n_mels] float32, raw log-mel
    mel_norm: np.ndarray  # [T, n_mels] float32 in [0, 1]
    spk_vec: np.ndarray  # [256] float32, frozen builtin embedding

    @property
    def n_frames(self) -> int:
        return len(self.f0)


class CorpusData:
    """Whole-corpus in-memory cache for desk-scale training runs."""

    def __init__(self, manifest: CorpusManifest, pitch_bins: int):
        self.manifest = manifest
        self.feature_cfg = manifest.config
        self.n_pitch_bins = pitch_bins
        self.items: dict[str, UttData] = {}
        self.by_speaker: dict[str, list[str]] = {}
        cfg = manifest.config
        for entry in manifest.entries:
            utt = manifest.load(entry.utt_id)
            bins = quantize_pitch(utt.f0, cfg.f0_floor, cfg.f0_ceil, pitch_bins)
            mel_log = utt.mel.astype(np.float32)
            data = UttData(
                utt_id=entry.utt_id,
                speaker_id=entry.speaker_id,
                phonemes=utt.alignment.phonemes,
                durations=utt.alignment.durations,
                f0=utt.f0.astype(np.float32),
                pitch_bins=bins,
                mel_log=mel_log,
                mel_norm=normalize_mel(mel_log, cfg),
                spk_vec=builtin_stats_embedding(mel_log),
            )
            self.items[entry.utt_id] = data
            self.by_speaker.setdefault(entry.speaker_id, []).append(entry.utt_id)

    def frames(self, utt_id: str) -> int:
        return self.items[utt_id].n_frames


def sample_references(
    data: CorpusData, target_utt: str, n_refs: int, rng: np.random.Generator
) -> list[str]:
    """Same-speaker references, excluding the target when siblings exist."""
    speaker = data.items[target_utt].speaker_id
    pool = [u for u in data.by_speaker[speaker] if u != target_utt]
    if not pool:
        pool = [target_utt]
    picks = rng.choice(len(pool), size=n_refs, replace=len(pool) < n_refs)
    return [pool[int(i)] for i in np.atleast_1d(picks)]


def make_batches(
    source: CorpusManifest | CorpusData,
    token_budget: int,
    seed: int,
    epoch: int = 0,
) -> list[list[str]]:
    """Greedy length-sorted packing under a total-frames budget.

    Batch composition is a pure function of lengths and the budget;
    only the order batches are visited in changes per (seed, epoch).
    """
    if isinstance(source, CorpusData):
        lengths = {u: d.n_frames for u, d in source.items.items()}
    else:
        lengths = {}
        for entry in source.entries:
            alignment = load_alignment(
                source.root / entry.align_path,
                source.config.hop_seconds,
                source.inventory_map,
            )
            lengths[entry.utt_id] = alignment.total_frames
    for utt_id, n in lengths.items():
        if n > token_budget:
            raise ValueError(
                f"utterance {utt_id!r} has {n} frames, over the "
                f"token budget {token_budget}"
            )
    order = sorted(lengths, key=lambda u: (lengths[u], u))
    batches: list[list[str]] = []
    current: list[str] = []
    used = 0
    for utt_id in order:
        n = lengths[utt_id]
        if current and used + n > token_budget:
            batches.append(current)
            current, used = [], 0
        current.append(utt_id)
        used += n
    if current:
        batches.append(current)
    rng = np.random.default_rng([seed, 31, epoch])
    return [batches[int(i)] for i in rng.permutation(len(batches))]


@dataclass
class Batch:
    utt_ids: list[str]
    phonemes: torch.Tensor  # [B, L] int64, zero padded
    phoneme_mask: torch.Tensor  # [B, L] bool
    durations: torch.Tensor  # [B, L] int64
    pitch_bins: torch.Tensor  # [B, T] int64
    mel: torch.Tensor  # [B, T, n_mels] float32, normalized
    frame_mask: torch.Tensor  # [B, T] bool
    spk: torch.Tensor  # [B, 256] float32
    f0: list[np.ndarray] = field(default_factory=list)


def collate(data: CorpusData, utt_ids: list[str]) -> Batch:
    items = [data.items[u] for u in utt_ids]
    l_max = max(len(it.phonemes) for it in items)
    t_max = max(it.n_frames for it in items)
    b = len(items)
    n_mels = items[0].mel_norm.shape[1]
    phonemes = np.zeros((b, l_max), dtype=np.int64)
    phoneme_mask = np.zeros((b, l_max), dtype=bool)
    durations = np.zeros((b, l_max), dtype=np.int64)
    bins = np.zeros((b, t_max), dtype=np.int64)
    mel = np.zeros((b, t_max, n_mels), dtype=np.float32)
    frame_mask = np.zeros((b, t_max), dtype=bool)
    spk = np.zeros((b, len(items[0].spk_vec)), dtype=np.float32)
    for i, it in enumerate(items):
        l, t = len(it.phonemes), it.n_frames
        phonemes[i, :l] = it.phonemes
        phoneme_mask[i, :l] = True
        durations[i, :l] = it.durations
        bins[i, :t] = it.pitch_bins
        mel[i, :t] = it.mel_norm
        frame_mask[i, :t] = True
        spk[i] = it.spk_vec
    return Batch(
        utt_ids=utt_ids,
        phonemes=torch.from_numpy(phonemes),
        phoneme_mask=torch.from_numpy(phoneme_mask),
        durations=torch.from_numpy(durations),
        pitch_bins=torch.from_numpy(bins),
        mel=torch.from_numpy(mel),
        frame_mask=torch.from_numpy(frame_mask),
        spk=torch.from_numpy(spk),
        f0=[it.f0 for it in items],
    )


# ---------------------------------------------------------------------------
# the step
# ---------------------------------------------------------------------------


def train_step(
    model: SingingModel,
    optimizer: torch.optim.AdamW,
    opt_cfg: OptimizerConfig,
    data: CorpusData,
    batch: Batch,
    seed: int,
    step: int,
) -> float:
    """One optimizer update; returns the masked L1 loss.

    All sampling (references, dropout) is keyed on (seed, step), so
    replaying a step from a checkpoint reproduces the identical loss
    and update.
    """
    torch.manual_seed(_derive_seed(seed, 13, step))
    model.train()
    h, frame_mask = model.acoustic.frame_states(
        batch.phonemes,
        batch.durations,
        batch.pitch_bins,
        batch.spk,
        batch.phoneme_mask,
    )
    t_max = h.shape[1]
    # sample every target's references up front, then encode each unique
    # reference once; targets sharing a reference share its autograd node
    ref_ids_per_target = []
    for i, utt_id in enumerate(batch.utt_ids):
        rng = np.random.default_rng([seed, 17, step, i])
        ref_ids_per_target.append(sample_references(data, utt_id, opt_cfg.n_refs, rng))
    unique_refs = sorted({r for ids in ref_ids_per_target for r in ids})
    encoded = dict(
        zip(
            unique_refs,
            model.mr.encode_many(
                [torch.from_numpy(data.items[r].mel_norm) for r in unique_refs]
            ),
        )
    )
    hf_rows = []
    for i, ref_ids in enumerate(ref_ids_per_target):
        pieces = [encoded[r] for r in ref_ids]
        boundaries = [0]
        for piece in pieces:
            boundaries.append(boundaries[-1] + piece.shape[0])
        flat = FlattenedReference(torch.cat(pieces, dim=0), boundaries)
        t_i = int(batch.frame_mask[i].sum().item())
        hf = model.mr.attend(h[i, :t_i], flat)
        hf_rows.append(
            torch.cat([hf, hf.new_zeros(t_max - t_i, hf.shape[1])], dim=0)
        )
    hf_padded = torch.stack(hf_rows)
    h = h + model.acoustic.hf_proj(hf_padded) * frame_mask.unsqueeze(-1)
    predicted = model.acoustic.decode(h, frame_mask)
    loss = masked_l1(predicted, batch.mel, frame_mask)
    if not torch.isfinite(loss):
        raise RuntimeError(
            f"non-finite loss at step {step}; batch utterances: {batch.utt_ids}"
        )
    lr = lr_schedule(step, opt_cfg.d_model, opt_cfg.warmup)
    for group in optimizer.param_groups:
        group["lr"] = lr
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    torch.nn.utils.clip_grad_norm_(model.parameters(), opt_cfg.grad_clip)
    optimizer.step()
    return float(loss.detach())


# ---------------------------------------------------------------------------
# inference helper and evaluation
# ---------------------------------------------------------------------------


def synthesize_mel(
    model: SingingModel,
    phonemes: np.ndarray,
    durations: np.ndarray,
    pitch_bins: np.ndarray,
    spk_vec: np.ndarray,
    ref_mels_norm: list[np.ndarray] | None,
) -> np.ndarray:
    """Single-utterance evaluation-mode synthesis; [T, n_mels] in [0, 1]."""
    model.eval()
    with torch.no_grad():
        h, frame_mask = model.acoustic.frame_states(
            torch.from_numpy(np.asarray(phonemes, dtype=np.int64)),
            torch.from_numpy(np.asarray(durations, dtype=np.int64)),
            torch.from_numpy(np.asarray(pitch_bins, dtype=np.int64)),
            torch.from_numpy(np.asarray(spk_vec, dtype=np.float32)),
        )
        if ref_mels_norm:
            flat = model.mr.encode_references(
                [torch.from_numpy(np.asarray(m, dtype=np.float32)) for m in ref_mels_norm]
            )
            h = h + model.acoustic.hf_proj(model.mr.attend(h, flat))
        mel = model.acoustic.decode(h, frame_mask)
    return mel.numpy().astype(np.float32)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na < 1e-12 or nb < 1e-12:
        return float("nan")
    return float(np.dot(a, b) / (na * nb))


def evaluate(
    model: SingingModel,
    data: CorpusData,
    utt_ids: list[str] | None = None,
    n_refs: int = 2,
    seed: int = 0,
    spk_backend: str = "builtin-stats",
    external: ExternalEmbeddings | None = None,
    vocode_iters: int = 30,
) -> dict[str, float]:
    """Objective metrics on an utterance set (defaults to the whole corpus).

    mel_L1: masked mean absolute error of the predicted normalized mel.
    f0_consistency: RMSE in Hz between each utterance's input contour
    and the contour re-estimated from the vocoded prediction, over
    frames voiced in both.
    spk_cosine: cosine between the frozen embedding of the vocoded
    output and the embedding of the reference set.
    """
    if utt_ids is None:
        utt_ids = sorted(data.items)
    if not utt_ids:
        raise ValueError("evaluation set is empty")
    cfg = data.feature_cfg
    l1_total = 0.0
    sq_err: list[np.ndarray] = []
    cosines = []
    for idx, utt_id in enumerate(utt_ids):
        it = data.items[utt_id]
        rng = np.random.default_rng([seed, 101, idx])
        ref_ids = sample_references(data, utt_id, n_refs, rng)
        ref_log = [data.items[r].mel_log for r in ref_ids]
        ref_norm = [data.items[r].mel_norm for r in ref_ids]
        spk_vec = fixed_embed(ref_log, spk_backend, utt_ids=ref_ids, external=external)
        predicted = synthesize_mel(
            model, it.phonemes, it.durations, it.pitch_bins, spk_vec, ref_norm
        )
        l1_total += float(np.abs(predicted - it.mel_norm).mean())
        cond = model.voc(
            torch.from_numpy(predicted), torch.from_numpy(it.pitch_bins)
        )
        wave = vocode(cond, cfg, n_iters=vocode_iters)
        f0_est = extract_f0(wave, cfg)
        t = min(len(f0_est), len(it.f0))
        both = (f0_est[:t] > 0) & (it.f0[:t] > 0)
        if both.any():
            sq_err.append((f0_est[:t][both] - it.f0[:t][both]) ** 2)
        emb_out = builtin_stats_embedding(extract_mel(wave, cfg))
        emb_ref = fixed_embed(ref_log, "builtin-stats")
        cosines.append(_cosine(emb_out, emb_ref))
    return {
        "mel_L1": l1_total / len(utt_ids),
        "f0_consistency": float(np.sqrt(np.concatenate(sq_err).mean()))
        if sq_err
        else float("nan"),
        "spk_cosine": float(np.mean(cosines)),
    }


def append_metrics(path: str | Path, step: int, metrics: dict[str, float]) -> None:
    path = Path(path)
    line = f"{step},{metrics['mel_L1']:.6f},{metrics['f0_consistency']:.6f},{metrics['spk_cosine']:.6f}\n"
    if not path.exists():
        path.write_text(",".join(METRICS_COLUMNS) + "\n" + line)
    else:
        with path.open("a") as fh:
            fh.write(line)


# ---------------------------------------------------------------------------
# the loop
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    steps_run: int
    final_step: int
    last_loss: float
    last_metrics: dict[str, float]
    stopped_early: bool


def train(
    manifest: CorpusManifest,
    run_dir: str | Path,
    model_cfg: ModelConfig,
    mr_cfg: MultiRefConfig,
    opt_cfg: OptimizerConfig,
    seed: int = 0,
    spk_backend: str = "builtin-stats",
    external: ExternalEmbeddings | None = None,
    resume: bool = False,
    log=None,
) -> TrainResult:
    """Run (or resume) training until max_steps or the early-stop target.

    Writes config.json once, checkpoints under step_<N>/, and appends
    evaluation rows to metrics.csv.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    data = CorpusData(manifest, model_cfg.pitch_bins)

    if resume:
        model, start_step, _ = load_checkpoint(run_dir)
        optimizer = load_optimizer(run_dir, start_step, model, opt_cfg)
        next_step = start_step + 1
    else:
        # seed initialization so a fresh run is a pure function of the
        # seed, independent of ambient process RNG state
        torch.manual_seed(_derive_seed(seed, 5))
        model = SingingModel(model_cfg, mr_cfg)
        optimizer = build_optimizer(model, opt_cfg)
        write_run_config(
            run_dir, model_cfg, mr_cfg, opt_cfg, manifest.config, spk_backend, seed
        )
        next_step = 1

    eval_ids = sorted(data.items)[: opt_cfg.eval_utts]
    steps_run = 0
    last_loss = float("nan")
    last_metrics: dict[str, float] = {}
    stopped_early = False
    final_step = next_step - 1

    # the step number alone decides which batch runs: epoch = step-1 //
    # batches-per-epoch. Resuming at any step therefore replays exactly
    # the schedule the uninterrupted run would have used.
    n_batches = len(make_batches(data, opt_cfg.token_budget, seed, 0))
    current_epoch = -1
    epoch_batches: list[list[str]] = []

    for step in range(next_step, opt_cfg.max_steps + 1):
        epoch, index = divmod(step - 1, n_batches)
        if epoch != current_epoch:
            epoch_batches = make_batches(data, opt_cfg.token_budget, seed, epoch)
            current_epoch = epoch
        batch = collate(data, epoch_batches[index])
        last_loss = train_step(model, optimizer, opt_cfg, data, batch, seed, step)
        steps_run += 1
        final_step = step
        if step % opt_cfg.eval_every == 0 or step == opt_cfg.max_steps:
            last_metrics = evaluate(
                model,
                data,
                eval_ids,
                n_refs=opt_cfg.n_refs,
                seed=seed,
                spk_backend=spk_backend,
                external=external,
                vocode_iters=opt_cfg.eval_vocode_iters,
            )
            append_metrics(run_dir / "metrics.csv", step, last_metrics)
            if log is not None:
                log(
                    f"step {step}: loss {last_loss:.4f} "
                    f"eval mel_L1 {last_metrics['mel_L1']:.4f} "
                    f"f0_rmse {last_metrics['f0_consistency']:.2f} "
                    f"spk_cos {last_metrics['spk_cosine']:.4f}"
                )
            if (
                opt_cfg.early_stop_l1 is not None
                and last_metrics["mel_L1"] < opt_cfg.early_stop_l1
            ):
                stopped_early = True
        if (
            step % opt_cfg.checkpoint_every == 0
            or step == opt_cfg.max_steps
            or stopped_early
        ):
            save_checkpoint(run_dir, step, model, optimizer)
        if stopped_early:
            break

    return TrainResult(steps_run, final_step, last_loss, last_metrics, stopped_early)