"""
Training until the corpus is memorized
======================================

Fits the toy-profile model to the eight-utterance corpus from demo 01,
stopping once the evaluation mel error crosses the memorization
threshold (about half a minute on one CPU core). The resulting run
directory feeds demos 06 and 07.
"""

import time
from pathlib import Path

from singsynth import ModelConfig, MultiRefConfig, OptimizerConfig, train
from singsynth.corpus import load_manifest

out_root = Path("demo_output")
manifest = load_manifest(out_root / "corpus")
run_dir = out_root / "overfit_run"

model_cfg = ModelConfig.toy_profile(len(manifest.phoneme_inventory))
mr_cfg = MultiRefConfig.toy_profile(d_query=model_cfg.d_model)
opt_cfg = OptimizerConfig(
    d_model=model_cfg.d_model,
    warmup=800,
    max_steps=5000,
    token_budget=2000,
    eval_every=250,
    checkpoint_every=1000,
    eval_utts=8,
    eval_vocode_iters=2,
    early_stop_l1=0.05,
)

start = time.perf_counter()
result = train(manifest, run_dir, model_cfg, mr_cfg, opt_cfg, seed=0, log=print)
elapsed = time.perf_counter() - start

print(
    f"\nstopped at step {result.final_step} after {elapsed:.0f} s "
    f"(early stop: {result.stopped_early})"
)
print(f"final masked mel L1: {result.last_metrics['mel_L1']:.4f}")
print(f"f0 consistency:      {result.last_metrics['f0_consistency']:.2f} Hz")
print(f"checkpoints under:   {run_dir}")
print(f"metrics trail:       {run_dir / 'metrics.csv'}")
