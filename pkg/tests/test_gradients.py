"""Finite-difference validation of every trainable parameter's gradient."""

import pytest
import torch

from singsynth.acoustic import AcousticModel, ModelConfig, reconstruction_loss
from singsynth.speakers import MultiRefConfig, MultiRefEncoder

torch.set_num_threads(1)

FD_STEP = 1e-5
MAX_REL_ERR = 1e-4


def finite_difference_check(model, loss_fn):
    """Central differences against autograd, double precision.

    Returns the worst relative error over every parameter entry with a
    meaningful denominator; tiny gradients are compared absolutely.
    """
    model.double()
    loss = loss_fn()
    model.zero_grad()
    loss.backward()
    worst = 0.0
    for name, param in model.named_parameters():
        grad = param.grad.detach().clone()
        flat = param.data.view(-1)
        numeric = torch.zeros_like(grad).view(-1)
        for i in range(flat.numel()):
            original = flat[i].item()
            flat[i] = original + FD_STEP
            up = loss_fn().item()
            flat[i] = original - FD_STEP
            down = loss_fn().item()
            flat[i] = original
            numeric[i] = (up - down) / (2 * FD_STEP)
        numeric = numeric.view_as(grad)
        scale = torch.maximum(
            grad.abs() + numeric.abs(), torch.full_like(grad, 1e-3)
        )
        rel = ((grad - numeric).abs() / scale).max().item()
        assert rel < MAX_REL_ERR, f"{name}: relative error {rel:.3e}"
        worst = max(worst, rel)
    return worst


def acoustic_fd_case():
    """A tiny but complete acoustic model plus a loss closure over it."""
    torch.manual_seed(0)
    cfg = ModelConfig(
        n_phonemes=3,
        d_model=8,
        n_heads=2,
        encoder_blocks=1,
        decoder_blocks=1,
        ffn_filter=12,
        ffn_kernel=3,
        n_mels=5,
        pitch_bins=4,
        dropout=0.0,
        spk_dim=4,
        hf_dim=4,
        max_frames=16,
    )
    model = AcousticModel(cfg)
    model.eval()
    phonemes = torch.tensor([0, 2, 1])
    durations = torch.tensor([2, 1, 3])
    pitch = torch.tensor([0, 1, 2, 3, 3, 1])
    spk = torch.randn(4, dtype=torch.float64)
    hf = torch.randn(6, 4, dtype=torch.float64)
    target = torch.rand(6, 5, dtype=torch.float64)

    def loss_fn():
        predicted = model(phonemes, durations, pitch, spk, hf_embeddings=hf)
        return reconstruction_loss(predicted, target)

    return model, loss_fn


def multiref_fd_case():
    """A tiny reference encoder plus attention, with a loss closure."""
    torch.manual_seed(1)
    cfg = MultiRefConfig(
        n_mels=4,
        conv_filter=5,
        lstm_cells=3,
        lstm_layers=1,
        d_query=4,
        d_model=4,
        heads=2,
    )
    enc = MultiRefEncoder(cfg)
    enc.eval()
    refs = [
        torch.rand(7, 4, dtype=torch.float64),
        torch.rand(5, 4, dtype=torch.float64),
    ]
    h = torch.randn(3, 4, dtype=torch.float64)
    target = torch.rand(3, 4, dtype=torch.float64)

    def loss_fn():
        out = enc(h, refs)
        return (out - target).abs().mean()

    return enc, loss_fn


class TestAcousticGradients:
    def test_all_parameters(self):
        model, loss_fn = acoustic_fd_case()
        worst = finite_difference_check(model, loss_fn)
        assert worst < MAX_REL_ERR


class TestMultiRefGradients:
    def test_encoder_and_attention(self):
        enc, loss_fn = multiref_fd_case()
        worst = finite_difference_check(enc, loss_fn)
        assert worst < MAX_REL_ERR
