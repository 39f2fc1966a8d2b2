"""Two-stage training: spectrum refinement first, then gap regression.

Stage 1 trains only the first unrolled block against a cross-entropy
between the normalized predicted spectrum and the on-grid labels; stage 2
freezes it and trains the gap phases and head with the combined
cross-entropy + squared-gap loss.  Frozen blocks are verified by hashing
their exported tensors before and after each stage.
"""

from __future__ import annotations

import numpy as np
import torch

from .data import LABEL_EPS, make_loader
from .formats import parse_geometry, write_weights
from .model import UnrolledNet, architecture_dict


def spectrum_bce(x_re, x_im, s_norm):
    mags = torch.sqrt(x_re ** 2 + x_im ** 2 + 1e-24)
    peak = mags.max(dim=1, keepdim=True).values.clamp_min(1e-12)
    p = (mags / peak).clamp(LABEL_EPS, 1 - LABEL_EPS)
    return -(s_norm * torch.log(p) + (1 - s_norm) * torch.log1p(-p)).mean()


def gap_mse(gap_norm, beta_norm):
    return ((gap_norm - beta_norm) ** 2).mean()


def _epoch_eval(model, loader, with_gap: bool):
    model.eval()
    bce_total, mse_total, batches = 0.0, 0.0, 0
    with torch.no_grad():
        for y_re, y_im, s_norm, beta_norm in loader:
            x_re, x_im, gap_norm = model(y_re, y_im)
            bce_total += float(spectrum_bce(x_re, x_im, s_norm))
            if with_gap:
                mse_total += float(gap_mse(gap_norm, beta_norm))
            batches += 1
    bce = bce_total / max(batches, 1)
    return (bce, mse_total / max(batches, 1)) if with_gap else bce


def _run_stage(model, stage: int, train_loader, val_loader, epochs: int,
               lr: float, clip: float, log=print):
    model.set_stage(stage)
    optimizer = torch.optim.Adam(
        [p for p in model.parameters() if p.requires_grad], lr=lr)
    history = {"train": [], "val_bce": [], "val_mse": []}
    for epoch in range(1, epochs + 1):
        model.train()
        if stage == 1:
            # gap-head batch norm must not accumulate statistics while frozen
            model.gap.eval()
        running, batches = 0.0, 0
        for y_re, y_im, s_norm, beta_norm in train_loader:
            optimizer.zero_grad()
            x_re, x_im, gap_norm = model(y_re, y_im)
            loss = spectrum_bce(x_re, x_im, s_norm)
            if stage == 2:
                loss = loss + gap_mse(gap_norm, beta_norm)
            loss.backward()
            torch.nn.utils.clip_grad_norm_(
                [p for p in model.parameters() if p.requires_grad], clip)
            optimizer.step()
            running += float(loss.detach())
            batches += 1
        val_bce, val_mse = _epoch_eval(model, val_loader, with_gap=True)
        history["train"].append(running / max(batches, 1))
        history["val_bce"].append(val_bce)
        history["val_mse"].append(val_mse)
        log(f"stage {stage} epoch {epoch:3d}: "
            f"train {history['train'][-1]:.5f}  val bce {val_bce:.5f}"
            + (f"  val mse {val_mse:.5f}" if stage == 2 else ""))
    return history


def train_stage(model: UnrolledNet, stage: int, train_path, val_path,
                epochs: int, batch_size: int = 64, lr: float = 1e-3,
                clip: float = 5.0, seed: int = 0, log=print):
    """Train one stage; returns (history, frozen-digests before/after)."""
    torch.manual_seed(seed)
    train_loader = make_loader(train_path, batch_size, shuffle=True, seed=seed)
    val_loader = make_loader(val_path, batch_size, shuffle=False)
    before = model.frozen_block_digest(stage)
    history = _run_stage(model, stage, train_loader, val_loader, epochs, lr,
                         clip, log)
    after = model.frozen_block_digest(stage)
    return history, (before, after)


def build_model(geometry: str, grid: tuple[float, float, float], k1: int = 4,
                k2: int = 2, seed: int = 0) -> UnrolledNet:
    torch.manual_seed(seed)
    arch = architecture_dict(grid, k1, k2)
    return UnrolledNet(arch, parse_geometry(geometry))


def save_checkpoint(model: UnrolledNet, geometry: str, path, history=None):
    torch.save({
        "arch": model.arch,
        "geometry": geometry,
        "state_dict": model.state_dict(),
        "history": history or {},
    }, path)


def load_checkpoint(path) -> tuple[UnrolledNet, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    model = UnrolledNet(payload["arch"], parse_geometry(payload["geometry"]))
    model.load_state_dict(payload["state_dict"])
    return model, payload


def export_weights(model: UnrolledNet, path):
    write_weights(path, model.arch, model.export_tensors())


def parity_dump(model: UnrolledNet, dataset_path, out_path, count: int = 100):
    """Inference-mode outputs for the first ``count`` samples, as CSV.

    Rows carry the max-normalized spectrum magnitudes then the gaps in
    degrees, matching what the inference engine reports for the same
    snapshots and weights.  The model weights are rounded through float32
    first so the dump reflects the exported container exactly.
    """
    loader = make_loader(dataset_path, batch_size=32, shuffle=False)
    model.quantize_weights()
    model.eval()
    rows = []
    with torch.no_grad():
        for y_re, y_im, _, _ in loader:
            x_re, x_im, gap_norm = model(y_re, y_im)
            mags = torch.sqrt(x_re ** 2 + x_im ** 2)
            peak = mags.max(dim=1, keepdim=True).values.clamp_min(1e-30)
            rows.extend(np.hstack([
                (mags / peak).numpy(),
                gap_norm.numpy() * model.half_step,
            ]))
            if len(rows) >= count:
                break
    rows = rows[:count]
    m = rows[0].shape[0] // 2
    header = ("sample," + ",".join(f"mag_{i}" for i in range(m))
              + "," + ",".join(f"beta_{i}" for i in range(m)))
    with open(out_path, "w") as fh:
        fh.write(header + "\n")
        for i, row in enumerate(rows):
            fh.write(str(i) + "," + ",".join(f"{v:.9g}" for v in row) + "\n")
    return len(rows)
