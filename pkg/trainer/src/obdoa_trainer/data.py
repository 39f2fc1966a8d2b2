"""Torch dataset over the labeled snapshot files."""

from __future__ import annotations

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset as TorchDataset

from .formats import Dataset

LABEL_EPS = 1e-7  # shared clamp for spectra entering the cross-entropy


def normalize_labels(s_star: np.ndarray) -> np.ndarray:
    peak = s_star.max()
    s = s_star / peak if peak > 0 else s_star.copy()
    return np.clip(s, LABEL_EPS, 1 - LABEL_EPS)


class SnapshotDataset(TorchDataset):
    """Yields (y_re, y_im, s_norm, beta_norm) float64 tensors.

    Magnitude labels are max-normalized and clamped just like the
    predicted spectra; gap labels are scaled by half a grid interval so
    they live in [-1, 1] against the pre-scaling tanh output.
    """

    def __init__(self, path):
        self.file = Dataset(path)
        self.half_step = self.file.step / 2

    def __len__(self):
        return len(self.file)

    def __getitem__(self, i):
        rec = self.file.records[i]
        y = rec["y"].astype(np.float64)
        s_norm = normalize_labels(np.asarray(rec["s_star"], dtype=np.float64))
        beta_norm = np.asarray(rec["beta_star"], dtype=np.float64) / self.half_step
        return (torch.from_numpy(y[:, 0].copy()),
                torch.from_numpy(y[:, 1].copy()),
                torch.from_numpy(s_norm),
                torch.from_numpy(beta_norm))


def make_loader(path, batch_size: int, shuffle: bool, seed: int = 0):
    ds = SnapshotDataset(path)
    generator = torch.Generator()
    generator.manual_seed(seed)
    return DataLoader(ds, batch_size=batch_size, shuffle=shuffle,
                      generator=generator, num_workers=0)
