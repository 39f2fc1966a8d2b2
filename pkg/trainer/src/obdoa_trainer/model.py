"""Trainable unrolled network, mathematically matched to the inference side.

Complex quantities are carried as separate real/imaginary tensors so the
convolutions and autograd stay in real arithmetic.  All learnable pieces
map one-to-one onto the weight-container tensor names, and the default
initialization zeroes the last layer of every stack so an untrained model
is the identity on the matched-filter spectrum with zero gap output.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

BN_EPS = 1e-5

DEFAULT_CONV_SPEC = ((4, 16, 3), (16, 16, 3), (16, 2, 3))
DEFAULT_FC_WIDTHS = (256, 256, 128)


def architecture_dict(grid: tuple[float, float, float], k1: int, k2: int,
                      conv_spec=DEFAULT_CONV_SPEC, fc_widths=None) -> dict:
    fov_min, fov_max, step = grid
    m = int(math.floor((fov_max - fov_min) / step + 1e-9)) + 1
    fc = tuple(fc_widths) if fc_widths else DEFAULT_FC_WIDTHS + (m,)
    return {
        "k1": k1,
        "k2": k2,
        "conv_spec": [list(layer) for layer in conv_spec],
        "fc_spec": list(fc),
        "grid": {"fov_min_deg": fov_min, "fov_max_deg": fov_max,
                 "step_deg": step},
    }


def steering_matrix(positions: np.ndarray, grid_points: np.ndarray) -> np.ndarray:
    theta = np.radians(grid_points)[None, :]
    return np.exp(1j * np.pi * positions[:, None] * np.sin(theta))


def mills_ratio(t: torch.Tensor) -> torch.Tensor:
    """phi(t)/Phi(t) via the scaled complementary error function.

    Only the positive side is clamped: beyond 30 the ratio is below
    1e-195 anyway, and the clamp keeps the backward pass free of inf/inf
    artifacts from the erfcx overflow region.  The negative side is
    stable for any argument (erfcx of a large positive number).
    """
    t = t.clamp(max=30.0)
    return math.sqrt(2.0 / math.pi) / torch.special.erfcx(-t / math.sqrt(2.0))


class ConvPhase(nn.Module):
    """Spectrum refinement: conv stack over 4 real channels plus residual."""

    def __init__(self, conv_spec):
        super().__init__()
        self.convs = nn.ModuleList()
        self.acts = nn.ModuleList()
        for cin, cout, k in conv_spec:
            self.convs.append(nn.Conv1d(cin, cout, k, padding=(k - 1) // 2))
            self.acts.append(nn.PReLU(cout))
        last = self.convs[-1]
        nn.init.zeros_(last.weight)
        nn.init.zeros_(last.bias)

    def forward(self, x_re, x_im, f_re, f_im):
        h = torch.stack([x_re, x_im, f_re, f_im], dim=1)
        for conv, act in zip(self.convs, self.acts):
            h = act(conv(h))
        return x_re + h[:, 0], x_im + h[:, 1]


class GapHead(nn.Module):
    """Four affine + batch-norm + tanh layers from |x| back to the grid."""

    def __init__(self, m: int, fc_spec):
        super().__init__()
        widths = (m,) + tuple(fc_spec)
        self.fcs = nn.ModuleList()
        self.bns = nn.ModuleList()
        for cin, cout in zip(widths, widths[1:]):
            self.fcs.append(nn.Linear(cin, cout))
            self.bns.append(nn.BatchNorm1d(cout, eps=BN_EPS))
        nn.init.zeros_(self.fcs[-1].weight)
        nn.init.zeros_(self.fcs[-1].bias)

    def forward(self, mags):
        h = mags
        for fc, bn in zip(self.fcs, self.bns):
            h = torch.tanh(bn(fc(h)))
        return h  # in [-1, 1]; scaled by step/2 only at export/inference


class UnrolledNet(nn.Module):
    """Initialization block, K1 refinement phases, K2 gap phases.

    The whole model runs in float64: weights are exchanged as float32
    through the container anyway, and double precision keeps this forward
    numerically aligned with the inference engine, whose gap head can
    amplify input noise through small batch-norm variances.
    """

    def __init__(self, arch: dict, positions: np.ndarray):
        super().__init__()
        self.arch = arch
        grid = arch["grid"]
        m = int(math.floor((grid["fov_max_deg"] - grid["fov_min_deg"])
                           / grid["step_deg"] + 1e-9)) + 1
        if arch["fc_spec"][-1] != m:
            raise ValueError(
                f"gap head width {arch['fc_spec'][-1]} does not match the "
                f"{m}-point grid")
        points = grid["fov_min_deg"] + grid["step_deg"] * np.arange(m)
        a = steering_matrix(np.asarray(positions, dtype=float), points)
        self.register_buffer("a_re", torch.tensor(a.real, dtype=torch.float64))
        self.register_buffer("a_im", torch.tensor(a.imag, dtype=torch.float64))
        conv_spec = [tuple(layer) for layer in arch["conv_spec"]]
        self.block1 = nn.ModuleList(ConvPhase(conv_spec)
                                    for _ in range(arch["k1"]))
        self.block2 = nn.ModuleList(ConvPhase(conv_spec)
                                    for _ in range(arch["k2"]))
        self.gap = GapHead(m, arch["fc_spec"])
        self.double()

    def quantize_weights(self):
        """Round every learnable tensor through float32, in place.

        Run before a parity dump so the dump reflects exactly the numbers
        an inference engine will read back from the exported container.
        """
        with torch.no_grad():
            for p in self.parameters():
                p.copy_(p.float().double())
            for name, buf in self.named_buffers():
                if not name.startswith("a_"):
                    buf.copy_(buf.float().double())

    @property
    def half_step(self) -> float:
        return self.arch["grid"]["step_deg"] / 2

    def _adjoint(self, u_re, u_im):
        # A^H u for batched (B, N) vectors
        return (u_re @ self.a_re + u_im @ self.a_im,
                u_im @ self.a_re - u_re @ self.a_im)

    def init_block(self, y_re, y_im):
        return self._adjoint(y_re, y_im)

    def mm_feature(self, y_re, y_im, x_re, x_im):
        z_re = x_re @ self.a_re.T - x_im @ self.a_im.T
        z_im = x_im @ self.a_re.T + x_re @ self.a_im.T
        d_re = y_re * z_re
        d_im = y_im * z_im
        vt_re = d_re + mills_ratio(d_re)
        vt_im = d_im + mills_ratio(d_im)
        return self._adjoint(y_re * vt_re, y_im * vt_im)

    def forward(self, y_re, y_im):
        x_re, x_im = self.init_block(y_re, y_im)
        for phase in self.block1:
            f_re, f_im = self.mm_feature(y_re, y_im, x_re, x_im)
            x_re, x_im = phase(x_re, x_im, f_re, f_im)
        gap_norm = torch.zeros_like(x_re)
        for phase in self.block2:
            f_re, f_im = self.mm_feature(y_re, y_im, x_re, x_im)
            x_re, x_im = phase(x_re, x_im, f_re, f_im)
            gap_norm = self.gap(torch.sqrt(x_re ** 2 + x_im ** 2 + 1e-24))
        return x_re, x_im, gap_norm

    def export_tensors(self) -> dict[str, np.ndarray]:
        """Weight-container tensors, keyed by their canonical names."""
        out: dict[str, np.ndarray] = {}

        def grab(tensor):
            return tensor.detach().cpu().numpy().astype(np.float32)

        for block_name, phases in (("block1", self.block1),
                                   ("block2", self.block2)):
            for p, phase in enumerate(phases):
                for l, (conv, act) in enumerate(zip(phase.convs, phase.acts)):
                    base = f"{block_name}.phase{p}.conv{l}"
                    out[f"{base}.weight"] = grab(conv.weight)
                    out[f"{base}.bias"] = grab(conv.bias)
                    out[f"{base}.prelu"] = grab(act.weight)
        for l, (fc, bn) in enumerate(zip(self.gap.fcs, self.gap.bns)):
            out[f"gap.fc{l}.weight"] = grab(fc.weight)
            out[f"gap.fc{l}.bias"] = grab(fc.bias)
            out[f"gap.bn{l}.scale"] = grab(bn.weight)
            out[f"gap.bn{l}.shift"] = grab(bn.bias)
            out[f"gap.bn{l}.mean"] = grab(bn.running_mean)
            out[f"gap.bn{l}.var"] = grab(bn.running_var)
        return out

    def stage_parameters(self, stage: int):
        """Trainable parameters for a stage (1: block1 convs, 2: the rest)."""
        if stage == 1:
            return [p for phase in self.block1 for p in phase.parameters()]
        params = [p for phase in self.block2 for p in phase.parameters()]
        params.extend(self.gap.parameters())
        return params

    def set_stage(self, stage: int):
        """Freeze the out-of-stage blocks (gradients and batch-norm stats)."""
        for p in self.parameters():
            p.requires_grad_(False)
        for p in self.stage_parameters(stage):
            p.requires_grad_(True)

    def frozen_block_digest(self, stage: int) -> str:
        """SHA-256 over the parameter blocks that stage must not touch."""
        import hashlib

        prefix = ("block2.", "gap.") if stage == 1 else ("block1.",)
        tensors = self.export_tensors()
        digest = hashlib.sha256()
        for name in sorted(tensors):
            if name.startswith(prefix):
                digest.update(name.encode())
                digest.update(tensors[name].tobytes())
        return digest.hexdigest()
