"""Figure rendering for benchmark reports and spectra.

Companion PNGs to the CSV outputs; everything here draws from already
computed results and never touches the estimators.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluate import EvalReport
from .network import SpectrumEstimate
from .simulate import SourceScene


def _new_axes(xlabel: str, ylabel: str):
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=150)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.4)
    return fig, ax


def render_benchmark_figures(report: EvalReport, out_dir) -> list[str]:
    """Detection-rate and RMSE curves vs SNR; returns the written paths."""
    import pathlib

    out = pathlib.Path(out_dir)
    snr = [row["snr_db"] for row in report.rows]
    written = []

    fig, ax = _new_axes("input SNR [dB]", "detection rate")
    ax.plot(snr, [row["detection_rate"] for row in report.rows],
            "o-", label=report.method)
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    path = out / "detection_rate.png"
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    written.append(str(path))

    with_rmse = [row for row in report.rows if row["rmse_deg"] is not None]
    fig, ax = _new_axes("input SNR [dB]", "RMSE [deg]")
    if with_rmse:
        ax.semilogy([row["snr_db"] for row in with_rmse],
                    [row["rmse_deg"] for row in with_rmse],
                    "s-", label=report.method)
        ax.legend()
    else:
        ax.text(0.5, 0.5, "no successful trials", ha="center", va="center",
                transform=ax.transAxes)
    path = out / "rmse.png"
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    written.append(str(path))
    return written


def render_spectrum_figure(est: SpectrumEstimate, truth: SourceScene | None,
                           path) -> str:
    """Spectrum magnitudes with estimated and (if known) true DOA markers."""
    fig, ax = _new_axes("angle [deg]", "normalized magnitude")
    points = est.grid.points()
    ax.plot(points, est.magnitudes, "-", lw=1.2, label="spectrum")
    if truth is not None:
        for i, doa in enumerate(truth.doas):
            ax.axvline(doa, color="tab:green", ls="--", lw=1.0,
                       label="true DOA" if i == 0 else None)
    if est.doas:
        mags = np.interp(est.doas, points, est.magnitudes)
        ax.plot(est.doas, mags, "rv", ms=8, label="estimate")
    ax.set_ylim(-0.02, 1.05)
    ax.legend(loc="upper right")
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return str(path)
