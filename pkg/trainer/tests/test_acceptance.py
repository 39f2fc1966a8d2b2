"""Training-side acceptance gate: desk-scale learning, parity, and a
matched-filter baseline comparison.  Run with ``pytest -v -s``.

The desk recipe is 5 + 5 epochs on a 2,000-sample array-18 dataset with
learning rates 3e-3 / 5e-3 (config-exposed; the defaults target the full
100-epoch runs).  The inference package is driven through its public
surfaces: dataset files come from its CLI, weights go through the
container format, and comparisons run against its forward pass.
"""

import csv

import numpy as np
import pytest

from obdoa_trainer.train import (build_model, export_weights, parity_dump,
                                 train_stage)

import obdoa
from obdoa.datafile import DatasetReader
from obdoa.evaluate import extract_doas, match_and_score
from obdoa.network import SpectrumEstimate, init_block, normalize_magnitudes
from obdoa.simulate import OneBitSnapshot
from obdoa.weightfile import load_weights


def report(number, ok, detail):
    print(f"acceptance {number:2d} [{'PASS' if ok else 'FAIL'}] {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def desk_run(desk_dataset, tmp_path_factory):
    """Train the desk model once; later tests assert on the artifacts."""
    out = tmp_path_factory.mktemp("deskrun")
    model = build_model("sla18", (-60.0, 60.0, 2.0), seed=0)
    h1, digests1 = train_stage(model, 1, desk_dataset["train"],
                               desk_dataset["val"], epochs=5, lr=3e-3,
                               seed=0, log=lambda *a: None)
    h2, digests2 = train_stage(model, 2, desk_dataset["train"],
                               desk_dataset["val"], epochs=5, lr=5e-3,
                               seed=0, log=lambda *a: None)
    weights = out / "desk.obwt"
    export_weights(model, weights)
    parity = out / "parity.csv"
    n_rows = parity_dump(model, desk_dataset["val"], parity, count=100)
    return {
        "history1": h1, "history2": h2,
        "digests1": digests1, "digests2": digests2,
        "weights": weights, "parity": parity, "n_rows": n_rows,
    }


class TestSecondaryAcceptance:
    def test_10_desk_training(self, desk_run):
        h1, h2 = desk_run["history1"], desk_run["history2"]
        bce_drop = h1["val_bce"][-1] < h1["val_bce"][0]
        mse_drop = h2["val_mse"][-1] < h2["val_mse"][0]
        frozen1 = desk_run["digests1"][0] == desk_run["digests1"][1]
        frozen2 = desk_run["digests2"][0] == desk_run["digests2"][1]
        ok = bce_drop and mse_drop and frozen1 and frozen2
        report(10, ok, "desk training: stage-1 val BCE "
                       f"{h1['val_bce'][0]:.4f} -> {h1['val_bce'][-1]:.4f}, "
                       f"stage-2 val MSE {h2['val_mse'][0]:.4f} -> "
                       f"{h2['val_mse'][-1]:.4f}, frozen blocks unchanged")

    def test_11_cross_component_parity(self, desk_run, desk_dataset):
        bundle = load_weights(desk_run["weights"])
        pair = obdoa.build_dictionary(obdoa.make_geometry("sla18"),
                                      obdoa.GridSpec(-60, 60, 2))
        reader = DatasetReader(desk_dataset["val"])
        rows = list(csv.reader(open(desk_run["parity"])))[1:]
        assert desk_run["n_rows"] == 100
        worst = 0.0
        for i, row in enumerate(rows):
            vals = np.array([float(v) for v in row[1:]])
            rec = reader.record(i)
            est = obdoa.forward(OneBitSnapshot(y=rec["y"]), pair, bundle)
            worst = max(worst,
                        float(np.abs(vals[:61] - est.magnitudes).max()),
                        float(np.abs(vals[61:] - est.beta).max()))
        ok = worst < 1e-4
        report(11, ok, f"trainer dump vs inference forward on 100 samples: "
                       f"max |diff| = {worst:.2e}")

    def test_12_beats_matched_filter_baseline(self, desk_run, desk_testset_20db):
        bundle = load_weights(desk_run["weights"])
        pair = obdoa.build_dictionary(obdoa.make_geometry("sla18"),
                                      obdoa.GridSpec(-60, 60, 2))
        net_ok = base_ok = total = 0
        for rec in DatasetReader(desk_testset_20db):
            snap = OneBitSnapshot(y=rec["y"])
            est = obdoa.forward(snap, pair, bundle)
            net_ok += match_and_score(extract_doas(est, 2), rec["doas"], 0.5)[0]
            base = SpectrumEstimate(
                magnitudes=normalize_magnitudes(init_block(snap, pair)),
                beta=np.zeros(61), grid=pair.grid)
            base_ok += match_and_score(extract_doas(base, 2),
                                       rec["doas"], 0.5)[0]
            total += 1
        ok = net_ok > base_ok
        report(12, ok, f"20 dB desk test: unrolled {net_ok}/{total} vs "
                       f"matched filter {base_ok}/{total}")
