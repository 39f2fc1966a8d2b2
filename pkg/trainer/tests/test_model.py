import numpy as np
import pytest
import torch

from obdoa_trainer.formats import parse_geometry
from obdoa_trainer.model import UnrolledNet, architecture_dict, mills_ratio
from obdoa_trainer.train import build_model, export_weights

# shape validation and the forward contract are checked against the
# inference package, which is the consumer of everything exported here
from obdoa.weightfile import load_weights


@pytest.fixture(scope="module")
def model():
    return build_model("sla18", (-60.0, 60.0, 2.0), seed=0)


class TestGeometryParsing:
    def test_presets(self):
        assert parse_geometry("sla10").tolist() == [0, 3, 4, 5, 6, 7, 11, 16, 18, 19]
        assert parse_geometry("ula:4").tolist() == [0, 1, 2, 3]
        assert parse_geometry("0,2,5.5").tolist() == [0, 2, 5.5]


class TestMills:
    def test_reference_values(self):
        t = torch.tensor([0.0, -30.0], dtype=torch.float64)
        vals = mills_ratio(t)
        assert vals[0].item() == pytest.approx(0.7978845608028654, abs=1e-12)
        assert vals[1].item() == pytest.approx(30.033259667433677, abs=1e-8)

    def test_no_negative_clamp(self):
        val = mills_ratio(torch.tensor([-500.0], dtype=torch.float64))
        assert val.item() == pytest.approx(500.0, rel=1e-4)

    def test_gradient_finite_everywhere(self):
        t = torch.tensor([-300.0, -5.0, 0.0, 5.0, 50.0], dtype=torch.float64,
                         requires_grad=True)
        mills_ratio(t).sum().backward()
        assert torch.all(torch.isfinite(t.grad))


class TestExportSchema:
    def test_loads_in_inference_package(self, model, tmp_path):
        path = tmp_path / "w.obwt"
        export_weights(model, path)
        bundle = load_weights(path)
        assert len(bundle.tensors) == (4 + 2) * 3 * 3 + 4 * 6

    def test_byte_identical_reexport(self, model, tmp_path):
        export_weights(model, tmp_path / "a.obwt")
        export_weights(model, tmp_path / "b.obwt")
        assert (tmp_path / "a.obwt").read_bytes() == (tmp_path / "b.obwt").read_bytes()

    def test_sidecar_matches_arch(self, model, tmp_path):
        export_weights(model, tmp_path / "w.obwt")
        import json
        sidecar = json.loads((tmp_path / "w.obwt.json").read_text())
        assert sidecar == model.arch

    def test_quantize_is_idempotent(self, model):
        model.quantize_weights()
        before = model.export_tensors()
        model.quantize_weights()
        after = model.export_tensors()
        for name in before:
            np.testing.assert_array_equal(before[name], after[name])


class TestFreshModelBehavior:
    def test_zero_tail_init_gives_identity_phases(self, model):
        # untrained model: phases pass the spectrum through, gaps are zero
        model.eval()
        y_re = torch.ones(2, 18, dtype=torch.float64)
        y_im = torch.ones(2, 18, dtype=torch.float64)
        with torch.no_grad():
            x_re, x_im, gap = model(y_re, y_im)
            init_re, init_im = model.init_block(y_re, y_im)
        assert torch.equal(gap, torch.zeros_like(gap))
        np.testing.assert_allclose(x_re.numpy(), init_re.numpy(), atol=1e-12)
        np.testing.assert_allclose(x_im.numpy(), init_im.numpy(), atol=1e-12)

    def test_stage_parameter_split(self, model):
        all_params = {id(p) for p in model.parameters()}
        s1 = {id(p) for p in model.stage_parameters(1)}
        s2 = {id(p) for p in model.stage_parameters(2)}
        assert s1 | s2 == all_params
        assert not s1 & s2

    def test_rejects_mismatched_grid(self):
        arch = architecture_dict((-60.0, 60.0, 2.0), 1, 1,
                                 fc_widths=(64, 64, 64, 60))
        with pytest.raises(ValueError):
            UnrolledNet(arch, parse_geometry("sla18"))
