import numpy as np
import pytest
import torch
from PIL import Image

from surrogate.attribution import (
    AttributionError,
    AttributionMap,
    attribution_dominates,
    attribution_from_csv,
    attribution_to_csv,
    far_matrix_mask,
    fibre_interface_mask,
    ig_explain,
    overlay_image,
    save_overlay_png,
    shap_explain,
)
from surrogate.model import build_model
from surrogate.train import TrainedSurrogate

R = 32


def _surrogate(seed=0, zero=False):
    model = build_model(R, seed=seed)
    if zero:
        with torch.no_grad():
            for p in model.parameters():
                p.zero_()
    model.eval()
    return TrainedSurrogate(model=model, target="E_c", input_resolution=R,
                            label_mean=0.0, label_std=1.0)


def _disc_image(r=6.0, cy=16.0, cx=16.0):
    yy, xx = np.mgrid[0:R, 0:R]
    return (((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r)).astype(np.float32)


def _random_images(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.random((n, 1, R, R)).astype(np.float32)


class TestIntegratedGradients:
    def test_constant_model_gives_zero_map(self):
        amap = ig_explain(_surrogate(zero=True), _disc_image(), steps=16)
        assert np.all(amap.values == 0.0)
        assert amap.completeness_residual == pytest.approx(0.0)

    def test_map_matches_input_shape(self):
        amap = ig_explain(_surrogate(), _disc_image(), steps=8)
        assert amap.values.shape == (R, R)
        assert amap.method == "IG"
        assert amap.baseline == "all-matrix"

    def test_completeness_improves_with_steps(self):
        surr = _surrogate(seed=3)
        images = _random_images(5, seed=4)
        means = []
        for steps in (4, 16, 64):
            res = [ig_explain(surr, img, steps=steps).relative_residual
                   for img in images]
            means.append(float(np.mean(res)))
        assert means[0] >= means[1] >= means[2]

    def test_bad_inputs(self):
        surr = _surrogate()
        with pytest.raises(AttributionError):
            ig_explain(surr, _disc_image(), steps=0)
        with pytest.raises(AttributionError):
            ig_explain(surr, np.zeros((R, R + 1), dtype=np.float32))
        with pytest.raises(AttributionError):
            ig_explain(surr, _disc_image(), baseline=np.zeros((R // 2, R // 2)))


class TestGradientShap:
    def test_deterministic_and_identical_for_identical_inputs(self):
        surr = _surrogate(seed=1)
        bg = _random_images(16, seed=2)
        img = _disc_image()
        a = shap_explain(surr, img, bg, seed=9)
        b = shap_explain(surr, img.copy(), bg.copy(), seed=9)
        np.testing.assert_array_equal(a.values, b.values)
        assert a.method == "SHAP"

    def test_duplicate_background_does_not_change_output(self):
        surr = _surrogate(seed=1)
        bg = _random_images(16, seed=2)
        with_dup = np.concatenate([bg, bg[:3]])
        a = shap_explain(surr, _disc_image(), bg, seed=9)
        b = shap_explain(surr, _disc_image(), with_dup, seed=9)
        np.testing.assert_array_equal(a.values, b.values)

    def test_background_too_small(self):
        with pytest.raises(AttributionError, match="16"):
            shap_explain(_surrogate(), _disc_image(), _random_images(15))

    def test_constant_model_gives_zero_map(self):
        amap = shap_explain(_surrogate(zero=True), _disc_image(), _random_images(16))
        assert np.all(amap.values == 0.0)


class TestMasksAndDominance:
    def test_interface_band_contains_fibre(self):
        img = _disc_image()
        fibre = img > 0.5
        near = fibre_interface_mask(img, dilate_px=2)
        assert np.all(near[fibre])
        assert near.sum() > fibre.sum()

    def test_far_matrix_excludes_band(self):
        img = _disc_image()
        near = fibre_interface_mask(img, dilate_px=2)
        far = far_matrix_mask(img, margin_px=4)
        assert not np.any(far & near)
        assert far.any()

    def test_dominance_none_when_no_far_matrix(self):
        img = np.ones((R, R), dtype=np.float32)
        amap = AttributionMap(np.ones((R, R)), "IG", "all-matrix")
        assert attribution_dominates(img, amap) is None

    def test_dominance_detects_concentration(self):
        img = _disc_image()
        near_map = np.where(fibre_interface_mask(img, 2), 1.0, 0.0)
        far_map = np.where(far_matrix_mask(img, 4), 1.0, 0.0)
        assert attribution_dominates(img, AttributionMap(near_map, "IG", "b")) is True
        assert attribution_dominates(img, AttributionMap(far_map, "IG", "b")) is False


class TestSerializationAndOverlay:
    def test_csv_roundtrip_six_significant_digits(self):
        rng = np.random.default_rng(5)
        values = rng.normal(scale=1e-3, size=(R, R))
        amap = AttributionMap(values, "SHAP", "background set (n=16)")
        back = attribution_from_csv(attribution_to_csv(amap))
        np.testing.assert_allclose(back.values, values, rtol=1e-6)
        assert back.method == "SHAP"
        assert back.baseline == "background set (n=16)"

    def test_csv_rejects_garbage(self):
        with pytest.raises(AttributionError):
            attribution_from_csv("not,a,map\n1,2,3\n")

    def test_zero_map_preserves_grayscale(self):
        img = _disc_image()
        out = overlay_image(img, AttributionMap(np.zeros((R, R)), "IG", "all-matrix"))
        expected = np.repeat((img * 255).round().astype(np.uint8)[:, :, None], 3, axis=2)
        np.testing.assert_array_equal(out, expected)

    def test_overlay_dimensions_and_blending(self, tmp_path):
        img = _disc_image()
        values = np.zeros((R, R))
        values[0, 0] = 1.0
        values[1, 1] = -1.0
        out = overlay_image(img, AttributionMap(values, "IG", "all-matrix"))
        assert out.shape == (R, R, 3)
        assert out[0, 0, 0] > out[0, 0, 2]   # positive leans red
        assert out[1, 1, 2] > out[1, 1, 0]   # negative leans blue
        path = tmp_path / "overlay.png"
        save_overlay_png(path, img, AttributionMap(values, "IG", "all-matrix"))
        with Image.open(path) as im:
            assert im.size == (R, R)
            assert im.mode == "RGB"

    def test_shape_mismatch_rejected(self):
        with pytest.raises(AttributionError):
            overlay_image(_disc_image(), AttributionMap(np.zeros((R, R + 1)), "IG", "b"))

    def test_non_finite_values_rejected(self):
        values = np.zeros((R, R))
        values[3, 3] = np.nan
        with pytest.raises(AttributionError):
            AttributionMap(values, "IG", "all-matrix")
