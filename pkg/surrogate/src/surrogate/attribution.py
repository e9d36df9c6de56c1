"""Feature attribution for trained surrogates: integrated gradients and
a gradient-based SHAP estimator, plus mask utilities and overlays.

Attributions are computed on the model's standardized output scale; the
completeness identity and every dominance comparison are scale-free, so
nothing downstream depends on the label units.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
import torch
from scipy import ndimage

from .train import TrainedSurrogate


class AttributionError(ValueError):
    """Attribution could not be computed (bad shapes, non-finite grads)."""


@dataclass
class AttributionMap:
    """Per-pixel signed attributions aligned with one input image.

    completeness_residual and prediction_delta are populated by the IG
    path (the Riemann sum should recover f(x) - f(baseline); the residual
    is the absolute gap). They are None for SHAP.
    """

    values: np.ndarray
    method: str
    baseline: str
    completeness_residual: float | None = None
    prediction_delta: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise AttributionError("attribution values must be a 2-d array")
        if not np.isfinite(self.values).all():
            raise AttributionError("attribution values must be finite")

    @property
    def relative_residual(self) -> float | None:
        if self.completeness_residual is None:
            return None
        return self.completeness_residual / max(abs(self.prediction_delta), 1e-30)


def _as_image(arr) -> np.ndarray:
    a = np.asarray(arr, dtype=np.float32)
    if a.ndim == 3 and a.shape[0] == 1:
        a = a[0]
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise AttributionError(f"expected a square grayscale image, got shape {a.shape}")
    return a


def _batched_gradients(model, points: torch.Tensor, chunk: int = 64) -> torch.Tensor:
    grads = []
    for i in range(0, len(points), chunk):
        part = points[i:i + chunk].clone().requires_grad_(True)
        out = model(part)[:, 0].sum()
        grads.append(torch.autograd.grad(out, part)[0].detach())
    g = torch.cat(grads)
    if not torch.isfinite(g).all():
        raise AttributionError("non-finite gradients encountered")
    return g


def ig_explain(surr: TrainedSurrogate, image, baseline=None, steps: int = 128) -> AttributionMap:
    """Integrated gradients along the straight path from a baseline.

    The default baseline is the all-matrix (black) image: the physically
    meaningful "no fibres" reference. Gradients are averaged at the
    midpoints of `steps` equal path segments and multiplied by the input
    difference, so the attributions sum to f(image) - f(baseline) up to
    the reported completeness residual.
    """
    if steps < 1:
        raise AttributionError("steps must be >= 1")
    x = _as_image(image)
    b = np.zeros_like(x) if baseline is None else _as_image(baseline)
    baseline_name = "all-matrix" if baseline is None else "custom"
    if b.shape != x.shape:
        raise AttributionError("baseline shape must match the image")
    surr.model.eval()
    xt = torch.from_numpy(x)[None, None]
    bt = torch.from_numpy(b)[None, None]
    alphas = (torch.arange(steps, dtype=torch.float32) + 0.5) / steps
    points = bt + alphas[:, None, None, None] * (xt - bt)
    mean_grad = _batched_gradients(surr.model, points).mean(dim=0)[0]
    values = ((xt - bt)[0, 0] * mean_grad).numpy().astype(float)
    with torch.no_grad():
        delta = float(surr.model(xt)[0, 0] - surr.model(bt)[0, 0])
    return AttributionMap(values=values, method="IG", baseline=baseline_name,
                          completeness_residual=abs(float(values.sum()) - delta),
                          prediction_delta=delta)


def shap_explain(surr: TrainedSurrogate, image, background, seed: int = 0,
                 samples_per_background: int = 8) -> AttributionMap:
    """Gradient SHAP: expected gradients over a background distribution.

    For each distinct background image, gradients are sampled at uniform
    random points on the straight path from that background to the input
    and weighted by the input difference. The background is treated as a
    set: duplicates are removed (by exact pixel equality) before
    sampling, so repeating an image does not reweight it. Deterministic
    for a fixed seed.
    """
    x = _as_image(image)
    bg = np.asarray(background, dtype=np.float32)
    if bg.ndim == 4 and bg.shape[1] == 1:
        bg = bg[:, 0]
    if bg.ndim != 3 or bg.shape[1:] != x.shape:
        raise AttributionError(f"background must be (n, {x.shape[0]}, {x.shape[1]})")
    if len(bg) < 16:
        raise AttributionError(f"need a background of at least 16 images, got {len(bg)}")
    uniq = np.unique(bg.reshape(len(bg), -1), axis=0).reshape(-1, *x.shape)
    surr.model.eval()
    rng = np.random.default_rng(seed)
    xt = torch.from_numpy(x)[None, None]
    points, diffs = [], []
    for b in uniq:
        bt = torch.from_numpy(b)[None, None]
        alphas = torch.from_numpy(
            rng.random(samples_per_background).astype(np.float32))
        points.append(bt + alphas[:, None, None, None] * (xt - bt))
        diffs.append((xt - bt).expand(samples_per_background, -1, -1, -1))
    grads = _batched_gradients(surr.model, torch.cat(points))
    values = (torch.cat(diffs) * grads).mean(dim=0)[0].numpy().astype(float)
    return AttributionMap(values=values, method="SHAP",
                          baseline=f"background set (n={len(uniq)})")


def fibre_interface_mask(image, dilate_px: int = 2) -> np.ndarray:
    """Fibre pixels plus a dilated interface band around them."""
    x = _as_image(image)
    fibre = x > 0.5
    return ndimage.binary_dilation(fibre, iterations=dilate_px)


def far_matrix_mask(image, margin_px: int = 4) -> np.ndarray:
    """Matrix pixels at least margin_px (taxicab) away from any fibre."""
    x = _as_image(image)
    fibre = x > 0.5
    return ~ndimage.binary_dilation(fibre, iterations=margin_px)


def attribution_dominates(image, amap: AttributionMap,
                          near_px: int = 2, far_px: int = 4) -> bool | None:
    """Whether mean |attribution| near fibres beats the far matrix.

    Returns None when the far-matrix region is empty (dense packings at
    coarse resolution), since the comparison is then undefined.
    """
    near = fibre_interface_mask(image, near_px)
    far = far_matrix_mask(image, far_px)
    if not far.any() or not near.any():
        return None
    mag = np.abs(amap.values)
    return float(mag[near].mean()) >= float(mag[far].mean())


def attribution_to_csv(amap: AttributionMap) -> str:
    """Serialize a map with its metadata; inverse of attribution_from_csv."""
    buf = io.StringIO()
    h, w = amap.values.shape
    buf.write("method,baseline,height,width\n")
    buf.write(f"{amap.method},{amap.baseline},{h},{w}\n")
    for row in amap.values:
        buf.write(",".join(f"{v:.9g}" for v in row) + "\n")
    return buf.getvalue()


def attribution_from_csv(text: str) -> AttributionMap:
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) < 3 or rows[0] != ["method", "baseline", "height", "width"]:
        raise AttributionError("not an attribution CSV")
    method, baseline, h, w = rows[1][0], rows[1][1], int(rows[1][2]), int(rows[1][3])
    values = np.array([[float(v) for v in row] for row in rows[2:]], dtype=float)
    if values.shape != (h, w):
        raise AttributionError(f"expected {h}x{w} values, got {values.shape}")
    return AttributionMap(values=values, method=method, baseline=baseline)


def overlay_image(image, amap: AttributionMap) -> np.ndarray:
    """Blend signed attributions over the grayscale image.

    Positive attributions blend towards red, negative towards blue, with
    opacity proportional to |attribution| / max |attribution| (a
    diverging colormap centred at zero). A zero map returns the plain
    grayscale image unchanged. Output is (h, w, 3) uint8 with the same
    spatial dimensions as the input.
    """
    x = _as_image(image)
    if amap.values.shape != x.shape:
        raise AttributionError("attribution shape must match the image")
    gray = np.repeat((x.astype(float) * 255.0)[:, :, None], 3, axis=2)
    peak = np.abs(amap.values).max()
    if peak == 0.0:
        return np.round(gray).astype(np.uint8)
    a = amap.values / peak
    alpha = np.abs(a)[:, :, None]
    color = np.zeros_like(gray)
    pos = a > 0
    color[pos] = (220.0, 40.0, 40.0)
    color[~pos] = (40.0, 60.0, 220.0)
    out = gray * (1.0 - alpha) + color * alpha
    return np.round(out).astype(np.uint8)


def save_overlay_png(path, image, amap: AttributionMap) -> None:
    from PIL import Image

    Image.fromarray(overlay_image(image, amap), mode="RGB").save(path, format="PNG")
