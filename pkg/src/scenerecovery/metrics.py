"""Quantitative evaluation: PSNR and SSIM against a reference, a
no-reference naturalness score, and mean-plus-std reporting for a
directory of image pairs. Everything is computed on the RGB channels.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.signal import convolve2d
from scipy.special import gamma as gamma_fn

from .errors import ModelMissing, PairMismatch, ShapeMismatch, TooSmall
from .imaging import load_image

__all__ = [
    "psnr",
    "ssim",
    "NiqeModel",
    "load_niqe_model",
    "fit_niqe_model",
    "save_niqe_model",
    "niqe",
    "MetricReport",
    "evaluate_split",
]

PSNR_CAP = 99.0


def psnr(a: np.ndarray, b: np.ndarray, cap: float = PSNR_CAP) -> float:
    """10*log10(1/MSE) over all RGB elements, capped so aggregates stay finite."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse <= 0.0:
        return cap
    return min(10.0 * math.log10(1.0 / mse), cap)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(
    a: np.ndarray,
    b: np.ndarray,
    window: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
) -> float:
    """Single-scale structural similarity with a Gaussian window.

    Computed per RGB channel on the valid (fully covered) region and
    averaged; dynamic range is 1.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    if min(a.shape[0], a.shape[1]) < window:
        raise TooSmall(f"need min dimension >= {window}, got {a.shape[:2]}")
    kern = _gaussian_window(window, sigma)
    c1 = (k1 * 1.0) ** 2
    c2 = (k2 * 1.0) ** 2
    maps = []
    for c in range(a.shape[2]):
        x = a[:, :, c]
        y = b[:, :, c]
        mu_x = convolve2d(x, kern, mode="valid")
        mu_y = convolve2d(y, kern, mode="valid")
        xx = convolve2d(x * x, kern, mode="valid")
        yy = convolve2d(y * y, kern, mode="valid")
        xy = convolve2d(x * y, kern, mode="valid")
        var_x = xx - mu_x * mu_x
        var_y = yy - mu_y * mu_y
        cov = xy - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        maps.append(num / den)
    return float(np.mean(maps))


# --- no-reference naturalness -------------------------------------------------


@dataclass(frozen=True)
class NiqeModel:
    """Multivariate-Gaussian model of pristine patch statistics.

    mu is the 36-vector feature mean, cov the 36x36 covariance; patch_size
    is the full-resolution block side (halved for the second scale).
    """

    mu: np.ndarray
    cov: np.ndarray
    patch_size: int

    def __post_init__(self):
        if self.mu.shape != (36,) or self.cov.shape != (36, 36):
            raise ModelMissing(
                f"bad model arrays: mu {self.mu.shape}, cov {self.cov.shape}"
            )
        if self.patch_size < 8 or self.patch_size % 2:
            raise ModelMissing(f"patch_size must be even and >= 8: {self.patch_size}")


def _default_model_path() -> str:
    return os.path.join(os.path.dirname(__file__), "data", "niqe_model.npz")


def load_niqe_model(path: str | os.PathLike | None = None) -> NiqeModel:
    """Load a model file (the packaged one when no path is given)."""
    path = _default_model_path() if path is None else str(path)
    if not os.path.exists(path):
        raise ModelMissing(f"naturalness model file not found: {path}")
    with np.load(path) as data:
        return NiqeModel(
            mu=np.asarray(data["mu"], dtype=np.float64),
            cov=np.asarray(data["cov"], dtype=np.float64),
            patch_size=int(data["patch_size"]),
        )


def save_niqe_model(model: NiqeModel, path: str | os.PathLike) -> None:
    np.savez(
        path, mu=model.mu, cov=model.cov, patch_size=np.int64(model.patch_size)
    )


@lru_cache(maxsize=1)
def _alpha_grid():
    gam = np.arange(0.2, 10.001, 0.001)
    g1 = gamma_fn(1.0 / gam)
    g2 = gamma_fn(2.0 / gam)
    g3 = gamma_fn(3.0 / gam)
    r_ggd = g1 * g3 / (g2**2)  # E[x^2]/E[|x|]^2 for a GGD
    r_aggd = (g2**2) / (g1 * g3)
    return gam, r_ggd, r_aggd, g1, g2, g3


def _fit_ggd(vec: np.ndarray) -> tuple[float, float]:
    gam, r_ggd, _, _, _, _ = _alpha_grid()
    sigma_sq = float(np.mean(vec**2))
    mean_abs = float(np.mean(np.abs(vec)))
    if mean_abs < 1e-12 or sigma_sq < 1e-24:
        return 10.0, 0.0
    rho = sigma_sq / mean_abs**2
    alpha = float(gam[np.argmin(np.abs(r_ggd - rho))])
    return alpha, sigma_sq


def _fit_aggd(vec: np.ndarray) -> tuple[float, float, float, float]:
    gam, _, r_aggd, g1, g2, g3 = _alpha_grid()
    neg = vec[vec < 0]
    pos = vec[vec > 0]
    left = math.sqrt(float(np.mean(neg**2))) if neg.size else 0.0
    right = math.sqrt(float(np.mean(pos**2))) if pos.size else 0.0
    if left < 1e-12 and right < 1e-12:
        return 10.0, 0.0, 0.0, 0.0
    gammahat = left / right if right > 1e-12 else 1e6
    rhat = float(np.mean(np.abs(vec))) ** 2 / max(float(np.mean(vec**2)), 1e-24)
    rhatnorm = (
        rhat * (gammahat**3 + 1.0) * (gammahat + 1.0) / ((gammahat**2 + 1.0) ** 2)
    )
    idx = int(np.argmin((r_aggd - rhatnorm) ** 2))
    alpha = float(gam[idx])
    ratio = math.sqrt(g1[idx] / g3[idx])
    beta_l = left * ratio
    beta_r = right * ratio
    eta = (beta_r - beta_l) * g2[idx] / g1[idx]
    return alpha, eta, beta_l, beta_r


def _block_features(block: np.ndarray) -> list[float]:
    feats = list(_fit_ggd(block.ravel()))
    for dy, dx in ((0, 1), (1, 0), (1, 1), (1, -1)):
        prod = block * np.roll(np.roll(block, dy, axis=0), dx, axis=1)
        feats.extend(_fit_aggd(prod.ravel()))
    return feats


def _half(img: np.ndarray) -> np.ndarray:
    h2, w2 = img.shape[0] // 2, img.shape[1] // 2
    return img[: 2 * h2, : 2 * w2].reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def _local_stats(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = gaussian_filter(img, 7.0 / 6.0, mode="nearest", radius=3)
    var = gaussian_filter(img * img, 7.0 / 6.0, mode="nearest", radius=3) - mu * mu
    sigma = np.sqrt(np.abs(var))
    return mu, sigma


def _gray255(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        img = 0.299 * img[:, :, 0] + 0.587 * img[:, :, 1] + 0.114 * img[:, :, 2]
    return img * 255.0


def _patch_features(gray: np.ndarray, patch_size: int):
    """Per-patch 36-dim features plus full-scale patch sharpness."""
    per_scale = []
    sharpness = None
    img = gray
    for scale in (1, 2):
        ps = patch_size // scale
        if scale == 2:
            img = _half(gray)
        mu, sigma = _local_stats(img)
        mscn = (img - mu) / (sigma + 1.0)
        ny, nx = img.shape[0] // ps, img.shape[1] // ps
        rows = []
        sharp = []
        for iy in range(ny):
            for ix in range(nx):
                sl = np.s_[iy * ps : (iy + 1) * ps, ix * ps : (ix + 1) * ps]
                rows.append(_block_features(mscn[sl]))
                if scale == 1:
                    sharp.append(float(sigma[sl].mean()))
        per_scale.append(np.asarray(rows, dtype=np.float64))
        if scale == 1:
            sharpness = np.asarray(sharp, dtype=np.float64)
    n = min(len(f) for f in per_scale)
    feats = np.hstack([f[:n] for f in per_scale])
    return np.nan_to_num(feats), sharpness[:n]


def niqe(img: np.ndarray, model: NiqeModel | None = None) -> float:
    """Distance between the image's patch statistics and the pristine model.

    Lower is better; deterministic for a fixed model file.
    """
    if model is None:
        model = load_niqe_model()
    gray = _gray255(img)
    if min(gray.shape) < model.patch_size:
        raise TooSmall(
            f"image {gray.shape} smaller than patch size {model.patch_size}"
        )
    feats, _ = _patch_features(gray, model.patch_size)
    mu_img = feats.mean(axis=0)
    cov_img = np.cov(feats.T) if feats.shape[0] > 1 else np.zeros((36, 36))
    cov_img = np.nan_to_num(cov_img)
    pooled = (model.cov + cov_img) / 2.0
    diff = model.mu - mu_img
    dist2 = float(diff @ np.linalg.pinv(pooled) @ diff)
    return math.sqrt(max(dist2, 0.0))


def fit_niqe_model(
    images: list[np.ndarray],
    patch_size: int = 32,
    sharpness_fraction: float = 0.75,
) -> NiqeModel:
    """Fit the pristine model from images: pool features of the sharpest
    patches (those above `sharpness_fraction` of each image's maximum)."""
    pooled = []
    for img in images:
        gray = _gray255(img)
        if min(gray.shape) < patch_size:
            raise TooSmall(f"fitting image {gray.shape} smaller than {patch_size}")
        feats, sharp = _patch_features(gray, patch_size)
        keep = sharp > sharpness_fraction * sharp.max()
        if not keep.any():
            keep[:] = True
        pooled.append(feats[keep])
    feats = np.vstack(pooled)
    return NiqeModel(
        mu=feats.mean(axis=0), cov=np.cov(feats.T), patch_size=patch_size
    )


# --- split evaluation ----------------------------------------------------------


@dataclass
class MetricReport:
    """Per-image metric rows plus recomputable aggregates for one split."""

    dataset: str
    per_image: list[tuple[str, float, float, float]] = field(default_factory=list)
    psnr_cap: float = PSNR_CAP
    std_mode: str = "sample"  # sample (ddof=1) unless flagged population

    def _column(self, idx: int) -> np.ndarray:
        vals = np.array([row[idx] for row in self.per_image], dtype=np.float64)
        return vals[~np.isnan(vals)]

    def aggregates(self) -> dict[str, tuple[float, float]]:
        ddof = 1 if self.std_mode == "sample" else 0
        out = {}
        for name, idx in (("psnr", 1), ("ssim", 2), ("niqe", 3)):
            vals = self._column(idx)
            if vals.size == 0:
                out[name] = (float("nan"), float("nan"))
            elif vals.size <= ddof:
                out[name] = (float(vals.mean()), 0.0)
            else:
                out[name] = (float(vals.mean()), float(vals.std(ddof=ddof)))
        return out

    def to_csv(self) -> str:
        def cell(v: float) -> str:
            return "" if math.isnan(v) else repr(float(v))

        lines = ["image,psnr,ssim,niqe"]
        for name, p, s, n in self.per_image:
            lines.append(f"{name},{cell(p)},{cell(s)},{cell(n)}")
        agg = self.aggregates()
        lines.append(
            "mean," + ",".join(cell(agg[m][0]) for m in ("psnr", "ssim", "niqe"))
        )
        lines.append(
            "std," + ",".join(cell(agg[m][1]) for m in ("psnr", "ssim", "niqe"))
        )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        agg = self.aggregates()
        lines = [
            f"dataset: {self.dataset}",
            f"images: {len(self.per_image)}",
        ]
        for m in ("psnr", "ssim", "niqe"):
            mean, std = agg[m]
            if math.isnan(mean):
                lines.append(f"{m}: n/a")
            else:
                lines.append(f"{m}: {mean:.3f} ± {std:.3f}")
        lines.append(f"psnr cap: {self.psnr_cap} dB; std: {self.std_mode}")
        return "\n".join(lines) + "\n"


def evaluate_split(
    restored_dir: str | os.PathLike,
    truth_dir: str | os.PathLike,
    dataset_label: str,
    niqe_model: NiqeModel | None = None,
) -> MetricReport:
    """Score aligned same-named image pairs; rows ordered by filename.

    The naturalness column is filled only when a model is supplied and the
    image is large enough for it; other rows carry NaN there.
    """
    restored_names = sorted(
        f for f in os.listdir(restored_dir) if f.lower().endswith(".png")
    )
    truth_names = sorted(f for f in os.listdir(truth_dir) if f.lower().endswith(".png"))
    if not restored_names:
        raise PairMismatch(f"no PNG images in {restored_dir}")
    for name in restored_names:
        if name not in truth_names:
            raise PairMismatch(f"no ground-truth counterpart for {name}")
    for name in truth_names:
        if name not in restored_names:
            raise PairMismatch(f"no restored counterpart for {name}")
    report = MetricReport(dataset=dataset_label)
    for name in restored_names:
        rest = load_image(os.path.join(restored_dir, name))
        true = load_image(os.path.join(truth_dir, name))
        row_niqe = float("nan")
        if niqe_model is not None and min(rest.shape[:2]) >= niqe_model.patch_size:
            row_niqe = niqe(rest, niqe_model)
        report.per_image.append((name, psnr(rest, true), ssim(rest, true), row_niqe))
    return report
