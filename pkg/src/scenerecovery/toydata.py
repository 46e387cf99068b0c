"""Procedural landscape scenes with depth maps.

Used by the demo scripts, the desk-scale tests, and the shipped
natural-statistics model: small images with sky gradients, ridge lines,
textured ground and box structures give degradation synthesis and the
no-reference metric something photograph-like to chew on without any
external corpus.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

__all__ = ["synthetic_scene"]


def synthetic_scene(
    seed: int, size: tuple[int, int] = (128, 128)
) -> tuple[np.ndarray, np.ndarray]:
    """Return (image HWC float32 in [0,1], depth HW float32 in [0,1]).

    Depth is 1 at the sky and falls toward the bottom of the frame, so the
    scattering model produces the expected distance-dependent veil.
    """
    h, w = int(size[0]), int(size[1])
    rng = np.random.default_rng(seed)

    ramp = np.linspace(0.0, 1.0, h)[:, None, None]
    sky_top = rng.uniform((0.35, 0.45, 0.65), (0.6, 0.75, 0.95))
    sky_bot = rng.uniform((0.65, 0.70, 0.75), (0.95, 0.95, 1.0))
    img = np.zeros((h, w, 3))
    img += sky_top * (1.0 - ramp) + sky_bot * ramp
    depth = np.full((h, w), 1.0)

    ys = np.arange(h)[:, None]
    horizon = int(h * rng.uniform(0.35, 0.6))

    walk = np.cumsum(rng.standard_normal(w))
    walk = gaussian_filter(walk, max(w / 16.0, 1.0))
    span = walk.max() - walk.min()
    walk = (walk - walk.min()) / (span if span > 0 else 1.0)
    ridge_top = horizon - (walk * 0.25 * h).astype(int)
    ridge_mask = (ys >= ridge_top[None, :]) & (ys < horizon)
    ridge_col = rng.uniform((0.15, 0.20, 0.20), (0.45, 0.50, 0.50))
    img[ridge_mask] = ridge_col
    depth[ridge_mask] = 0.75

    ground_mask = np.broadcast_to(ys >= horizon, (h, w))
    ground_col = rng.uniform((0.20, 0.25, 0.10), (0.60, 0.65, 0.45))
    img[ground_mask] = ground_col
    ground_depth = np.broadcast_to(
        np.interp(np.arange(h), [horizon, h - 1], [0.55, 0.05])[:, None], (h, w)
    )
    depth[ground_mask] = ground_depth[ground_mask]

    for _ in range(int(rng.integers(2, 5))):
        bw = int(rng.integers(max(w // 16, 2), max(w // 5, 3)))
        bh = int(rng.integers(max(h // 10, 2), max(h // 3, 3)))
        x0 = int(rng.integers(0, max(w - bw, 1)))
        y1 = int(min(horizon + rng.integers(0, h // 8 + 1), h))
        y0 = max(y1 - bh, 0)
        col = rng.uniform(0.15, 0.85, size=3)
        img[y0:y1, x0 : x0 + bw] = col
        depth[y0:y1, x0 : x0 + bw] = float(rng.uniform(0.2, 0.5))

    # fine texture so local statistics are not piecewise constant
    grain = gaussian_filter(rng.standard_normal((h, w)), 0.8)
    img += 0.035 * grain[:, :, None]
    bands = gaussian_filter(rng.standard_normal((h, w)), (1.0, 4.0))
    img[ground_mask] += 0.06 * np.stack([bands, bands, 0.5 * bands], axis=-1)[
        ground_mask
    ]

    return np.clip(img, 0.0, 1.0).astype(np.float32), depth.astype(np.float32)
