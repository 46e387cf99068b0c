"""Classical prior operators: gamma correction, linear stretching,
percentile-optimized linear stretching, and local contrast.

All operators act on HWC float arrays. Stretching statistics are computed
per channel; see `optimized_linear_stretch` for the threshold rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter, minimum_filter

from .errors import BadWindow, DegenerateRange, DomainError
from .imaging import odd_window, percentile

__all__ = [
    "GammaBank",
    "OLSParams",
    "gamma_correct",
    "gamma_bank_apply",
    "linear_stretch",
    "optimized_linear_stretch",
    "local_contrast",
]

DEFAULT_GAMMAS = (0.25, 0.5, 2.0, 4.0)


@dataclass(frozen=True)
class GammaBank:
    """An ordered bank of power-law exponents with a shared scale constant."""

    gammas: tuple[float, ...] = DEFAULT_GAMMAS
    epsilon: float = 1.0

    def __post_init__(self):
        if len(self.gammas) == 0:
            raise DomainError("gamma bank must hold at least one exponent")
        if any(g <= 0 for g in self.gammas):
            raise DomainError(f"all gammas must be > 0, got {self.gammas}")
        if self.epsilon <= 0:
            raise DomainError(f"epsilon must be > 0, got {self.epsilon}")


@dataclass(frozen=True)
class OLSParams:
    """Percentile bounds and adjustment fractions for optimized stretching.

    p_min/p_max pick the truncation percentiles; p_a_min/p_a_max expand the
    truncated bounds by that fraction of the truncated range.
    """

    p_min: float = 0.01
    p_max: float = 0.99
    p_a_min: float = 0.0
    p_a_max: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.p_min < self.p_max <= 1.0):
            raise DomainError(
                f"need 0 <= p_min < p_max <= 1, got ({self.p_min}, {self.p_max})"
            )
        if self.p_a_min < 0 or self.p_a_max < 0:
            raise DomainError(
                f"adjustment fractions must be >= 0, got "
                f"({self.p_a_min}, {self.p_a_max})"
            )


def gamma_correct(img: np.ndarray, gamma: float, epsilon: float = 1.0) -> np.ndarray:
    """Power-law remap epsilon * img**gamma (inputs must be nonnegative)."""
    if gamma <= 0:
        raise DomainError(f"gamma must be > 0, got {gamma}")
    if epsilon <= 0:
        raise DomainError(f"epsilon must be > 0, got {epsilon}")
    img = np.asarray(img)
    if np.any(img < 0):
        raise DomainError("gamma correction needs nonnegative inputs; clamp first")
    return epsilon * np.power(img, gamma)


def gamma_bank_apply(img: np.ndarray, bank: GammaBank) -> list[np.ndarray]:
    """Apply every exponent of the bank, outputs in bank order."""
    return [gamma_correct(img, g, bank.epsilon) for g in bank.gammas]


def _channel_iter(img: np.ndarray):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise DomainError(f"expected HxW or HxWxC array, got shape {img.shape}")
    return img


def linear_stretch(img: np.ndarray) -> np.ndarray:
    """Per-channel affine remap of [min, max] onto [0, 1]."""
    work = _channel_iter(img)
    out = np.empty_like(work)
    for c in range(work.shape[2]):
        ch = work[:, :, c]
        lo, hi = float(ch.min()), float(ch.max())
        if hi <= lo:
            raise DegenerateRange(f"channel {c} is constant at {lo}")
        out[:, :, c] = (ch - lo) / (hi - lo)
    return out.reshape(np.asarray(img).shape)


def optimized_linear_stretch(
    img: np.ndarray, params: OLSParams, clip: bool = True
) -> np.ndarray:
    """Percentile-truncated linear stretch with adjustable bounds.

    Per channel: take the nearest-rank percentiles at p_min/p_max as the
    truncated bounds, widen them by p_a_min/p_a_max fractions of the
    truncated range, then map that interval affinely onto [0, 1]. With
    clip=True (the default) values outside the interval are truncated to
    the range limits.
    """
    work = _channel_iter(img)
    out = np.empty_like(work)
    for c in range(work.shape[2]):
        ch = work[:, :, c]
        t_min = percentile(ch, params.p_min)
        t_max = percentile(ch, params.p_max)
        if t_max <= t_min:
            raise DegenerateRange(
                f"channel {c}: percentile range is empty ({t_min} == {t_max})"
            )
        width = t_max - t_min
        tp_min = t_min - params.p_a_min * width
        tp_max = t_max + params.p_a_max * width
        out[:, :, c] = (ch - tp_min) / (tp_max - tp_min)
    if clip:
        out = np.clip(out, 0.0, 1.0)
    return out.reshape(np.asarray(img).shape)


def local_contrast(img: np.ndarray, window: int) -> np.ndarray:
    """Windowed max minus min around each pixel (replicate-padded borders)."""
    window = odd_window(window)
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        size = (window, window, 1)
    elif img.ndim == 2:
        size = (window, window)
    else:
        raise BadWindow(f"expected HxW or HxWxC array, got shape {img.shape}")
    hi = maximum_filter(img, size=size, mode="nearest")
    lo = minimum_filter(img, size=size, mode="nearest")
    return hi - lo
