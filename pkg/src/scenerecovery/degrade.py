"""Paired degradation synthesis.

Haze and sand-dust pairs come from the scattering model
I = J*t + A*(1 - t) with transmission t = exp(-beta * depth); the two
scenes differ only in the airlight color (near-gray vs red-shifted).
Low-light pairs darken the clean image through a smooth illumination map
raised to a power, so the darkening varies spatially.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DomainError, EmptySet, MissingDepth, NegativeDepth, ShapeMismatch
from .imaging import clamp01, require_hwc

__all__ = [
    "KINDS",
    "DegradationSpec",
    "AtmoLightSet",
    "default_atmo_set",
    "load_atmo_set",
    "save_atmo_set",
    "sample_atmo_light",
    "sample_spec",
    "synth_scatter",
    "synth_lowlight",
    "synth_pair",
    "normalize_depth",
]

KINDS = ("haze", "sand", "lowlight")

# per-sample draw ranges used when a spec leaves its physics unset
BETA_RANGE = (0.8, 2.5)
DARK_GAMMA_RANGE = (1.8, 3.2)
ILLUM_SCALE_RANGE = (0.35, 0.8)


def _check_triple(kind: str, triple: tuple[float, float, float]) -> tuple[float, ...]:
    t = tuple(float(v) for v in triple)
    if len(t) != 3 or any(not 0.0 <= v <= 1.0 for v in t):
        raise DomainError(f"airlight must be an RGB triple in [0,1], got {triple}")
    r, g, b = t
    if kind == "haze" and max(t) - min(t) > 0.1:
        raise DomainError(f"haze airlight must be near-achromatic, got {t}")
    if kind == "sand" and not (r >= g >= b):
        raise DomainError(f"sand airlight needs R >= G >= B, got {t}")
    return t


@dataclass(frozen=True)
class DegradationSpec:
    """One scene kind plus its physical parameters.

    Any parameter left as None is drawn per sample (see `sample_spec`),
    which is how the training harness varies degradation strength.
    """

    kind: str
    beta: float | None = None
    atmo_light: tuple[float, float, float] | None = None
    dark_gamma: float | None = None
    illum_scale: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.beta is not None and self.beta < 0:
            raise DomainError(f"beta must be >= 0, got {self.beta}")
        if self.atmo_light is not None:
            object.__setattr__(
                self, "atmo_light", _check_triple(self.kind, self.atmo_light)
            )
        if self.dark_gamma is not None and self.dark_gamma <= 1.0:
            raise DomainError(f"dark_gamma must be > 1, got {self.dark_gamma}")
        if self.illum_scale is not None and not 0.0 < self.illum_scale <= 1.0:
            raise DomainError(f"illum_scale must be in (0,1], got {self.illum_scale}")

    @property
    def needs_depth(self) -> bool:
        return self.kind in ("haze", "sand")


@dataclass(frozen=True)
class AtmoLightSet:
    """A named list of airlight RGB triples to draw from."""

    name: str
    entries: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        if len(self.entries) == 0:
            raise EmptySet(f"airlight set {self.name!r} is empty")

    def validate_for(self, kind: str) -> None:
        for triple in self.entries:
            _check_triple(kind, triple)


def default_atmo_set(kind: str) -> AtmoLightSet:
    """Built-in airlight tables: 8 near-gray triples for haze, 8 red-shifted
    triples for sand. These are configuration defaults, replaceable by file."""
    if kind == "haze":
        vals = np.linspace(0.7, 1.0, 8)
        entries = tuple((float(v), float(v), float(v)) for v in vals)
        return AtmoLightSet("haze-default", entries)
    if kind == "sand":
        r = np.linspace(0.75, 0.95, 8)
        g = r - np.linspace(0.10, 0.20, 8)
        b = g - np.linspace(0.15, 0.30, 8)
        entries = tuple(
            (float(rv), float(max(gv, 0.0)), float(max(bv, 0.0)))
            for rv, gv, bv in zip(r, g, b)
        )
        return AtmoLightSet("sand-default", entries)
    raise DomainError(f"no default airlight set for kind {kind!r}")


def save_atmo_set(atmo: AtmoLightSet, path: str | os.PathLike) -> None:
    """Write one 'R G B' line per entry; lines starting with # are comments."""
    with open(path, "w") as fh:
        fh.write(f"# airlight set: {atmo.name}\n")
        for r, g, b in atmo.entries:
            fh.write(f"{r:.6f} {g:.6f} {b:.6f}\n")


def load_atmo_set(path: str | os.PathLike, name: str | None = None) -> AtmoLightSet:
    entries = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise DomainError(f"{path}: expected 'R G B' per line, got {line!r}")
            entries.append(tuple(float(p) for p in parts))
    if not entries:
        raise EmptySet(f"{path}: no airlight entries")
    return AtmoLightSet(name or os.path.basename(str(path)), tuple(entries))


def sample_atmo_light(atmo: AtmoLightSet, seed: int) -> tuple[float, float, float]:
    """Pick one triple from the set, deterministically per seed."""
    rng = np.random.default_rng(seed)
    idx = int(rng.integers(len(atmo.entries)))
    return atmo.entries[idx]


def sample_spec(
    kind: str,
    seed: int,
    atmo_set: AtmoLightSet | None = None,
    beta_range: tuple[float, float] = BETA_RANGE,
    dark_gamma_range: tuple[float, float] = DARK_GAMMA_RANGE,
    illum_scale_range: tuple[float, float] = ILLUM_SCALE_RANGE,
) -> DegradationSpec:
    """Draw a fully concrete spec for `kind`, deterministic per seed."""
    rng = np.random.default_rng(seed)
    if kind in ("haze", "sand"):
        atmo = atmo_set if atmo_set is not None else default_atmo_set(kind)
        idx = int(rng.integers(len(atmo.entries)))
        beta = float(rng.uniform(*beta_range))
        return DegradationSpec(kind=kind, beta=beta, atmo_light=atmo.entries[idx])
    if kind == "lowlight":
        dark_gamma = float(rng.uniform(*dark_gamma_range))
        illum = float(rng.uniform(*illum_scale_range))
        return DegradationSpec(kind=kind, dark_gamma=dark_gamma, illum_scale=illum)
    raise DomainError(f"kind must be one of {KINDS}, got {kind!r}")


def normalize_depth(depth: np.ndarray) -> np.ndarray:
    """Min-max rescale a depth map to [0, 1]; a constant map becomes zeros."""
    depth = np.asarray(depth, dtype=np.float64)
    lo, hi = float(depth.min()), float(depth.max())
    if hi <= lo:
        return np.zeros_like(depth)
    return (depth - lo) / (hi - lo)


def synth_scatter(
    clean: np.ndarray,
    depth: np.ndarray,
    beta: float,
    atmo_light: tuple[float, float, float],
) -> np.ndarray:
    """Scattering model: J*t + A*(1-t), t = exp(-beta * depth)."""
    clean = require_hwc(clean, "clean")
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2 or depth.shape != clean.shape[:2]:
        raise ShapeMismatch(
            f"depth must be HxW matching clean {clean.shape[:2]}, got {depth.shape}"
        )
    if np.any(depth < 0):
        raise NegativeDepth("depth values must be >= 0")
    if beta < 0:
        raise DomainError(f"beta must be >= 0, got {beta}")
    a = np.asarray(atmo_light, dtype=np.float64).reshape(1, 1, 3)
    t = np.exp(-beta * depth)[:, :, None]
    return clean.astype(np.float64) * t + a * (1.0 - t)


def _luminance(img: np.ndarray) -> np.ndarray:
    return 0.299 * img[:, :, 0] + 0.587 * img[:, :, 1] + 0.114 * img[:, :, 2]


def illumination_map(clean: np.ndarray) -> np.ndarray:
    """Smooth illumination estimate: Gaussian-blurred luminance, blur scale
    an eighth of the smaller image dimension."""
    clean = require_hwc(clean, "clean")
    sigma = max(min(clean.shape[0], clean.shape[1]) / 8.0, 1.0)
    return gaussian_filter(_luminance(clean.astype(np.float64)), sigma=sigma)


def synth_lowlight(
    clean: np.ndarray, dark_gamma: float, illum_scale: float
) -> np.ndarray:
    """Darken via clean * (illum_scale * L)**(dark_gamma - 1).

    L is the smooth illumination map, so dark regions of the scene darken
    faster; the output never exceeds the input.
    """
    clean = require_hwc(clean, "clean")
    if dark_gamma < 1.0:
        raise DomainError(f"dark_gamma must be >= 1, got {dark_gamma}")
    if not 0.0 < illum_scale <= 1.0:
        raise DomainError(f"illum_scale must be in (0,1], got {illum_scale}")
    lum = illumination_map(clean)
    factor = np.power(np.clip(illum_scale * lum, 0.0, 1.0), dark_gamma - 1.0)
    return clamp01(clean.astype(np.float64) * factor[:, :, None])


def _resolve(spec: DegradationSpec, seed: int, atmo_set: AtmoLightSet | None):
    if spec.kind in ("haze", "sand"):
        if spec.beta is not None and spec.atmo_light is not None:
            return spec
        drawn = sample_spec(spec.kind, seed, atmo_set=atmo_set)
        return DegradationSpec(
            kind=spec.kind,
            beta=spec.beta if spec.beta is not None else drawn.beta,
            atmo_light=(
                spec.atmo_light if spec.atmo_light is not None else drawn.atmo_light
            ),
        )
    if spec.dark_gamma is not None and spec.illum_scale is not None:
        return spec
    drawn = sample_spec(spec.kind, seed)
    return DegradationSpec(
        kind=spec.kind,
        dark_gamma=spec.dark_gamma if spec.dark_gamma is not None else drawn.dark_gamma,
        illum_scale=(
            spec.illum_scale if spec.illum_scale is not None else drawn.illum_scale
        ),
    )


def synth_pair(
    clean: np.ndarray,
    depth: np.ndarray | None,
    spec: DegradationSpec,
    seed: int = 0,
    atmo_set: AtmoLightSet | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Produce an aligned (degraded, clean) pair for the given spec.

    Unset spec parameters are drawn deterministically from `seed`; depth is
    min-max normalized before entering the scattering model.
    """
    clean = require_hwc(clean, "clean")
    spec = _resolve(spec, seed, atmo_set)
    if spec.kind in ("haze", "sand"):
        if depth is None:
            raise MissingDepth(f"kind={spec.kind} requires a depth map")
        degraded = synth_scatter(
            clean, normalize_depth(depth), spec.beta, spec.atmo_light
        )
    else:
        degraded = synth_lowlight(clean, spec.dark_gamma, spec.illum_scale)
    return clamp01(degraded), clean
