"""Training objective: weighted sum of an L1 term, a color-direction term,
and a contrastive term in a pretrained feature space.

Every norm here is a mean over elements rather than a raw sum, so the
default weights behave the same at any image resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import DegenerateAnchor, DomainError, ModelMissing, ShapeMismatch, ZeroVector

__all__ = [
    "LossWeights",
    "FeatureTapWeights",
    "l1_loss",
    "color_loss",
    "cr_loss",
    "weighted_total",
    "total_loss",
    "SurrogateExtractor",
    "PerceptualExtractor",
    "load_perceptual_extractor",
]

_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    lambda_l1: float = 0.8
    lambda_color: float = 0.1
    lambda_cr: float = 0.1

    def __post_init__(self):
        if min(self.lambda_l1, self.lambda_color, self.lambda_cr) < 0:
            raise DomainError("loss weights must be >= 0")


@dataclass(frozen=True)
class FeatureTapWeights:
    omegas: tuple[float, ...] = (1 / 32, 1 / 16, 1 / 8, 1 / 4, 1.0)


def _check_same_shape(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def l1_loss(restored: torch.Tensor, truth: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference over all elements."""
    _check_same_shape(restored, truth)
    return torch.mean(torch.abs(restored - truth))


def color_loss(restored: torch.Tensor, truth: torch.Tensor) -> torch.Tensor:
    """One minus the cosine between the flattened tensors.

    Zero when the restored image points in the same color direction as the
    truth, regardless of global scale.
    """
    _check_same_shape(restored, truth)
    r = restored.reshape(-1)
    g = truth.reshape(-1)
    nr = torch.linalg.vector_norm(r)
    ng = torch.linalg.vector_norm(g)
    if nr.detach().item() < _NORM_FLOOR or ng.detach().item() < _NORM_FLOOR:
        raise ZeroVector("color loss undefined for (near-)zero images")
    return 1.0 - torch.dot(r, g) / (nr * ng)


def cr_loss(
    restored: torch.Tensor,
    degraded: torch.Tensor,
    truth: torch.Tensor,
    extractor: "nn.Module",
    omegas: FeatureTapWeights = FeatureTapWeights(),
) -> torch.Tensor:
    """Contrastive regularization over the extractor's tap features.

    Pulls the restoration toward the truth (numerator) and away from the
    degraded input (denominator); only the restored image carries gradient.
    """
    _check_same_shape(restored, truth)
    _check_same_shape(restored, degraded)
    taps_r = extractor.taps(restored)
    with torch.no_grad():
        taps_g = extractor.taps(truth)
        taps_d = extractor.taps(degraded)
    if not (len(taps_r) == len(taps_g) == len(taps_d) == len(omegas.omegas)):
        raise DomainError(
            f"extractor yields {len(taps_r)} taps, need {len(omegas.omegas)}"
        )
    total = restored.new_zeros(())
    for w, fr, fg, fd in zip(omegas.omegas, taps_r, taps_g, taps_d):
        num = torch.mean(torch.abs(fr - fg))
        den = torch.mean(torch.abs(fd - fg))
        if den.item() < _NORM_FLOOR:
            raise DegenerateAnchor("degraded equals truth at a feature tap")
        total = total + w * num / den
    return total


def weighted_total(
    l1: torch.Tensor | float,
    color: torch.Tensor | float,
    cr: torch.Tensor | float,
    weights: LossWeights = LossWeights(),
):
    """Combine the three components with the configured weights."""
    return weights.lambda_l1 * l1 + weights.lambda_color * color + weights.lambda_cr * cr


def total_loss(
    restored: torch.Tensor,
    degraded: torch.Tensor,
    truth: torch.Tensor,
    extractor: "nn.Module | None" = None,
    weights: LossWeights = LossWeights(),
    omegas: FeatureTapWeights = FeatureTapWeights(),
):
    """Full objective; returns (total, (l1, color, cr)) for logging.

    The extractor may be omitted only when its weight is zero.
    """
    part_l1 = l1_loss(restored, truth)
    part_color = color_loss(restored, truth)
    if weights.lambda_cr != 0.0:
        if extractor is None:
            raise DomainError("contrastive weight is nonzero but no extractor given")
        part_cr = cr_loss(restored, degraded, truth, extractor, omegas)
    else:
        part_cr = restored.new_zeros(())
    total = weighted_total(part_l1, part_color, part_cr, weights)
    return total, (part_l1, part_color, part_cr)


class SurrogateExtractor(nn.Module):
    """Tiny fixed-weight 5-tap feature pyramid.

    Stands in for the pretrained perceptual network in tests and offline
    training: deterministic per seed, smooth (tanh) activations, frozen.
    """

    def __init__(self, seed: int = 0, channels: int = 8):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        stages = []
        c_in = 3
        for _ in range(5):
            conv = nn.Conv2d(c_in, channels, 3, padding=1)
            with torch.no_grad():
                bound = 1.0 / np.sqrt(c_in * 9)
                conv.weight.uniform_(-bound, bound, generator=gen)
                conv.bias.uniform_(-bound, bound, generator=gen)
            stages.append(conv)
            c_in = channels
        self.stages = nn.ModuleList(stages)
        self.pool = nn.AvgPool2d(2, ceil_mode=True)
        for p in self.parameters():
            p.requires_grad_(False)
        self.register_buffer("mean", torch.full((1, 3, 1, 1), 0.5))
        self.register_buffer("std", torch.full((1, 3, 1, 1), 0.25))

    def taps(self, x: torch.Tensor) -> list[torch.Tensor]:
        if x.dim() == 3:
            x = x.unsqueeze(0)
        x = (x - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        out = []
        for i, stage in enumerate(self.stages):
            if i > 0:
                x = self.pool(x)
            x = torch.tanh(stage(x))
            out.append(x)
        return out


# conv widths of the standard 19-layer classifier's feature stack; taps sit
# on the activation just before each pooling step
_PERCEPTUAL_PLAN = (
    (64, 64),
    (128, 128),
    (256, 256, 256, 256),
    (512, 512, 512, 512),
    (512, 512, 512, 512),
)


class PerceptualExtractor(nn.Module):
    """Five pre-pooling taps of the standard 19-layer conv classifier.

    Weights come from a local parameter container (see
    `load_perceptual_extractor`); nothing is downloaded at runtime.
    """

    def __init__(self):
        super().__init__()
        convs = []
        c_in = 3
        for block in _PERCEPTUAL_PLAN:
            for c_out in block:
                convs.append(nn.Conv2d(c_in, c_out, 3, padding=1))
                c_in = c_out
        self.convs = nn.ModuleList(convs)
        self.block_sizes = tuple(len(b) for b in _PERCEPTUAL_PLAN)
        self.pool = nn.MaxPool2d(2, ceil_mode=True)
        for p in self.parameters():
            p.requires_grad_(False)
        self.register_buffer(
            "mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
        )
        self.register_buffer(
            "std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)
        )

    def taps(self, x: torch.Tensor) -> list[torch.Tensor]:
        if x.dim() == 3:
            x = x.unsqueeze(0)
        x = (x - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        out = []
        idx = 0
        for size in self.block_sizes:
            for _ in range(size):
                x = torch.relu(self.convs[idx](x))
                idx += 1
            out.append(x)
            x = self.pool(x)
        return out


def load_perceptual_extractor(path: str) -> PerceptualExtractor:
    """Build the perceptual extractor from a parameter container.

    The container is an npz archive with arrays conv{i}.weight / conv{i}.bias
    for i in 0..15, in feature-stack order (the torchvision state dict maps
    onto this by enumerating its conv layers in order).
    """
    import os

    if not os.path.exists(path):
        raise ModelMissing(f"perceptual weights not found: {path}")
    ext = PerceptualExtractor()
    with np.load(path) as data:
        for i, conv in enumerate(ext.convs):
            w = data[f"conv{i}.weight"]
            b = data[f"conv{i}.bias"]
            if tuple(w.shape) != tuple(conv.weight.shape):
                raise ModelMissing(
                    f"{path}: conv{i}.weight has shape {w.shape}, "
                    f"expected {tuple(conv.weight.shape)}"
                )
            with torch.no_grad():
                conv.weight.copy_(torch.from_numpy(w))
                conv.bias.copy_(torch.from_numpy(b))
    return ext
