"""The restoration network.

Three parallel branches lift the RGB input into feature space under
different priors: a gamma-exponent bank (detail), per-channel percentile
stretching (color), and dilated convolutions at four rates (context). A
three-scale encoder-decoder fuses the branch features into the restored
image. Conv-norm-PReLU blocks and residual blocks are the only learning
units.
"""

from __future__ import annotations

import io
import json
import math
import os
import zipfile
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigMismatch, DomainError, IndivisibleSpatialDims, ShapeMismatch
from .imaging import bchw_to_hwc, hwc_to_bchw
from .priors import GammaBank, OLSParams

__all__ = [
    "NetworkConfig",
    "Checkpoint",
    "ConvBlock",
    "ResidualBlock",
    "GammaBranch",
    "StretchBranch",
    "ContextBranch",
    "PlainBranch",
    "FusionUNet",
    "SceneRecoveryNet",
    "signed_power",
    "feature_stretch",
    "feature_stretch_thresholds",
    "build_network",
    "init_parameters",
    "init_checkpoint",
    "network_parameters",
    "load_parameters",
    "network_from_checkpoint",
    "checkpoint_from_network",
    "save_checkpoint",
    "load_checkpoint",
    "restore_image",
]

DEFAULT_OLS_TRIPLES = (
    OLSParams(0.01, 0.99, 0.0, 0.0),
    OLSParams(0.01, 0.99, 0.05, 0.05),
    OLSParams(0.01, 0.99, 0.10, 0.10),
)


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture hyperparameters.

    The three enable flags swap a branch for a plain conv stem of matching
    width; the ablation harness drives them.
    """

    base_channels: int = 16
    gamma_bank: GammaBank = field(default_factory=GammaBank)
    ols_triples: tuple[OLSParams, ...] = DEFAULT_OLS_TRIPLES
    atrous_rates: tuple[int, ...] = (3, 6, 9, 12)
    edfm_channels: tuple[int, int, int] = (16, 32, 64)
    prelu_init: float = 0.25
    enable_detail_branch: bool = True
    enable_color_branch: bool = True
    enable_context_branch: bool = True

    def __post_init__(self):
        if self.base_channels < 1:
            raise DomainError(f"base_channels must be >= 1, got {self.base_channels}")
        if len(self.gamma_bank.gammas) != 4:
            raise DomainError("gamma bank must hold exactly 4 exponents")
        if len(self.ols_triples) != 3:
            raise DomainError("need exactly 3 stretch parameter triples")
        if len(self.atrous_rates) != 4 or any(
            r2 <= r1 for r1, r2 in zip(self.atrous_rates, self.atrous_rates[1:])
        ):
            raise DomainError("atrous rates must be 4 strictly increasing integers")
        if any(r < 1 for r in self.atrous_rates):
            raise DomainError("atrous rates must be positive")
        if len(self.edfm_channels) != 3 or any(
            c2 <= c1 for c1, c2 in zip(self.edfm_channels, self.edfm_channels[1:])
        ):
            raise DomainError("fusion channels must be 3 strictly increasing integers")
        if self.edfm_channels[0] != self.base_channels:
            raise DomainError(
                "first fusion scale must match base_channels "
                f"({self.edfm_channels[0]} != {self.base_channels})"
            )

    @classmethod
    def scaled(cls, base_channels: int, **kwargs) -> "NetworkConfig":
        """A config with fusion widths (b, 2b, 4b) for the given base."""
        return cls(
            base_channels=base_channels,
            edfm_channels=(base_channels, 2 * base_channels, 4 * base_channels),
            **kwargs,
        )


@dataclass
class Checkpoint:
    """Serialized network: config, named parameter arrays, training metadata."""

    config: NetworkConfig
    parameters: dict[str, np.ndarray]
    training_meta: dict


class ChannelNorm(nn.Module):
    """Layer normalization over the channel axis at each spatial site."""

    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gain = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mu = x.mean(dim=1, keepdim=True)
        var = x.var(dim=1, unbiased=False, keepdim=True)
        y = (x - mu) / torch.sqrt(var + self.eps)
        return y * self.gain.view(1, -1, 1, 1) + self.bias.view(1, -1, 1, 1)


class ConvBlock(nn.Module):
    """Conv 3x3 (same padding) -> channel norm -> PReLU."""

    def __init__(self, c_in: int, c_out: int, prelu_init: float = 0.25):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.norm = ChannelNorm(c_out)
        self.act = nn.PReLU(init=prelu_init)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.act(self.norm(self.conv(x)))


class ResidualBlock(nn.Module):
    """Two conv blocks, a conv+norm, an additive skip, and a final PReLU."""

    def __init__(self, channels: int, prelu_init: float = 0.25):
        super().__init__()
        self.channels = channels
        self.block1 = ConvBlock(channels, channels, prelu_init)
        self.block2 = ConvBlock(channels, channels, prelu_init)
        self.conv = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm = ChannelNorm(channels)
        self.act = nn.PReLU(init=prelu_init)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.channels:
            raise ShapeMismatch(
                f"residual block expects {self.channels} channels, got {x.shape[1]}"
            )
        h = self.block2(self.block1(x))
        return self.act(self.norm(self.conv(h)) + x)


def signed_power(x: torch.Tensor, gamma: float, scale: float = 1.0) -> torch.Tensor:
    """sign(x) * |x|**gamma, defined (and finite-gradient) at zero."""
    mag = x.abs().clamp_min(1e-12)
    return scale * torch.sign(x) * mag.pow(gamma)


def _nearest_rank(p: float, n: int) -> int:
    rank = max(int(math.ceil(p * n - 1e-9)), 1)
    return min(rank, n)


def feature_stretch_thresholds(x: torch.Tensor, params: OLSParams):
    """Per-sample, per-channel truncation bounds (detached from the graph)."""
    b, c, h, w = x.shape
    n = h * w
    with torch.no_grad():
        srt, _ = x.reshape(b, c, n).sort(dim=-1)
        t_min = srt[..., _nearest_rank(params.p_min, n) - 1]
        t_max = srt[..., _nearest_rank(params.p_max, n) - 1]
    return t_min, t_max


def feature_stretch(x: torch.Tensor, params: OLSParams) -> torch.Tensor:
    """Percentile stretch of each channel of each sample onto [0, 1].

    Thresholds are treated as constants for differentiation; channels whose
    percentile range collapses pass through unchanged.
    """
    b, c, h, w = x.shape
    t_min, t_max = feature_stretch_thresholds(x, params)
    width = t_max - t_min
    usable = (width > 1e-12).view(b, c, 1, 1)
    tp_min = (t_min - params.p_a_min * width).view(b, c, 1, 1)
    tp_width = (width * (1.0 + params.p_a_min + params.p_a_max)).view(b, c, 1, 1)
    stretched = ((x - tp_min) / tp_width.clamp_min(1e-12)).clamp(0.0, 1.0)
    return torch.where(usable, stretched, x)


class GammaBranch(nn.Module):
    """Stem conv, signed gamma-bank expansion, 1x1 fusion, residual block."""

    def __init__(self, channels: int, bank: GammaBank, prelu_init: float = 0.25):
        super().__init__()
        self.bank = bank
        self.stem = nn.Conv2d(3, channels, 3, padding=1)
        self.fuse = nn.Conv2d(len(bank.gammas) * channels, channels, 1)
        self.refine = ResidualBlock(channels, prelu_init)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = self.stem(x)
        branches = [
            signed_power(feats, g, self.bank.epsilon) for g in self.bank.gammas
        ]
        return self.refine(self.fuse(torch.cat(branches, dim=1)))


class StretchBranch(nn.Module):
    """Stem conv, three percentile-stretch views, 1x1 fusion, residual block."""

    def __init__(
        self,
        channels: int,
        triples: tuple[OLSParams, ...],
        prelu_init: float = 0.25,
    ):
        super().__init__()
        self.triples = tuple(triples)
        self.stem = nn.Conv2d(3, channels, 3, padding=1)
        self.fuse = nn.Conv2d(len(self.triples) * channels, channels, 1)
        self.refine = ResidualBlock(channels, prelu_init)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = self.stem(x)
        branches = [feature_stretch(feats, p) for p in self.triples]
        return self.refine(self.fuse(torch.cat(branches, dim=1)))


class ContextBranch(nn.Module):
    """Stem conv, four parallel dilated convs, 1x1 fusion, residual block."""

    def __init__(
        self, channels: int, rates: tuple[int, ...], prelu_init: float = 0.25
    ):
        super().__init__()
        self.stem = nn.Conv2d(3, channels, 3, padding=1)
        self.atrous = nn.ModuleList(
            nn.Conv2d(channels, channels, 3, padding=r, dilation=r) for r in rates
        )
        self.fuse = nn.Conv2d(len(rates) * channels, channels, 1)
        self.refine = ResidualBlock(channels, prelu_init)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = self.stem(x)
        branches = [conv(feats) for conv in self.atrous]
        return self.refine(self.fuse(torch.cat(branches, dim=1)))


class PlainBranch(nn.Module):
    """Bare conv stem; stands in for a disabled branch in ablations."""

    def __init__(self, channels: int):
        super().__init__()
        self.stem = nn.Conv2d(3, channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.stem(x)


class FusionUNet(nn.Module):
    """Three-scale encoder-decoder over the fused branch features.

    Branch fusion adds the detail and color streams, concatenates the
    context stream, and mixes with a 1x1 conv. Scales shrink by 2x max
    pooling and grow back by bilinear upsampling; skips add the matching
    encoder activation. The head conv emits RGB, truncated to [0, 1].
    """

    def __init__(self, channels: tuple[int, int, int], prelu_init: float = 0.25):
        super().__init__()
        c0, c1, c2 = channels
        self.fuse_in = nn.Conv2d(2 * c0, c0, 1)
        self.enc1 = ResidualBlock(c0, prelu_init)
        self.down1 = ConvBlock(c0, c1, prelu_init)
        self.enc2 = ResidualBlock(c1, prelu_init)
        self.down2 = ConvBlock(c1, c2, prelu_init)
        self.bottleneck = ResidualBlock(c2, prelu_init)
        self.up2 = ConvBlock(c2, c1, prelu_init)
        self.dec2 = ResidualBlock(c1, prelu_init)
        self.up1 = ConvBlock(c1, c0, prelu_init)
        self.dec1 = ResidualBlock(c0, prelu_init)
        self.head = nn.Conv2d(c0, 3, 3, padding=1)
        self.pool = nn.MaxPool2d(2)

    @staticmethod
    def _upx2(x: torch.Tensor) -> torch.Tensor:
        return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)

    def forward(
        self, detail: torch.Tensor, color: torch.Tensor, context: torch.Tensor
    ) -> torch.Tensor:
        if not detail.shape == color.shape == context.shape:
            raise ShapeMismatch("branch features must share one shape")
        h, w = detail.shape[-2:]
        if h % 4 != 0 or w % 4 != 0:
            raise IndivisibleSpatialDims(
                f"spatial dims must be divisible by 4, got {h}x{w}"
            )
        f = self.fuse_in(torch.cat([detail + color, context], dim=1))
        e1 = self.enc1(f)
        e2 = self.enc2(self.down1(self.pool(e1)))
        btm = self.bottleneck(self.down2(self.pool(e2)))
        d2 = self.dec2(self.up2(self._upx2(btm)) + e2)
        d1 = self.dec1(self.up1(self._upx2(d2)) + e1)
        return self.head(d1).clamp(0.0, 1.0)


class SceneRecoveryNet(nn.Module):
    """Branches plus fusion; input and output are B,3,H,W in [0, 1]."""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        c = config.base_channels
        self.detail = (
            GammaBranch(c, config.gamma_bank, config.prelu_init)
            if config.enable_detail_branch
            else PlainBranch(c)
        )
        self.color = (
            StretchBranch(c, config.ols_triples, config.prelu_init)
            if config.enable_color_branch
            else PlainBranch(c)
        )
        self.context = (
            ContextBranch(c, config.atrous_rates, config.prelu_init)
            if config.enable_context_branch
            else PlainBranch(c)
        )
        self.fusion = FusionUNet(config.edfm_channels, config.prelu_init)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != 3:
            raise ShapeMismatch(f"expected B,3,H,W input, got {tuple(x.shape)}")
        return self.fusion(self.detail(x), self.color(x), self.context(x))


def build_network(config: NetworkConfig) -> SceneRecoveryNet:
    return SceneRecoveryNet(config)


def init_parameters(net: nn.Module, seed: int, prelu_init: float = 0.25) -> None:
    """Deterministic init: fan-in-scaled uniform convs, unit norms, fixed slope.

    Parameters are filled walking modules in name order, so the layout of
    the network (not Python dict order) decides the stream.
    """
    rng = np.random.default_rng(seed)
    with torch.no_grad():
        for _, mod in sorted(net.named_modules(), key=lambda kv: kv[0]):
            if isinstance(mod, nn.Conv2d):
                fan_in = mod.in_channels * mod.kernel_size[0] * mod.kernel_size[1]
                bound = 1.0 / math.sqrt(fan_in)
                w = rng.uniform(-bound, bound, size=tuple(mod.weight.shape))
                mod.weight.copy_(torch.from_numpy(w.astype(np.float32)))
                if mod.bias is not None:
                    b = rng.uniform(-bound, bound, size=tuple(mod.bias.shape))
                    mod.bias.copy_(torch.from_numpy(b.astype(np.float32)))
            elif isinstance(mod, ChannelNorm):
                mod.gain.fill_(1.0)
                mod.bias.fill_(0.0)
            elif isinstance(mod, nn.PReLU):
                mod.weight.fill_(prelu_init)


def network_parameters(net: nn.Module) -> dict[str, np.ndarray]:
    return {
        name: p.detach().cpu().numpy().copy() for name, p in net.named_parameters()
    }


def load_parameters(net: nn.Module, parameters: dict[str, np.ndarray]) -> None:
    own = dict(net.named_parameters())
    if set(own) != set(parameters):
        missing = sorted(set(own) - set(parameters))
        extra = sorted(set(parameters) - set(own))
        raise ConfigMismatch(
            f"parameter names do not match network (missing={missing}, extra={extra})"
        )
    with torch.no_grad():
        for name, p in own.items():
            arr = parameters[name]
            if tuple(arr.shape) != tuple(p.shape):
                raise ConfigMismatch(
                    f"{name}: checkpoint shape {arr.shape} != network {tuple(p.shape)}"
                )
            p.copy_(torch.from_numpy(np.asarray(arr)).to(p.dtype))


def init_checkpoint(config: NetworkConfig, seed: int) -> Checkpoint:
    """Freshly initialized checkpoint, deterministic per seed."""
    net = build_network(config)
    init_parameters(net, seed, config.prelu_init)
    return Checkpoint(
        config=config,
        parameters=network_parameters(net),
        training_meta={"epochs": 0, "seed": seed, "loss_weights": None},
    )


def network_from_checkpoint(ckpt: Checkpoint) -> SceneRecoveryNet:
    net = build_network(ckpt.config)
    load_parameters(net, ckpt.parameters)
    net.eval()
    return net


def checkpoint_from_network(
    net: SceneRecoveryNet, config: NetworkConfig, training_meta: dict
) -> Checkpoint:
    return Checkpoint(
        config=config, parameters=network_parameters(net), training_meta=training_meta
    )


# --- config (de)serialization ------------------------------------------------


def config_to_dict(config: NetworkConfig) -> dict:
    return {
        "base_channels": config.base_channels,
        "gamma_bank": {
            "gammas": list(config.gamma_bank.gammas),
            "epsilon": config.gamma_bank.epsilon,
        },
        "ols_triples": [
            {
                "p_min": t.p_min,
                "p_max": t.p_max,
                "p_a_min": t.p_a_min,
                "p_a_max": t.p_a_max,
            }
            for t in config.ols_triples
        ],
        "atrous_rates": list(config.atrous_rates),
        "edfm_channels": list(config.edfm_channels),
        "prelu_init": config.prelu_init,
        "enable_detail_branch": config.enable_detail_branch,
        "enable_color_branch": config.enable_color_branch,
        "enable_context_branch": config.enable_context_branch,
    }


def config_from_dict(data: dict) -> NetworkConfig:
    return NetworkConfig(
        base_channels=int(data["base_channels"]),
        gamma_bank=GammaBank(
            gammas=tuple(data["gamma_bank"]["gammas"]),
            epsilon=float(data["gamma_bank"]["epsilon"]),
        ),
        ols_triples=tuple(OLSParams(**t) for t in data["ols_triples"]),
        atrous_rates=tuple(int(r) for r in data["atrous_rates"]),
        edfm_channels=tuple(int(c) for c in data["edfm_channels"]),
        prelu_init=float(data["prelu_init"]),
        enable_detail_branch=bool(data.get("enable_detail_branch", True)),
        enable_color_branch=bool(data.get("enable_color_branch", True)),
        enable_context_branch=bool(data.get("enable_context_branch", True)),
    )


# --- checkpoint container -----------------------------------------------------

_EPOCH_STAMP = (1980, 1, 1, 0, 0, 0)  # fixed so identical runs give identical bytes


def _zip_write(zf: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH_STAMP)
    info.compress_type = zipfile.ZIP_STORED
    zf.writestr(info, payload)


def save_checkpoint(ckpt: Checkpoint, path: str | os.PathLike) -> None:
    """Write the checkpoint container (see README for the field layout).

    The write is atomic (temp file, then rename) and byte-deterministic:
    entry order, timestamps, and compression are all fixed.
    """
    manifest = {
        name: {"dtype": str(arr.dtype), "shape": list(arr.shape)}
        for name, arr in sorted(ckpt.parameters.items())
    }
    tmp = str(path) + ".tmp"
    with zipfile.ZipFile(tmp, "w") as zf:
        _zip_write(
            zf,
            "config.json",
            json.dumps(config_to_dict(ckpt.config), indent=1, sort_keys=True).encode(),
        )
        _zip_write(
            zf,
            "manifest.json",
            json.dumps(manifest, indent=1, sort_keys=True).encode(),
        )
        _zip_write(
            zf,
            "training_meta.json",
            json.dumps(ckpt.training_meta, indent=1, sort_keys=True).encode(),
        )
        for name in sorted(ckpt.parameters):
            buf = io.BytesIO()
            np.save(buf, ckpt.parameters[name], allow_pickle=False)
            _zip_write(zf, f"params/{name}.npy", buf.getvalue())
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such checkpoint: {path}")
    with zipfile.ZipFile(path) as zf:
        config = config_from_dict(json.loads(zf.read("config.json")))
        manifest = json.loads(zf.read("manifest.json"))
        meta = json.loads(zf.read("training_meta.json"))
        params: dict[str, np.ndarray] = {}
        for name, info in manifest.items():
            with zf.open(f"params/{name}.npy") as fh:
                arr = np.load(fh, allow_pickle=False)
            if list(arr.shape) != info["shape"] or str(arr.dtype) != info["dtype"]:
                raise ConfigMismatch(f"{path}: manifest disagrees with array {name}")
            params[name] = arr
    ckpt = Checkpoint(config=config, parameters=params, training_meta=meta)
    # shape-check against a freshly built network so mismatches fail at load
    network_from_checkpoint(ckpt)
    return ckpt


# --- whole-image restoration ---------------------------------------------------


def _pad_to_multiple(x: torch.Tensor, multiple: int = 4) -> tuple[torch.Tensor, int, int]:
    h, w = x.shape[-2:]
    ph = (multiple - h % multiple) % multiple
    pw = (multiple - w % multiple) % multiple
    if ph or pw:
        mode = "reflect" if min(h, w) > max(ph, pw) else "replicate"
        x = F.pad(x, (0, pw, 0, ph), mode=mode)
    return x, h, w


def restore_image(net: SceneRecoveryNet, img: np.ndarray) -> np.ndarray:
    """Run the network on one HWC image; any size (padded internally)."""
    x = torch.from_numpy(np.ascontiguousarray(hwc_to_bchw(img), dtype=np.float32))
    with torch.no_grad():
        x, h, w = _pad_to_multiple(x, 4)
        y = net(x)[:, :, :h, :w]
    return bchw_to_hwc(y.numpy()).astype(np.float32)
