"""Dataset assembly, the training loop, and the sweep/ablation machinery.

Degraded images are synthesized on the fly each epoch from per-(epoch,
entry) derived seeds, so a (config, manifest, seed) triple pins the entire
run: data order, crops, degradations, init, and updates.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from .degrade import KINDS, DegradationSpec, synth_pair
from .errors import DomainError, EmptyCorpus, NonFiniteLoss
from .imaging import clamp01, load_depth, load_image
from .losses import (
    LossWeights,
    SurrogateExtractor,
    load_perceptual_extractor,
    total_loss,
)
from .metrics import psnr, ssim
from .net import (
    Checkpoint,
    NetworkConfig,
    build_network,
    checkpoint_from_network,
    config_from_dict,
    config_to_dict,
    init_parameters,
    network_from_checkpoint,
    restore_image,
    save_checkpoint,
)
from .priors import OLSParams, optimized_linear_stretch

__all__ = [
    "TrainConfig",
    "ManifestEntry",
    "DatasetManifest",
    "build_manifest",
    "TrainLog",
    "train",
    "SweepReport",
    "ols_sweep",
    "AblationReport",
    "MODULE_ABLATION_ROWS",
    "LOSS_ABLATION_ROWS",
    "run_ablation",
]


def _uniform_mix() -> dict[str, float]:
    return {k: 1.0 / len(KINDS) for k in KINDS}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    lr_drop_epochs: tuple[int, ...] = (30, 60, 90)
    lr_drop_factor: float = 10.0
    batch_size: int = 4
    crop_size: int = 64
    seed: int = 0
    loss_weights: LossWeights = field(default_factory=LossWeights)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    scene_mix: dict[str, float] = field(default_factory=_uniform_mix)
    max_steps: int | None = None
    extractor_seed: int = 0
    perceptual_weights: str | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise DomainError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise DomainError(f"lr must be > 0, got {self.lr}")
        drops = self.lr_drop_epochs
        if any(b <= a for a, b in zip(drops, drops[1:])):
            raise DomainError(f"drop epochs must be strictly increasing: {drops}")
        if drops and drops[-1] >= self.epochs:
            raise DomainError(
                f"drop epochs must lie before the last epoch: {drops} vs {self.epochs}"
            )
        if self.batch_size < 1 or self.crop_size < 4:
            raise DomainError("batch_size must be >= 1 and crop_size >= 4")
        if self.crop_size % 4:
            raise DomainError(f"crop_size must be divisible by 4: {self.crop_size}")
        if set(self.scene_mix) - set(KINDS):
            raise DomainError(f"unknown scene kinds in mix: {self.scene_mix}")
        if abs(sum(self.scene_mix.values()) - 1.0) > 1e-9:
            raise DomainError(f"scene mix must sum to 1, got {self.scene_mix}")

    def lr_at(self, epoch: int) -> float:
        """Closed-form schedule: lr / factor**(number of drop epochs passed)."""
        k = sum(1 for d in self.lr_drop_epochs if d <= epoch)
        return self.lr / self.lr_drop_factor**k


def train_config_to_dict(cfg: TrainConfig) -> dict:
    return {
        "epochs": cfg.epochs,
        "lr": cfg.lr,
        "lr_drop_epochs": list(cfg.lr_drop_epochs),
        "lr_drop_factor": cfg.lr_drop_factor,
        "batch_size": cfg.batch_size,
        "crop_size": cfg.crop_size,
        "seed": cfg.seed,
        "loss_weights": {
            "lambda_l1": cfg.loss_weights.lambda_l1,
            "lambda_color": cfg.loss_weights.lambda_color,
            "lambda_cr": cfg.loss_weights.lambda_cr,
        },
        "network": config_to_dict(cfg.network),
        "scene_mix": dict(cfg.scene_mix),
        "max_steps": cfg.max_steps,
        "extractor_seed": cfg.extractor_seed,
        "perceptual_weights": cfg.perceptual_weights,
    }


def train_config_from_dict(data: dict) -> TrainConfig:
    return TrainConfig(
        epochs=int(data["epochs"]),
        lr=float(data["lr"]),
        lr_drop_epochs=tuple(int(e) for e in data["lr_drop_epochs"]),
        lr_drop_factor=float(data["lr_drop_factor"]),
        batch_size=int(data["batch_size"]),
        crop_size=int(data["crop_size"]),
        seed=int(data["seed"]),
        loss_weights=LossWeights(**data["loss_weights"]),
        network=config_from_dict(data["network"]),
        scene_mix={k: float(v) for k, v in data["scene_mix"].items()},
        max_steps=data.get("max_steps"),
        extractor_seed=int(data.get("extractor_seed", 0)),
        perceptual_weights=data.get("perceptual_weights"),
    )


def save_train_config(cfg: TrainConfig, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        json.dump(train_config_to_dict(cfg), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_train_config(path: str | os.PathLike) -> TrainConfig:
    with open(path) as fh:
        return train_config_from_dict(json.load(fh))


# --- manifests -----------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    clean: str
    depth: str | None = None
    kind: str | None = None
    degraded: str | None = None
    split: str = "train"

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise DomainError(f"split must be train or test, got {self.split!r}")
        if self.kind is None and self.degraded is None:
            raise DomainError(f"{self.clean}: entry needs a scene kind or a "
                              "pre-degraded file")
        if self.kind is not None and self.kind not in KINDS:
            raise DomainError(f"unknown scene kind {self.kind!r}")
        if (
            self.kind in ("haze", "sand")
            and self.degraded is None
            and self.depth is None
        ):
            raise DomainError(f"{self.clean}: kind {self.kind} needs depth")


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def split(self, tag: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == tag]


def save_manifest(manifest: DatasetManifest, path: str | os.PathLike) -> None:
    payload = {
        "entries": [
            {
                "clean": e.clean,
                "depth": e.depth,
                "kind": e.kind,
                "degraded": e.degraded,
                "split": e.split,
            }
            for e in manifest.entries
        ]
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_manifest(path: str | os.PathLike) -> DatasetManifest:
    with open(path) as fh:
        data = json.load(fh)
    return DatasetManifest(entries=[ManifestEntry(**e) for e in data["entries"]])


def _largest_remainder(total: int, mix: dict[str, float]) -> dict[str, int]:
    kinds = sorted(mix)
    exact = {k: total * mix[k] for k in kinds}
    counts = {k: int(math.floor(exact[k])) for k in kinds}
    leftovers = sorted(kinds, key=lambda k: (counts[k] - exact[k], k))
    i = 0
    while sum(counts.values()) < total:
        counts[leftovers[i % len(kinds)]] += 1
        i += 1
    return counts


def build_manifest(
    clean_root: str | os.PathLike,
    depth_root: str | os.PathLike | None,
    spec_distribution: dict[str, float],
    seed: int,
    test_fraction: float = 0.0,
) -> DatasetManifest:
    """Assign scene kinds to clean images per the requested mix.

    Counts land within one image of the exact proportions; kind assignment
    and the optional train/test split are deterministic per seed.
    """
    names = sorted(
        f for f in os.listdir(clean_root) if f.lower().endswith(".png")
    )
    if not names:
        raise EmptyCorpus(f"no PNG images under {clean_root}")
    counts = _largest_remainder(len(names), spec_distribution)
    kinds: list[str] = []
    for k in sorted(counts):
        kinds.extend([k] * counts[k])
    rng = np.random.default_rng(seed)
    rng.shuffle(kinds)
    order = rng.permutation(len(names))
    n_test = int(round(test_fraction * len(names)))
    entries = []
    for pos, idx in enumerate(order):
        name = names[idx]
        kind = kinds[pos]
        clean_path = os.path.join(str(clean_root), name)
        depth_path = None
        if kind in ("haze", "sand"):
            if depth_root is None:
                raise EmptyCorpus(f"{clean_path}: kind {kind} needs a depth root")
            depth_path = os.path.join(str(depth_root), name)
            if not os.path.exists(depth_path):
                raise EmptyCorpus(f"{clean_path}: no depth map at {depth_path}")
        split = "test" if pos >= len(names) - n_test else "train"
        entries.append(
            ManifestEntry(
                clean=clean_path, depth=depth_path, kind=kind, split=split
            )
        )
    entries.sort(key=lambda e: e.clean)
    return DatasetManifest(entries=entries)


# --- training ------------------------------------------------------------------


@dataclass
class TrainLog:
    """Per-epoch means of the loss components, plus the lr in force."""

    rows: list[tuple[int, float, float, float, float, float]] = field(
        default_factory=list
    )

    def to_csv(self) -> str:
        lines = ["epoch,lr,total,l1,color,cr"]
        for epoch, lr, tot, l1, col, cr in self.rows:
            lines.append(f"{epoch},{lr!r},{tot!r},{l1!r},{col!r},{cr!r}")
        return "\n".join(lines) + "\n"


def _entry_pair(entry: ManifestEntry, seed_parts: list[int]):
    clean = load_image(entry.clean)
    if entry.degraded is not None:
        return load_image(entry.degraded), clean
    depth = load_depth(entry.depth) if entry.depth is not None else None
    spec = DegradationSpec(kind=entry.kind)
    degraded, clean = synth_pair(clean, depth, spec, seed=seed_parts)
    return degraded.astype(np.float32), clean


def _crop_pair(degraded, clean, size: int, rng: np.random.Generator):
    h, w = clean.shape[:2]
    if h < size or w < size:
        ph, pw = max(size - h, 0), max(size - w, 0)
        pad = ((0, ph), (0, pw), (0, 0))
        degraded = np.pad(degraded, pad, mode="reflect")
        clean = np.pad(clean, pad, mode="reflect")
        h, w = clean.shape[:2]
    y = int(rng.integers(0, h - size + 1))
    x = int(rng.integers(0, w - size + 1))
    return (
        degraded[y : y + size, x : x + size],
        clean[y : y + size, x : x + size],
    )


def _build_extractor(cfg: TrainConfig):
    if cfg.loss_weights.lambda_cr == 0.0:
        return None
    if cfg.perceptual_weights is not None:
        return load_perceptual_extractor(cfg.perceptual_weights)
    return SurrogateExtractor(seed=cfg.extractor_seed)


def train(
    config: TrainConfig,
    manifest: DatasetManifest,
    out_dir: str | os.PathLike | None = None,
    progress=None,
) -> tuple[Checkpoint, TrainLog]:
    """Adam training over the manifest's train split.

    Deterministic given (config, manifest): per-epoch entry order comes
    from (seed, epoch), per-entry crops and degradations from (seed, epoch,
    entry index). The checkpoint is rewritten atomically at each epoch end
    when out_dir is given; a non-finite loss aborts with the step index.
    """
    entries = manifest.split("train")
    if not entries:
        raise EmptyCorpus("manifest has no train entries")
    torch.use_deterministic_algorithms(True)
    net = build_network(config.network)
    init_parameters(net, config.seed, config.network.prelu_init)
    net.train()
    extractor = _build_extractor(config)
    opt = torch.optim.Adam(
        net.parameters(), lr=config.lr, betas=(0.9, 0.999), eps=1e-8
    )
    log = TrainLog()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    step = 0
    stop = False
    for epoch in range(1, config.epochs + 1):
        lr = config.lr_at(epoch)
        for group in opt.param_groups:
            group["lr"] = lr
        order = np.random.default_rng([config.seed, epoch]).permutation(len(entries))
        sums = np.zeros(4)
        batches = 0
        for start in range(0, len(order), config.batch_size):
            idxs = order[start : start + config.batch_size]
            deg_list, cln_list = [], []
            for idx in idxs:
                item_rng = np.random.default_rng([config.seed, epoch, int(idx)])
                degraded, clean = _entry_pair(
                    entries[idx], [config.seed, epoch, int(idx)]
                )
                degraded, clean = _crop_pair(
                    degraded, clean, config.crop_size, item_rng
                )
                deg_list.append(np.transpose(degraded, (2, 0, 1)))
                cln_list.append(np.transpose(clean, (2, 0, 1)))
            deg = torch.from_numpy(np.stack(deg_list).astype(np.float32))
            cln = torch.from_numpy(np.stack(cln_list).astype(np.float32))
            restored = net(deg)
            total, (p_l1, p_col, p_cr) = total_loss(
                restored, deg, cln, extractor, config.loss_weights
            )
            if not torch.isfinite(total):
                raise NonFiniteLoss(step, total.item())
            opt.zero_grad()
            total.backward()
            opt.step()
            step += 1
            sums += [total.item(), p_l1.item(), p_col.item(), p_cr.item()]
            batches += 1
            if config.max_steps is not None and step >= config.max_steps:
                stop = True
                break
        means = sums / max(batches, 1)
        log.rows.append((epoch, lr, *(float(v) for v in means)))
        if progress is not None:
            progress(epoch, lr, means[0])
        if out_dir is not None:
            meta = {
                "epochs": epoch,
                "seed": config.seed,
                "loss_weights": {
                    "lambda_l1": config.loss_weights.lambda_l1,
                    "lambda_color": config.loss_weights.lambda_color,
                    "lambda_cr": config.loss_weights.lambda_cr,
                },
            }
            ckpt = checkpoint_from_network(net, config.network, meta)
            save_checkpoint(ckpt, os.path.join(str(out_dir), "checkpoint.ckpt"))
            with open(os.path.join(str(out_dir), "train_log.csv"), "w") as fh:
                fh.write(log.to_csv())
        if stop:
            break
    meta = {
        "epochs": log.rows[-1][0] if log.rows else 0,
        "seed": config.seed,
        "loss_weights": {
            "lambda_l1": config.loss_weights.lambda_l1,
            "lambda_color": config.loss_weights.lambda_color,
            "lambda_cr": config.loss_weights.lambda_cr,
        },
    }
    return checkpoint_from_network(net, config.network, meta), log


# --- stretch-parameter sweep -----------------------------------------------------


@dataclass
class SweepReport:
    """PSNR/SSIM of stretch-only restoration per scene and grid point."""

    rows: list[dict] = field(default_factory=list)

    def best(self) -> dict[str, tuple[float, float]]:
        out: dict[str, tuple[float, float]] = {}
        for scene in sorted({r["scene"] for r in self.rows}):
            scene_rows = [r for r in self.rows if r["scene"] == scene]
            top = max(scene_rows, key=lambda r: r["psnr"])
            out[scene] = (top["p_a_min"], top["p_a_max"])
        return out

    def to_csv(self) -> str:
        lines = ["scene,p_a_min,p_a_max,psnr,ssim,psnr_norm,ssim_norm"]
        for r in self.rows:
            lines.append(
                f"{r['scene']},{r['p_a_min']!r},{r['p_a_max']!r},"
                f"{r['psnr']!r},{r['ssim']!r},{r['psnr_norm']!r},{r['ssim_norm']!r}"
            )
        return "\n".join(lines) + "\n"


def _minmax_norm(values: list[float]) -> list[float]:
    lo, hi = min(values), max(values)
    if hi <= lo:
        return [1.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def ols_sweep(
    grid: list[tuple[float, float]],
    eval_pairs: dict[str, list[tuple[np.ndarray, np.ndarray]]],
    p_min: float = 0.01,
    p_max: float = 0.99,
) -> SweepReport:
    """Score stretch-only restoration across adjustment-fraction pairs.

    For each scene the PSNR/SSIM columns are min-max normalized to [0, 1]
    (a single grid point normalizes to 1 by convention).
    """
    if not grid:
        raise DomainError("sweep grid is empty")
    report = SweepReport()
    for scene in sorted(eval_pairs):
        pairs = eval_pairs[scene]
        scene_rows = []
        for a_min, a_max in grid:
            params = OLSParams(p_min, p_max, a_min, a_max)
            ps, ss = [], []
            for degraded, clean in pairs:
                restored = clamp01(optimized_linear_stretch(degraded, params))
                ps.append(psnr(restored, clean))
                ss.append(ssim(restored, clean))
            scene_rows.append(
                {
                    "scene": scene,
                    "p_a_min": float(a_min),
                    "p_a_max": float(a_max),
                    "psnr": float(np.mean(ps)),
                    "ssim": float(np.mean(ss)),
                }
            )
        for key in ("psnr", "ssim"):
            for row, norm in zip(
                scene_rows, _minmax_norm([r[key] for r in scene_rows])
            ):
                row[f"{key}_norm"] = norm
        report.rows.extend(scene_rows)
    return report


# --- ablations -------------------------------------------------------------------

# toggle layouts mirror the reference experiment tables:
# modules toggle (context, color, detail); losses toggle (l1, color, cr)
MODULE_ABLATION_ROWS = (
    (False, False, False),
    (True, False, False),
    (True, True, False),
    (True, False, True),
    (False, True, True),
    (True, True, True),
)
LOSS_ABLATION_ROWS = (
    (True, False, False),
    (True, True, False),
    (True, False, True),
    (True, True, True),
)


@dataclass
class AblationReport:
    kind: str
    columns: tuple[str, str, str]
    rows: list[dict] = field(default_factory=list)

    def to_csv(self) -> str:
        head = ",".join(self.columns)
        lines = [f"{head},psnr_mean,psnr_std,ssim_mean,ssim_std"]
        for r in self.rows:
            flags = ",".join("1" if r[c] else "0" for c in self.columns)
            lines.append(
                f"{flags},{r['psnr_mean']!r},{r['psnr_std']!r},"
                f"{r['ssim_mean']!r},{r['ssim_std']!r}"
            )
        return "\n".join(lines) + "\n"


def _eval_checkpoint(ckpt: Checkpoint, entries, base_seed: int):
    net = network_from_checkpoint(ckpt)
    ps, ss = [], []
    for idx, entry in enumerate(entries):
        degraded, clean = _entry_pair(entry, [base_seed, 0, idx])
        restored = restore_image(net, degraded.astype(np.float32))
        ps.append(psnr(restored, clean))
        ss.append(ssim(restored, clean))
    def _std(v):
        return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0
    return float(np.mean(ps)), _std(ps), float(np.mean(ss)), _std(ss)


def _module_variant(base: TrainConfig, toggles) -> TrainConfig:
    ctx, col, det = toggles
    net = base.network
    network = NetworkConfig(
        base_channels=net.base_channels,
        gamma_bank=net.gamma_bank,
        ols_triples=net.ols_triples,
        atrous_rates=net.atrous_rates,
        edfm_channels=net.edfm_channels,
        prelu_init=net.prelu_init,
        enable_detail_branch=det,
        enable_color_branch=col,
        enable_context_branch=ctx,
    )
    data = train_config_to_dict(base)
    data["network"] = config_to_dict(network)
    return train_config_from_dict(data)


def _loss_variant(base: TrainConfig, toggles) -> TrainConfig:
    l1, col, cr = toggles
    w = base.loss_weights
    data = train_config_to_dict(base)
    data["loss_weights"] = {
        "lambda_l1": w.lambda_l1 if l1 else 0.0,
        "lambda_color": w.lambda_color if col else 0.0,
        "lambda_cr": w.lambda_cr if cr else 0.0,
    }
    return train_config_from_dict(data)


def run_ablation(
    kind: str,
    base: TrainConfig,
    manifest: DatasetManifest,
    eval_split: str = "test",
    progress=None,
) -> AblationReport:
    """Train one variant per toggle row and score it on the chosen split."""
    if kind == "modules":
        toggle_rows = MODULE_ABLATION_ROWS
        columns = ("context", "color", "detail")
        make = _module_variant
    elif kind == "losses":
        toggle_rows = LOSS_ABLATION_ROWS
        columns = ("l1", "color", "cr")
        make = _loss_variant
    else:
        raise DomainError(f"ablation kind must be modules or losses, got {kind!r}")
    eval_entries = manifest.split(eval_split)
    if not eval_entries:
        raise EmptyCorpus(f"manifest has no {eval_split} entries")
    report = AblationReport(kind=kind, columns=columns)
    for toggles in toggle_rows:
        variant = make(base, toggles)
        ckpt, _ = train(variant, manifest)
        p_mean, p_std, s_mean, s_std = _eval_checkpoint(
            ckpt, eval_entries, base.seed
        )
        row = dict(zip(columns, toggles))
        row.update(
            psnr_mean=p_mean, psnr_std=p_std, ssim_mean=s_mean, ssim_std=s_std
        )
        report.rows.append(row)
        if progress is not None:
            progress(toggles, p_mean)
    return report
