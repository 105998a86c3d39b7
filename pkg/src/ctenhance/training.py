"""Training loop: Adam over patch crops with a selectable loss arm.

Everything that can vary run to run is pinned by the config seed: model
init, batch order, crop offsets. Checkpoints carry optimizer moments and
both RNG states, so a resumed run continues exactly where the original
would have gone.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .data.slices import PairedSample, normalize_hu
from .metrics.ranking import MetricReport, aggregate_report
from .models.network import EnhancementNetwork, ModelConfig
from .perception.backbone import FeatureBackbone
from .perception.losses import LossWeights, charbonnier_loss, mse_loss, perceptual_loss

LOSS_ARMS = ("mse", "charbonnier", "perceptual")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.99
    adam_eps: float = 1e-8
    batch_size: int = 2
    total_iterations: int = 45000
    validate_every: int = 8000
    loss_arm: str = "perceptual"
    seed: int = 0
    patch_size: int | None = 64
    grad_clip: float = 0.0
    pixel_weight: float = 0.0
    charbonnier_eps: float = 1e-3
    loss_weights: LossWeights = field(default_factory=LossWeights)
    backbone_weights: str | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0 < b < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {b}")
        for name in ("batch_size", "total_iterations", "validate_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.loss_arm not in LOSS_ARMS:
            raise ValueError(f"loss_arm must be one of {LOSS_ARMS}, got {self.loss_arm!r}")
        if self.patch_size is not None and (self.patch_size < 16 or self.patch_size % 16):
            raise ValueError(f"patch_size must be a multiple of 16, got {self.patch_size}")
        if self.grad_clip < 0 or self.pixel_weight < 0:
            raise ValueError("grad_clip and pixel_weight must be >= 0")

    def to_dict(self) -> dict:
        payload = {
            k: getattr(self, k)
            for k in (
                "learning_rate", "beta1", "beta2", "adam_eps", "batch_size",
                "total_iterations", "validate_every", "loss_arm", "seed",
                "patch_size", "grad_clip", "pixel_weight", "charbonnier_eps",
                "backbone_weights",
            )
        }
        payload["loss_weights"] = self.loss_weights.as_dict()
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        payload = dict(payload)
        lw = payload.pop("loss_weights", None)
        weights = (
            LossWeights(lambda_low=lw["low"], lambda_mid=lw["mid"], lambda_high=lw["high"])
            if lw
            else LossWeights()
        )
        return cls(loss_weights=weights, **payload)


@dataclass
class TrainResult:
    model: EnhancementNetwork
    losses: list[float]
    validations: list[tuple[int, MetricReport]]
    checkpoint: dict
    checksums: dict[str, float]


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the path of the diagnostic snapshot."""

    def __init__(self, iteration: int, snapshot: str | None):
        self.iteration = iteration
        self.snapshot = snapshot
        where = f"; snapshot at {snapshot}" if snapshot else ""
        super().__init__(f"non-finite loss at iteration {iteration}{where}")


def build_loss(
    config: TrainConfig, backbone: FeatureBackbone | None
) -> Callable[[torch.Tensor, torch.Tensor], torch.Tensor]:
    """The configured loss arm as a (pred, gt) -> scalar callable."""
    if config.loss_arm == "mse":
        return mse_loss
    if config.loss_arm == "charbonnier":
        return lambda pred, gt: charbonnier_loss(pred, gt, config.charbonnier_eps)
    if backbone is None:
        raise ValueError("perceptual loss arm requires a feature backbone")

    def loss_fn(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
        total = perceptual_loss(backbone, pred, gt, config.loss_weights)
        if config.pixel_weight > 0:
            total = total + config.pixel_weight * mse_loss(pred, gt)
        return total

    return loss_fn


def validation_schedule(total_iterations: int, validate_every: int) -> list[int]:
    """Iterations at which validation fires."""
    return list(range(validate_every, total_iterations + 1, validate_every))


def _sample_batch(
    pairs: Sequence[PairedSample],
    rng: np.random.Generator,
    batch_size: int,
    patch_size: int | None,
) -> tuple[torch.Tensor, torch.Tensor]:
    lows, highs = [], []
    for idx in rng.integers(0, len(pairs), size=batch_size):
        pair = pairs[int(idx)]
        low = pair.ldct.pixels
        high = pair.hdct.pixels
        if patch_size is not None and min(low.shape) > patch_size:
            top = int(rng.integers(0, low.shape[0] - patch_size + 1))
            left = int(rng.integers(0, low.shape[1] - patch_size + 1))
            window = (slice(top, top + patch_size), slice(left, left + patch_size))
            low, high = low[window], high[window]
        lows.append(normalize_hu(low))
        highs.append(normalize_hu(high))
    to_tensor = lambda arrs: torch.from_numpy(np.stack(arrs)).to(torch.float32)[:, None]
    return to_tensor(lows), to_tensor(highs)


def enhance_image(model: EnhancementNetwork, image01: torch.Tensor) -> torch.Tensor:
    """Forward pass in eval mode, clamped back to the valid display range."""
    model.eval()
    with torch.no_grad():
        out = model(image01)
    return out.clamp(0.0, 1.0)


def validate(
    model: EnhancementNetwork, pairs: Sequence[PairedSample], method: str = "model"
) -> MetricReport:
    """Full-reference metrics of model outputs against the normal-dose slices."""
    from .metrics.fidelity import psnr, ssim, vif_p

    if not pairs:
        raise ValueError("validation needs at least one pair")
    per_image = []
    for pair in pairs:
        low = torch.from_numpy(normalize_hu(pair.ldct.pixels)).to(torch.float32)
        pred = enhance_image(model, low[None, None])[0, 0].numpy().astype(np.float64)
        ref = normalize_hu(pair.hdct.pixels)
        per_image.append(
            {"psnr": psnr(ref, pred), "ssim": ssim(ref, pred), "vif_p": vif_p(ref, pred)}
        )
    return aggregate_report(method, per_image)


def frozen_checksums(model: EnhancementNetwork, backbone: FeatureBackbone | None) -> dict[str, float]:
    sums = {"semantic_encoder": model.extractor.encoder.checksum()}
    if backbone is not None:
        sums["loss_backbone"] = backbone.checksum()
    return sums


def save_checkpoint(path: str | Path, checkpoint: dict) -> None:
    torch.save(checkpoint, path)


def load_checkpoint(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no checkpoint at {path}")
    # Checkpoints are this package's own artifacts; they carry config dicts
    # and RNG states, which need full (non-weights-only) deserialization.
    return torch.load(path, map_location="cpu", weights_only=False)


def build_model(model_config: ModelConfig, seed: int) -> EnhancementNetwork:
    """Deterministic model construction: same config + seed, same weights."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return EnhancementNetwork(model_config)


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    train_pairs: Sequence[PairedSample],
    val_pairs: Sequence[PairedSample] = (),
    out_dir: str | Path | None = None,
    resume_from: str | Path | None = None,
) -> TrainResult:
    """Run the optimization loop; returns the trained model plus its history.

    With ``out_dir`` set, writes ``checkpoint.pt`` and an append-only
    ``train_log.jsonl`` of {iteration, loss, wall_time} records there.
    """
    if not train_pairs:
        raise ValueError("train split is empty")
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    if resume_from is not None:
        state = load_checkpoint(resume_from)
        model_config = ModelConfig.from_dict(state["model_config"])
        resumed = TrainConfig.from_dict(state["train_config"])
        # Everything reproducibility-relevant comes from the checkpoint; the
        # caller may only extend how far to train.
        if train_config.total_iterations != resumed.total_iterations:
            resumed = dataclasses.replace(
                resumed, total_iterations=train_config.total_iterations
            )
        train_config = resumed

    model = build_model(model_config, train_config.seed)
    backbone = (
        FeatureBackbone(train_config.backbone_weights, fallback_seed=train_config.seed)
        if train_config.loss_arm == "perceptual"
        else None
    )
    loss_fn = build_loss(train_config, backbone)
    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(
        params,
        lr=train_config.learning_rate,
        betas=(train_config.beta1, train_config.beta2),
        eps=train_config.adam_eps,
    )

    torch.manual_seed(train_config.seed)
    rng = np.random.default_rng(train_config.seed)
    start_iteration = 0
    losses: list[float] = []
    if resume_from is not None:
        model.load_state_dict(state["model_state"])
        optimizer.load_state_dict(state["optimizer_state"])
        torch.set_rng_state(state["torch_rng"])
        rng.bit_generator.state = state["numpy_rng"]
        start_iteration = state["iteration"]

    checksums_before = frozen_checksums(model, backbone)
    validations: list[tuple[int, MetricReport]] = []
    log_file = (out_path / "train_log.jsonl").open("a") if out_path is not None else None
    start_time = time.monotonic()

    def make_checkpoint(iteration: int) -> dict:
        return {
            "iteration": iteration,
            "model_config": model_config.to_dict(),
            "train_config": train_config.to_dict(),
            "model_state": model.state_dict(),
            "optimizer_state": optimizer.state_dict(),
            "torch_rng": torch.get_rng_state(),
            "numpy_rng": rng.bit_generator.state,
        }

    try:
        for iteration in range(start_iteration + 1, train_config.total_iterations + 1):
            low, high = _sample_batch(
                train_pairs, rng, train_config.batch_size, train_config.patch_size
            )
            model.train()
            optimizer.zero_grad()
            loss = loss_fn(model(low), high)
            value = float(loss.detach())
            if not np.isfinite(value):
                snapshot = None
                if out_path is not None:
                    snapshot = str(out_path / "diverged.pt")
                    save_checkpoint(snapshot, make_checkpoint(iteration))
                raise TrainingDiverged(iteration, snapshot)
            loss.backward()
            if train_config.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(params, train_config.grad_clip)
            optimizer.step()

            losses.append(value)
            if log_file is not None:
                record = {
                    "iteration": iteration,
                    "loss": value,
                    "wall_time": time.monotonic() - start_time,
                }
                log_file.write(json.dumps(record) + "\n")
                log_file.flush()

            if val_pairs and iteration % train_config.validate_every == 0:
                validations.append((iteration, validate(model, val_pairs)))
    finally:
        if log_file is not None:
            log_file.close()

    checksums_after = frozen_checksums(model, backbone)
    for name, before in checksums_before.items():
        if checksums_after[name] != before:
            raise RuntimeError(f"frozen weights changed during training: {name}")

    checkpoint = make_checkpoint(train_config.total_iterations)
    if out_path is not None:
        save_checkpoint(out_path / "checkpoint.pt", checkpoint)
    return TrainResult(
        model=model,
        losses=losses,
        validations=validations,
        checkpoint=checkpoint,
        checksums=checksums_after,
    )
