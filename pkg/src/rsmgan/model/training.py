"""The reconstruction GAN: configuration, forward pass, training and inference."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np
import torch
from torch import nn

from ..mcm import ModelInputs, residual_first_channel
from .losses import GeneratorLoss, critic_loss, generator_loss, gradient_penalty
from .networks import Critic, Decoder, Encoder

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, details: dict):
        self.epoch = epoch
        self.details = details
        super().__init__(f"non-finite loss at epoch {epoch}: {details}")


@dataclass
class NetworkConfig:
    conv_channels: tuple[int, ...] = (32, 64, 128, 256)
    kernel_sizes: tuple[int, ...] = (3, 3, 3, 3)
    strides: tuple[int, ...] = (1, 2, 2, 2)
    critic_channels: tuple[int, ...] = (32, 64, 128)
    loss_weights: tuple[float, float, float] = (50.0, 1.0, 1.0)
    gp_coefficient: float = 10.0
    attention_rescale: float = 5.0
    lr: float = 1e-4
    betas: tuple[float, float] = (0.5, 0.9)
    epochs: int = 300
    batch_size: int = 32
    critic_updates_per_gen: int = 1
    seed: int = 0
    device: str = "cpu"

    def __post_init__(self):
        for name in ("conv_channels", "kernel_sizes", "strides", "critic_channels", "loss_weights", "betas"):
            setattr(self, name, tuple(getattr(self, name)))
        if not len(self.conv_channels) == len(self.kernel_sizes) == len(self.strides):
            raise ValueError("conv_channels, kernel_sizes and strides must have equal length")
        if any(w <= 0 for w in self.loss_weights) or len(self.loss_weights) != 3:
            raise ValueError("three positive loss weights are required")
        if self.gp_coefficient < 0:
            raise ValueError("gp_coefficient must be >= 0")
        if self.attention_rescale <= 0:
            raise ValueError("attention_rescale must be positive")
        if self.epochs < 0 or self.batch_size < 1 or self.critic_updates_per_gen < 0:
            raise ValueError("invalid training schedule")

    def spatial_sizes(self, n: int) -> list[int]:
        sizes, size = [], n
        for k, s in zip(self.kernel_sizes, self.strides):
            size = (size + 2 * (k // 2) - k) // s + 1
            sizes.append(size)
        return sizes

    def latent_dim(self, n: int) -> int:
        return self.conv_channels[-1] * self.spatial_sizes(n)[-1] ** 2

    def to_dict(self) -> dict:
        return asdict(self)


class RSMGAN(nn.Module):
    """Generator encoder/decoder, the second encoder and the critic."""

    def __init__(self, n: int, channels: int, config: NetworkConfig):
        super().__init__()
        if min(config.spatial_sizes(n)) < 1:
            raise ValueError(f"n={n} is too small for the configured conv stack")
        args = (channels, config.conv_channels, config.kernel_sizes, config.strides)
        self.n = n
        self.generator_encoder = Encoder(*args, rescale=config.attention_rescale)
        self.decoder = Decoder(*args)
        self.encoder = Encoder(*args, rescale=config.attention_rescale)
        self.critic = Critic(channels, n, config.critic_channels)

    def generator_parameters(self) -> Iterator[nn.Parameter]:
        for module in (self.generator_encoder, self.decoder, self.encoder):
            yield from module.parameters()

    def reconstruct(self, slots, mask=None):
        """``slots`` is ``(B, N, C, n, n)``; returns ``x'`` as ``(B, C, n, n)``, ``z`` and attention."""
        attended, weights = self.generator_encoder(slots, mask)
        x_rec = self.decoder(attended, self.n)
        return x_rec, attended[-1].flatten(1), weights

    def encode_reconstruction(self, slots, x_rec, mask=None):
        """``z'``: the second encoder applied to the stack with the target replaced by ``x'``."""
        swapped = torch.cat([slots[:, :-1], x_rec.unsqueeze(1)], dim=1)
        attended, _ = self.encoder(swapped, mask)
        return attended[-1].flatten(1)


@dataclass
class ReconstructionModel:
    net: RSMGAN
    config: NetworkConfig
    n: int
    channels: int
    n_slots: int
    history: list[dict] = field(default_factory=list)

    @property
    def device(self) -> torch.device:
        return next(self.net.parameters()).device

    @property
    def dtype(self) -> torch.dtype:
        return next(self.net.parameters()).dtype


def build_model(n: int, channels: int, n_slots: int, config: NetworkConfig) -> ReconstructionModel:
    torch.manual_seed(config.seed)
    net = RSMGAN(n, channels, config).to(config.device)
    return ReconstructionModel(net, config, n, channels, n_slots)


def to_tensors(inputs: ModelInputs, model: ReconstructionModel) -> tuple[torch.Tensor, torch.Tensor]:
    """``(K, N, n, n, C)`` numpy slots to ``(K, N, C, n, n)`` tensors plus the mask."""
    slots = np.asarray(inputs.slots)
    if slots.shape[1:] != (model.n_slots, model.n, model.n, model.channels):
        raise ValueError(f"inputs of shape {slots.shape[1:]} do not fit a model for "
                         f"{(model.n_slots, model.n, model.n, model.channels)}")
    x = torch.as_tensor(np.moveaxis(slots, -1, 2), dtype=model.dtype, device=model.device)
    mask = torch.as_tensor(np.asarray(inputs.mask, dtype=bool), device=model.device)
    return x, mask


def generator_forward(inputs: ModelInputs, model: ReconstructionModel):
    """Reconstruct the target slot of each input.

    Returns ``(x', z, attention)`` with ``x'`` laid out ``(B, n, n, C)`` like
    the targets and ``attention`` the per-layer slot weights.
    """
    slots, mask = to_tensors(inputs, model)
    x_rec, z, weights = model.net.reconstruct(slots, mask)
    return x_rec.permute(0, 2, 3, 1), z, weights


def compute_losses(model: ReconstructionModel, slots: torch.Tensor, mask: torch.Tensor,
                   generator: torch.Generator | None = None) -> tuple[GeneratorLoss, torch.Tensor, torch.Tensor]:
    """Generator loss components, critic loss and gradient penalty for one batch."""
    net, cfg = model.net, model.config
    x = slots[:, -1]
    x_rec, z, _ = net.reconstruct(slots, mask)
    z_rec = net.encode_reconstruction(slots, x_rec, mask)
    g_loss = generator_loss(x, x_rec, z, z_rec, net.critic(x_rec), cfg.loss_weights)
    fake = x_rec.detach()
    penalty = gradient_penalty(net.critic, x, fake, generator)
    d_loss = critic_loss(net.critic(x), net.critic(fake), penalty, cfg.gp_coefficient)
    return g_loss, d_loss, penalty


def _check_finite(epoch: int, **values: float) -> None:
    if not all(math.isfinite(v) for v in values.values()):
        raise TrainingDiverged(epoch, values)


def train(inputs: ModelInputs, config: NetworkConfig | None = None,
          model: ReconstructionModel | None = None, progress: bool = False) -> ReconstructionModel:
    """Alternate critic and generator Adam updates over shuffled mini-batches."""
    config = config or (model.config if model else NetworkConfig())
    if len(inputs) == 0:
        raise ValueError("no training inputs")
    n, C = inputs.slots.shape[2], inputs.slots.shape[4]
    if model is None:
        model = build_model(n, C, inputs.slots.shape[1], config)
    net = model.net
    slots_all, mask_all = to_tensors(inputs, model)
    gen = torch.Generator().manual_seed(config.seed)
    opt_g = torch.optim.Adam(list(net.generator_parameters()), lr=config.lr, betas=config.betas)
    opt_d = torch.optim.Adam(net.critic.parameters(), lr=config.lr, betas=config.betas)
    K = len(inputs)
    net.train()
    start_epoch = len(model.history)
    for epoch in range(start_epoch + 1, start_epoch + config.epochs + 1):
        sums = dict.fromkeys(("contextual", "latent", "adversarial", "generator", "critic", "penalty"), 0.0)
        batches = 0
        for idx in torch.randperm(K, generator=gen).split(config.batch_size):
            slots, mask = slots_all[idx], mask_all[idx]
            x = slots[:, -1]
            d_loss = penalty = torch.zeros(())
            for _ in range(config.critic_updates_per_gen):
                with torch.no_grad():
                    fake, _, _ = net.reconstruct(slots, mask)
                penalty = gradient_penalty(net.critic, x, fake, gen)
                d_loss = critic_loss(net.critic(x), net.critic(fake), penalty, config.gp_coefficient)
                opt_d.zero_grad(set_to_none=True)
                d_loss.backward()
                opt_d.step()
            x_rec, z, _ = net.reconstruct(slots, mask)
            z_rec = net.encode_reconstruction(slots, x_rec, mask)
            g_loss = generator_loss(x, x_rec, z, z_rec, net.critic(x_rec), config.loss_weights)
            opt_g.zero_grad(set_to_none=True)
            g_loss.total.backward()
            opt_g.step()
            stats = g_loss.as_floats() | {"critic": d_loss.detach().item(), "penalty": penalty.detach().item()}
            _check_finite(epoch, **stats)
            for key, value in stats.items():
                sums[key] += value
            batches += 1
        record = {"epoch": epoch} | {k: v / batches for k, v in sums.items()}
        model.history.append(record)
        if progress:
            log.info("epoch %d  contextual %.4f  latent %.4f  critic %.4f", epoch,
                     record["contextual"], record["latent"], record["critic"])
    net.eval()
    return model


@torch.no_grad()
def reconstruct(inputs: ModelInputs, model: ReconstructionModel,
                batch_size: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Reconstructions ``(K, n, n, C)`` and channel-0 residuals ``(K, n, n)``."""
    model.net.eval()
    parts = []
    for lo in range(0, len(inputs), batch_size):
        x_rec, _, _ = generator_forward(inputs.subset(slice(lo, lo + batch_size)), model)
        parts.append(x_rec.cpu().double().numpy())
    if parts:
        recon = np.concatenate(parts)
    else:
        recon = np.empty((0, model.n, model.n, model.channels))
    return recon, residual_first_channel(inputs.target, recon)
