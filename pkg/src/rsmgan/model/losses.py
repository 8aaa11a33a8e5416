"""Generator and critic objectives (WGAN-GP flavour)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import torch


@dataclass
class GeneratorLoss:
    contextual: torch.Tensor
    latent: torch.Tensor
    adversarial: torch.Tensor
    total: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        parts = {"contextual": self.contextual, "latent": self.latent,
                 "adversarial": self.adversarial, "generator": self.total}
        return {k: v.detach().item() for k, v in parts.items()}


def l2_per_sample(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return torch.linalg.vector_norm((a - b).flatten(1), dim=1)


def generator_loss(x, x_rec, z, z_rec, critic_fake, weights=(50.0, 1.0, 1.0)) -> GeneratorLoss:
    """``w1 * E||x - x'|| + w2 * E||z - z'|| + w3 * E[f(x')]``."""
    w1, w2, w3 = weights
    contextual = l2_per_sample(x, x_rec).mean()
    latent = l2_per_sample(z, z_rec).mean()
    adversarial = critic_fake.mean()
    return GeneratorLoss(contextual, latent, adversarial,
                         w1 * contextual + w2 * latent + w3 * adversarial)


def gradient_penalty(critic: Callable[[torch.Tensor], torch.Tensor], real: torch.Tensor,
                     fake: torch.Tensor, generator: torch.Generator | None = None) -> torch.Tensor:
    """``E[(||grad f(x_hat)|| - 1)^2]`` on random interpolates of real and fake."""
    eps = torch.rand((real.shape[0],) + (1,) * (real.dim() - 1), generator=generator,
                     dtype=real.dtype, device=real.device)
    x_hat = (eps * real + (1 - eps) * fake).requires_grad_(True)
    out = critic(x_hat)
    (grad,) = torch.autograd.grad(out.sum(), x_hat, create_graph=True)
    return ((grad.flatten(1).norm(dim=1) - 1) ** 2).mean()


def critic_loss(critic_real: torch.Tensor, critic_fake: torch.Tensor,
                penalty: torch.Tensor | float = 0.0, gp_coefficient: float = 10.0) -> torch.Tensor:
    """``E[f(x)] - E[f(x')] + lambda * GP``, minimised by the critic.

    The critic learns to score reconstructions high and real inputs low, the
    sign under which the generator's ``+E[f(x')]`` term is adversarial.
    """
    return critic_real.mean() - critic_fake.mean() + gp_coefficient * penalty
