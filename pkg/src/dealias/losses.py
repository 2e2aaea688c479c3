"""Adversarial, pixel and perceptual objectives and their weighted sum."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from dealias import nn
from dealias.errors import DegenerateReference, InvalidArgument, NumericFault
from dealias.nn import Tensor
from dealias.nn import functional as F

PROB_EPS = 1e-7


class AdversarialVariant(str, Enum):
    SATURATING = "saturating"
    NON_SATURATING = "non-saturating"


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 15.0
    beta: float = 0.0025
    adversarial_variant: AdversarialVariant = AdversarialVariant.NON_SATURATING

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise InvalidArgument("loss weights must be non-negative")
        object.__setattr__(self, "adversarial_variant", AdversarialVariant(self.adversarial_variant))


def _as_prob(p) -> Tensor:
    """Probabilities in float64 (``1 - eps`` rounds to 1 in float32), clamped to ``[eps, 1 - eps]``."""
    t = nn.as_tensor(p)
    if np.any(np.isnan(t.data)):
        raise NumericFault("probability is NaN")
    if t.dtype != np.float64:
        src_dtype = t.dtype
        t = Tensor._make(t.data.astype(np.float64), (t,), lambda g: (g.astype(src_dtype),))
    q = F.clamp(t, PROB_EPS, 1.0 - PROB_EPS)
    if np.any(q.data <= 0) or np.any(q.data >= 1):
        raise NumericFault("probability saturated at 0 or 1 after clamping")
    return q


def discriminator_loss(d_real, d_fake) -> Tensor:
    """``-mean log D(x_t) - mean log(1 - D(G(x_u)))``."""
    r, f = _as_prob(d_real), _as_prob(d_fake)
    return -F.log(r).mean() - F.log(1.0 - f).mean()


def generator_adversarial_loss(d_fake, variant=AdversarialVariant.NON_SATURATING) -> Tensor:
    f = _as_prob(d_fake)
    if AdversarialVariant(variant) is AdversarialVariant.SATURATING:
        return F.log(1.0 - f).mean()
    return -F.log(f).mean()


def pixel_loss(x_hat, x_t) -> Tensor:
    """Half the batch mean of the squared relative error ``||x_t - x_hat||^2 / ||x_t||^2``."""
    x_hat, x_t = nn.as_tensor(x_hat), nn.as_tensor(x_t)
    if x_hat.shape != x_t.shape:
        raise InvalidArgument(f"shape mismatch: {x_hat.shape} vs {x_t.shape}")
    n = x_t.shape[0]
    ref = np.sum(x_t.data.reshape(n, -1).astype(np.float64) ** 2, axis=1)
    if np.any(ref == 0):
        raise DegenerateReference("target image with zero norm")
    diff = (x_hat - x_t.detach()).reshape(n, -1)
    per_image = (diff * diff).sum(axis=1) / ref
    return 0.5 * per_image.mean()


def perceptual_loss(x_hat, x_t, encoder) -> Tensor:
    fh = encoder(nn.as_tensor(x_hat))
    with nn.no_grad():
        ft = encoder(nn.as_tensor(x_t).detach())
    d = fh - ft
    return 0.5 * (d * d).mean()


@dataclass
class GeneratorLoss:
    total: Tensor
    adversarial: float
    pixel: float
    perceptual: float


def combine(pixel: Tensor, perceptual: Tensor, adversarial: Tensor, weights: LossWeights) -> Tensor:
    total = adversarial
    if weights.alpha:
        total = total + weights.alpha * pixel
    if weights.beta:
        total = total + weights.beta * perceptual
    return total


def generator_total_loss(x_hat, x_t, d_fake, weights: LossWeights, encoder=None) -> GeneratorLoss:
    """Weighted objective; components are also reported as floats for logging.

    A zero weight drops its component from the graph entirely, so the
    perceptual encoder is not evaluated when ``beta == 0``.
    """
    adv = generator_adversarial_loss(d_fake, weights.adversarial_variant)
    pix = pixel_loss(x_hat, x_t)
    if weights.beta:
        if encoder is None:
            raise InvalidArgument("beta > 0 requires a perceptual encoder")
        per = perceptual_loss(x_hat, x_t, encoder)
        per_value = per.item()
    else:
        per, per_value = None, 0.0
    total = combine(pix, per, adv, weights)
    return GeneratorLoss(total, adv.item(), pix.item(), per_value)
