"""Gaussian prior sampling, discriminator network and the two adversarial losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .model import LEAKY_SLOPE, ConfigError
from .params import ParameterSet


@dataclass
class PriorConfig:
    """Isotropic Gaussian N(0, 10^power_exponent * I) over the embedding space."""

    kind: str = "gaussian"
    power_exponent: int = 0
    dim: int = 256

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ConfigError(f"unknown prior kind {self.kind!r}")
        if self.dim < 1:
            raise ConfigError("prior dim must be >= 1")

    @property
    def variance(self) -> float:
        return 10.0 ** self.power_exponent


def sample_prior(cfg: PriorConfig, count: int, seed: int, dtype=np.float32) -> np.ndarray:
    """i.i.d. rows from the prior, deterministic per seed."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    rng = np.random.default_rng(seed)
    std = np.sqrt(cfg.variance)
    return (std * rng.standard_normal((count, cfg.dim))).astype(dtype)


def discriminate(x: Tensor, params: ParameterSet) -> Tensor:
    """Per-row probability of being a prior sample: sigmoid(MLP(x))."""
    layers = params.discriminator_layers()
    if not layers:
        raise ConfigError("parameter set has no discriminator")
    h = x
    for w, b in layers[:-1]:
        h = ad.leaky_relu(ad.add_bias(ad.matmul(h, w), b), LEAKY_SLOPE)
    w, b = layers[-1]
    return ad.sigmoid(ad.add_bias(ad.matmul(h, w), b))


def _frozen_discriminator_view(params: ParameterSet) -> ParameterSet:
    # Same buffers, but constant tensors: no gradient reaches the weights.
    frozen = {
        name: (ad.constant(t.data) if name.startswith("disc.") else t)
        for name, t in params.tensors.items()
    }
    view = ParameterSet.__new__(ParameterSet)
    view.tensors = frozen
    view.meta = params.meta
    view.model_adam = params.model_adam
    view.disc_adam = params.disc_adam
    return view


def discriminator_loss(real: np.ndarray, fake: np.ndarray, params: ParameterSet) -> Tensor:
    """-E[log d(real)] - E[log(1 - d(fake))] with fake treated as constant.

    Gradients reach only the discriminator weights; the encoder sees none.
    """
    if real.shape != fake.shape:
        raise ad.ShapeError(
            f"real/fake batches must match: {real.shape} vs {fake.shape}"
        )
    p_real = discriminate(ad.constant(real), params)
    p_fake = discriminate(ad.constant(fake), params)
    loss_real = ad.scale(ad.mean_all(ad.log_clipped(p_real)), -1.0)
    one_minus = ad.add(ad.constant(np.ones_like(p_fake.data)), ad.scale(p_fake, -1.0))
    loss_fake = ad.scale(ad.mean_all(ad.log_clipped(one_minus)), -1.0)
    out = ad.add(loss_real, loss_fake)
    ad.check_finite(out, "discriminator_loss")
    return out


def generator_loss(fake: Tensor, params: ParameterSet) -> Tensor:
    """-E[log d(fake)] through the live encoder tape, discriminator frozen."""
    frozen = _frozen_discriminator_view(params)
    p_fake = discriminate(fake, frozen)
    out = ad.scale(ad.mean_all(ad.log_clipped(p_fake)), -1.0)
    ad.check_finite(out, "generator_loss")
    return out
