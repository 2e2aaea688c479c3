"""Generator, discriminator and the frozen perceptual encoder."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dealias import nn
from dealias.errors import InvalidArgument
from dealias.nn import BatchNorm2d, Conv2d, ConvTranspose2d, Dense, Module, Tensor
from dealias.nn import functional as F

RANGE_TOL = 1e-6


@dataclass(frozen=True)
class GeneratorConfig:
    depth: int = 4
    base_channels: int = 64
    input_size: tuple[int, int] = (64, 64)
    use_refinement: bool = True

    def __post_init__(self):
        if self.depth < 2:
            raise InvalidArgument("generator depth must be at least 2")
        h, w = self.input_size
        if h % 2**self.depth or w % 2**self.depth:
            raise InvalidArgument(f"input size {self.input_size} not divisible by 2^{self.depth}")

    def channels(self, level: int) -> int:
        return min(self.base_channels * 2**level, 8 * self.base_channels)


@dataclass(frozen=True)
class DiscriminatorConfig:
    depth: int = 4
    base_channels: int = 64
    input_size: tuple[int, int] = (64, 64)

    def __post_init__(self):
        if self.depth < 2:
            raise InvalidArgument("discriminator depth must be at least 2")
        h, w = self.input_size
        if h // 2**self.depth < 1 or w // 2**self.depth < 1:
            raise InvalidArgument(f"input size {self.input_size} too small for depth {self.depth}")

    def channels(self, level: int) -> int:
        return min(self.base_channels * 2**level, 8 * self.base_channels)


@dataclass(frozen=True)
class PerceptualEncoderConfig:
    num_blocks: int = 4
    base_channels: int = 32
    input_size: tuple[int, int] = (64, 64)
    weights_source: str = "seeded"  # "seeded" or a checkpoint path
    seed: int = 1234


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.uint64(seed))


def _check_input(x: Tensor, size: tuple[int, int]) -> None:
    if x.ndim != 4 or x.shape[1] != 1 or tuple(x.shape[2:]) != tuple(size):
        raise InvalidArgument(f"expected input of shape (N, 1, {size[0]}, {size[1]}), got {x.shape}")


class Generator(Module):
    """U-Net: stride-2 conv encoder, transposed-conv decoder, channel-concat skips.

    With ``use_refinement`` the network predicts a residual that is added to
    its input and clamped back to ``[-1, 1]``; otherwise the tanh output is
    returned directly.
    """

    def __init__(self, cfg: GeneratorConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        rng = _rng(seed)
        d = cfg.depth
        self.down_conv = []
        self.down_bn = []
        cin = 1
        for level in range(d):
            cout = cfg.channels(level)
            self.down_conv.append(Conv2d(cin, cout, 4, 2, 1, rng=rng, dtype=dtype))
            self.down_bn.append(BatchNorm2d(cout, dtype=dtype))
            cin = cout
        self.up_conv = []
        self.up_bn = []
        for level in range(d - 2, -2, -1):
            cout = cfg.channels(max(level, 0))
            self.up_conv.append(ConvTranspose2d(cin, cout, 4, 2, 1, rng=rng, dtype=dtype))
            self.up_bn.append(BatchNorm2d(cout, dtype=dtype))
            cin = cout + cfg.channels(level) if level >= 0 else cout
        self.out_conv = Conv2d(cin, 1, 3, 1, 1, rng=rng, dtype=dtype)
        self._skips: list[tuple[int, ...]] = []

    @property
    def skip_shapes(self) -> list[tuple[int, ...]]:
        """Shapes of the encoder activations from the most recent forward pass."""
        return list(self._skips)

    def forward(self, x_u: Tensor) -> Tensor:
        x_u = nn.as_tensor(x_u)
        _check_input(x_u, self.cfg.input_size)
        if x_u.data.min() < -1 - RANGE_TOL or x_u.data.max() > 1 + RANGE_TOL:
            raise InvalidArgument("generator input must lie in [-1, 1]")
        h = x_u
        skips = []
        for conv, bn in zip(self.down_conv, self.down_bn):
            h = F.leaky_relu(bn(conv(h)))
            skips.append(h)
        self._skips = [s.shape for s in skips]
        for i, (conv, bn) in enumerate(zip(self.up_conv, self.up_bn)):
            h = F.relu(bn(conv(h)))
            mirror = len(skips) - 2 - i
            if mirror >= 0:
                h = F.concat([h, skips[mirror]], axis=1)
        r = F.tanh(self.out_conv(h))
        if self.cfg.use_refinement:
            return F.clamp(r + x_u, -1.0, 1.0)
        return r

    def zero_output_layer(self) -> None:
        self.out_conv.weight.data = np.zeros_like(self.out_conv.weight.data)
        self.out_conv.bias.data = np.zeros_like(self.out_conv.bias.data)


class Discriminator(Module):
    """Stride-2 conv stack (no BN on the first block), dense head, sigmoid."""

    def __init__(self, cfg: DiscriminatorConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        rng = _rng(seed)
        self.convs = []
        self.bns = []
        cin = 1
        for level in range(cfg.depth):
            cout = cfg.channels(level)
            self.convs.append(Conv2d(cin, cout, 4, 2, 1, rng=rng, dtype=dtype))
            if level > 0:
                self.bns.append(BatchNorm2d(cout, dtype=dtype))
            cin = cout
        h, w = cfg.input_size
        feat = cin * (h // 2**cfg.depth) * (w // 2**cfg.depth)
        self.head = Dense(feat, 1, rng=rng, dtype=dtype)

    def logits(self, img: Tensor) -> Tensor:
        img = nn.as_tensor(img)
        _check_input(img, self.cfg.input_size)
        h = F.leaky_relu(self.convs[0](img))
        for conv, bn in zip(self.convs[1:], self.bns):
            h = F.leaky_relu(bn(conv(h)))
        return self.head(h.flatten()).reshape(-1)

    def forward(self, img: Tensor) -> Tensor:
        return F.sigmoid(self.logits(img))


class PerceptualEncoder(Module):
    """Fixed feature extractor: ``num_blocks`` × (3×3 conv, ReLU, 2×2 average pool).

    Weights never receive gradients; the returned features are the output of
    the last block. He-normal weights are drawn from ``cfg.seed`` unless
    ``cfg.weights_source`` names a checkpoint holding ``encoder.*`` arrays.
    """

    def __init__(self, cfg: PerceptualEncoderConfig, dtype=np.float32):
        self.cfg = cfg
        h, w = cfg.input_size
        if h % 2**cfg.num_blocks or w % 2**cfg.num_blocks:
            raise InvalidArgument(f"input size {cfg.input_size} not divisible by 2^{cfg.num_blocks}")
        rng = _rng(cfg.seed)
        self.convs = []
        cin = 1
        for level in range(cfg.num_blocks):
            cout = cfg.base_channels * 2**level
            conv = Conv2d(cin, cout, 3, 1, 1, rng=rng, std=float(np.sqrt(2.0 / (9 * cin))), dtype=dtype)
            self.convs.append(conv)
            cin = cout
        if cfg.weights_source != "seeded":
            from dealias.persistence import load_checkpoint

            arrays = load_checkpoint(Path(cfg.weights_source)).arrays
            self.load_state_dict({k[len("encoder."):]: v for k, v in arrays.items() if k.startswith("encoder.")})
        self.freeze()

    def freeze(self) -> None:
        for p in self.parameters():
            p.requires_grad = False
            p.data.setflags(write=False)

    def load_state_dict(self, state) -> None:
        super().load_state_dict(state)
        self.freeze()

    def forward(self, img: Tensor) -> Tensor:
        img = nn.as_tensor(img)
        _check_input(img, self.cfg.input_size)
        h = img
        for conv in self.convs:
            h = F.avg_pool2d(F.relu(conv(h)))
        return h
