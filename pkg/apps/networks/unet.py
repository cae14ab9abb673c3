# apps/networks/unet.py
import logging
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from apps.common.exceptions import ShapeError
from apps.diffcore import Variable, constant
from apps.diffcore import functional as F
from apps.losses.counting import softplus_count
from apps.networks.config import UNetConfig
from apps.networks.layers import Conv2d, ConvBlock, Linear, Module

logger = logging.getLogger(__name__)


@dataclass
class UNetOutput:
    probmap: Variable
    signal: Variable
    c_hat: np.ndarray


class UNet(Module):
    """
    Contraction: per stage conv block then 2x2 max pool, down to 1x1.
    Expansion: per stage nearest x2 upsample, conv block, then concat with
    the contraction features of the same resolution. A 1x1 conv and sigmoid
    give the probability map; a linear count head reads the bottleneck
    vector plus the mean and sum of the map.
    """

    kind = 'unet'

    def __init__(self, config: UNetConfig, seed: int = 0):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(seed)
        contraction = config.resolved_contraction()
        expansion = config.resolved_expansion()

        self.down: List[ConvBlock] = []
        in_channels = 3
        for index, channels in enumerate(contraction):
            self.down.append(self.add_module(f'down{index}', ConvBlock(in_channels, channels, rng)))
            in_channels = channels

        self.up: List[ConvBlock] = []
        for index, channels in enumerate(expansion):
            self.up.append(self.add_module(f'up{index}', ConvBlock(in_channels, channels, rng)))
            in_channels = channels + contraction[len(contraction) - 1 - index]

        self.head = self.add_module('head', Conv2d(in_channels, 1, 1, rng, bias=True))
        self.count_head = self.add_module('count_head', Linear(contraction[-1] + 2, 1, rng))
        self.bottleneck_channels = contraction[-1]

    @property
    def descriptor(self) -> Dict[str, str]:
        return {
            'kind': self.kind,
            'input_size': str(self.config.input_size),
            'contraction_channels': ','.join(map(str, self.config.resolved_contraction())),
            'expansion_channels': ','.join(map(str, self.config.resolved_expansion())),
            'width_scale': '1.0',
        }

    def forward(self, images) -> UNetOutput:
        x = constant(images)
        size = self.config.input_size
        if x.ndim != 4 or x.shape[1:] != (3, size, size):
            raise ShapeError(f"UNet expects images of shape [N, 3, {size}, {size}], got {x.shape}")
        n = x.shape[0]

        features = []
        h = x
        for block in self.down:
            h = block(h)
            features.append(h)
            h = F.maxpool2d(h)
        bottleneck = h

        for index, block in enumerate(self.up):
            h = block(F.upsample_nearest(h, 2))
            h = F.concat_channels(h, features[len(features) - 1 - index])

        probmap = F.sigmoid(self.head(h))

        pooled_mean = F.reshape(F.reduce_mean(probmap, axes=(1, 2, 3)), (n, 1))
        pooled_sum = F.reshape(F.reduce_sum(probmap, axes=(1, 2, 3)), (n, 1))
        vector = F.reshape(bottleneck, (n, self.bottleneck_channels))
        vector = F.concat_channels(F.concat_channels(vector, pooled_mean), pooled_sum)
        signal = F.reshape(self.count_head(vector), (n,))
        return UNetOutput(probmap=probmap, signal=signal, c_hat=np.asarray(softplus_count(signal.value)))


def build_unet(config: UNetConfig, seed: int = 0) -> UNet:
    model = UNet(config, seed)
    logger.debug(
        f"Built UNet input={config.input_size} contraction={config.resolved_contraction()} "
        f"expansion={config.resolved_expansion()} params={model.parameter_count()}"
    )
    return model


def unet_forward(model: UNet, images) -> UNetOutput:
    """Probability map [N, 1, H, W], count signal s [N] and Ĉ = softplus(s) per image"""
    return model(images)
