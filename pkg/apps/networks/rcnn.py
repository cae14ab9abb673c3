# apps/networks/rcnn.py
import logging
from typing import Dict, List

import numpy as np

from apps.common.exceptions import ShapeError
from apps.diffcore import Variable, constant
from apps.diffcore import functional as F
from apps.networks.config import RcnnNetConfig
from apps.networks.layers import Conv2d, ConvBlock, Linear, Module

logger = logging.getLogger(__name__)


class RcnnNet(Module):
    """
    Patch classifier producing class logits.

    network1: a single conv layer (with bias and relu) and one fully
    connected layer. network2: seven conv blocks each followed by 2x2 max
    pooling, then one fully connected layer.
    """

    def __init__(self, config: RcnnNetConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.kind = config.variant
        rng = np.random.default_rng(seed)
        size = config.patch_size

        self.blocks: List[ConvBlock] = []
        if config.variant == 'network1':
            self.conv = self.add_module('conv', Conv2d(
                3, config.network1_kernels, config.network1_kernel_size, rng, stride=config.network1_stride,
            ))
            side = F.conv2d_output_size(size, config.network1_kernel_size, config.network1_stride, 0)
            features = config.network1_kernels * side * side
        else:
            in_channels = 3
            for index, channels in enumerate(config.resolved_network2_channels()):
                self.blocks.append(self.add_module(f'block{index}', ConvBlock(in_channels, channels, rng)))
                in_channels = channels
                size = (size + 1) // 2
            features = in_channels * size * size
        self.feature_shape = features
        self.fc = self.add_module('fc', Linear(features, config.class_count, rng))

    @property
    def descriptor(self) -> Dict[str, str]:
        config = self.config
        return {
            'kind': config.variant,
            'patch_size': str(config.patch_size),
            'class_count': str(config.class_count),
            'network2_channels': ','.join(map(str, config.network2_channels)),
            'network1_kernels': str(config.network1_kernels),
            'network1_kernel_size': str(config.network1_kernel_size),
            'network1_stride': str(config.network1_stride),
            'width_scale': repr(float(config.width_scale)),
        }

    def forward(self, patches) -> Variable:
        x = constant(patches)
        size = self.config.patch_size
        if x.ndim != 4 or x.shape[1:] != (3, size, size):
            raise ShapeError(f"{self.kind} expects patches of shape [N, 3, {size}, {size}], got {x.shape}")
        if self.config.variant == 'network1':
            h = F.relu(self.conv(x))
        else:
            h = x
            for block in self.blocks:
                h = F.maxpool2d(block(h))
        return self.fc(F.flatten(h))


def build_rcnn_net(config: RcnnNetConfig, seed: int = 0) -> RcnnNet:
    model = RcnnNet(config, seed)
    logger.debug(f"Built {config.variant} patch={config.patch_size} params={model.parameter_count()}")
    return model


def classify_patches(model: RcnnNet, patches, batch_size: int = 0) -> np.ndarray:
    """
    Class probabilities [N, K] for patches [N, 3, S, S].

    Runs in the model's current mode; call model.eval() first for batch
    independent results.
    """
    patches = np.asarray(patches)
    if patches.ndim != 4:
        raise ShapeError(f"classify_patches expects [N, 3, S, S] patches, got {patches.shape}")
    if batch_size <= 0 or batch_size >= len(patches):
        return F.softmax_logits(model(patches)).value
    chunks = [
        F.softmax_logits(model(patches[start:start + batch_size])).value
        for start in range(0, len(patches), batch_size)
    ]
    return np.concatenate(chunks, axis=0)
