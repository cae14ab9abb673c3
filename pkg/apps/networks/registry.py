# apps/networks/registry.py
from typing import Dict, Union

from apps.common.exceptions import CheckpointError
from apps.networks.config import RcnnNetConfig, UNetConfig
from apps.networks.rcnn import RcnnNet, build_rcnn_net
from apps.networks.unet import UNet, build_unet

Model = Union[UNet, RcnnNet]

MODEL_KINDS = ('unet', 'network1', 'network2')


def build_model(descriptor: Dict[str, str], seed: int = 0) -> Model:
    """Rebuild an architecture from its key=value descriptor"""
    kind = descriptor.get('kind')
    try:
        if kind == 'unet':
            return build_unet(UNetConfig(
                input_size=int(descriptor['input_size']),
                contraction_channels=descriptor['contraction_channels'],
                expansion_channels=descriptor['expansion_channels'],
                width_scale=float(descriptor.get('width_scale', 1.0)),
            ), seed)
        if kind in ('network1', 'network2'):
            return build_rcnn_net(RcnnNetConfig(
                variant=kind,
                patch_size=int(descriptor['patch_size']),
                class_count=int(descriptor['class_count']),
                network2_channels=descriptor['network2_channels'],
                network1_kernels=int(descriptor['network1_kernels']),
                network1_kernel_size=int(descriptor['network1_kernel_size']),
                network1_stride=int(descriptor['network1_stride']),
                width_scale=float(descriptor['width_scale']),
            ), seed)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"Invalid {kind} architecture descriptor: {exc}") from exc
    raise CheckpointError(f"Unknown model kind '{kind}', expected one of {MODEL_KINDS}")


def is_point_detector(model: Model) -> bool:
    return isinstance(model, UNet)
