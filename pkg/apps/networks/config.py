# apps/networks/config.py
import math
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from apps.common.validators import parse_int_list, validate_power_of_two

PAPER_CONTRACTION_CHANNELS = [64, 128, 256, 512, 512, 512, 512, 512]
# six listed expansion stages plus two 64-channel stages that return to full resolution
PAPER_EXPANSION_CHANNELS = [512, 512, 512, 512, 256, 128, 64, 64]
NETWORK2_CHANNELS = [32, 64, 128, 256, 512, 512, 512]
NETWORK2_BLOCKS = 7

DEFAULT_PATCH_SIZES = {'network1': 64, 'network2': 128}


def scale_channels(channels: List[int], scale: float) -> List[int]:
    return [max(1, int(round(c * scale))) for c in channels]


class UNetConfig(BaseModel):
    """UNet point detector; one contraction stage per halving down to a 1x1 bottleneck"""

    model_config = ConfigDict(frozen=True)

    input_size: int = Field(default=64, ge=2)
    contraction_channels: Optional[List[int]] = None
    expansion_channels: Optional[List[int]] = None
    width_scale: float = Field(default=0.125, gt=0)

    @field_validator('contraction_channels', 'expansion_channels', mode='before')
    @classmethod
    def _parse_channels(cls, value):
        if value is None or value == '':
            return None
        return parse_int_list(value)

    @model_validator(mode='after')
    def _check_shape(self) -> 'UNetConfig':
        size = self.input_size
        validate_power_of_two(size, name='UNet input_size')
        stages = self.stages
        for name, given, default in [
            ('contraction_channels', self.contraction_channels, PAPER_CONTRACTION_CHANNELS),
            ('expansion_channels', self.expansion_channels, PAPER_EXPANSION_CHANNELS),
        ]:
            if given is not None and len(given) != stages:
                raise ValueError(f"{name} needs {stages} entries for input_size {size}, got {len(given)}")
            if given is None and stages > len(default):
                raise ValueError(
                    f"input_size {size} needs {stages} stages; give {name} explicitly beyond {len(default)}"
                )
            if given is not None and min(given) < 1:
                raise ValueError(f"{name} entries must be positive")
        return self

    @classmethod
    def paper(cls) -> 'UNetConfig':
        return cls(input_size=256, width_scale=1.0)

    @property
    def stages(self) -> int:
        return int(math.log2(self.input_size))

    def resolved_contraction(self) -> List[int]:
        channels = self.contraction_channels or PAPER_CONTRACTION_CHANNELS[:self.stages]
        return scale_channels(channels, self.width_scale)

    def resolved_expansion(self) -> List[int]:
        channels = self.expansion_channels or PAPER_EXPANSION_CHANNELS[len(PAPER_EXPANSION_CHANNELS) - self.stages:]
        return scale_channels(channels, self.width_scale)


class RcnnNetConfig(BaseModel):
    """Patch classifier used by the two-stage detector"""

    model_config = ConfigDict(frozen=True)

    variant: Literal['network1', 'network2'] = 'network1'
    patch_size: int = Field(default=64, ge=1)
    class_count: int = Field(default=2, ge=2)
    network2_channels: List[int] = Field(default_factory=lambda: list(NETWORK2_CHANNELS))
    network1_kernels: int = Field(default=96, ge=1)
    network1_kernel_size: int = Field(default=11, ge=1)
    network1_stride: int = Field(default=4, ge=1)
    width_scale: float = Field(default=0.125, gt=0)

    @field_validator('network2_channels', mode='before')
    @classmethod
    def _parse_channels(cls, value):
        return parse_int_list(value)

    @model_validator(mode='before')
    @classmethod
    def _default_patch_size(cls, data):
        if isinstance(data, dict) and data.get('patch_size') in (None, ''):
            data = {**data, 'patch_size': DEFAULT_PATCH_SIZES.get(data.get('variant', 'network1'), 64)}
        return data

    @model_validator(mode='after')
    def _check_variant(self) -> 'RcnnNetConfig':
        if len(self.network2_channels) != NETWORK2_BLOCKS:
            raise ValueError(f"network2_channels needs {NETWORK2_BLOCKS} entries, got {len(self.network2_channels)}")
        if self.network2_channels[-1] != 512:
            raise ValueError("network2_channels must end in 512")
        if self.variant == 'network2' and self.patch_size % 2 ** NETWORK2_BLOCKS:
            raise ValueError(
                f"network2 pools {NETWORK2_BLOCKS} times, so patch_size must be divisible by "
                f"{2 ** NETWORK2_BLOCKS}; got {self.patch_size}, try 128 or 256"
            )
        if self.variant == 'network1' and self.network1_kernel_size > self.patch_size:
            raise ValueError(f"patch_size {self.patch_size} is smaller than the {self.network1_kernel_size}px kernel")
        return self

    @classmethod
    def paper(cls, variant: str) -> 'RcnnNetConfig':
        return cls(variant=variant, patch_size=256 if variant == 'network2' else 64, width_scale=1.0)

    def resolved_network2_channels(self) -> List[int]:
        return scale_channels(self.network2_channels, self.width_scale)
