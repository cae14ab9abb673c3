# apps/synthdata/config.py
from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from apps.common.validators import parse_int_list, parse_range, validate_unit_range


class SceneConfig(BaseModel):
    """
    Synthetic pasture scene: whitish elliptical sheep with shadows on
    grass noise, an optional fence line, and global illumination scaling.

    Sizes are in pixels. Hue is in degrees, saturation and value in [0, 1].
    """

    model_config = ConfigDict(frozen=True)

    image_size: int = Field(default=64, ge=8)
    count_range: Tuple[int, int] = (0, 18)
    sheep_length_range: Tuple[float, float] = (7.0, 9.0)
    sheep_width_range: Tuple[float, float] = (3.5, 4.5)
    brightness_range: Tuple[float, float] = (0.8, 1.0)

    grass_hue_range: Tuple[float, float] = (75.0, 115.0)
    grass_saturation: float = Field(default=0.55, ge=0, le=1)
    grass_value: float = Field(default=0.42, ge=0, le=1)
    grass_octaves: int = Field(default=3, ge=1, le=8)
    grass_amplitude: float = Field(default=0.08, ge=0, le=0.5)

    fence_probability: float = Field(default=0.3, ge=0, le=1)
    fence_brightness: float = Field(default=0.85, ge=0, le=1)
    shadow_offset: float = Field(default=1.5, ge=0)
    shadow_alpha: float = Field(default=0.35, ge=0, le=1)
    illumination_range: Tuple[float, float] = (0.75, 1.0)

    min_separation: float = Field(default=2.0, ge=0)
    allow_overlap: bool = False
    contrast_margin: float = Field(default=0.15, ge=0, le=0.5)
    seed: int = 0

    @field_validator('count_range', mode='before')
    @classmethod
    def _parse_count_range(cls, value):
        values = parse_int_list(value)
        if len(values) != 2 or values[0] < 0 or values[0] > values[1]:
            raise ValueError(f"count_range must be 'min,max' with 0 <= min <= max, got {value}")
        return tuple(values)

    @field_validator('sheep_length_range', 'sheep_width_range', 'brightness_range',
                     'grass_hue_range', 'illumination_range', mode='before')
    @classmethod
    def _parse_ranges(cls, value):
        return parse_range(value)

    @model_validator(mode='after')
    def _check_scene(self) -> 'SceneConfig':
        validate_unit_range(*self.brightness_range, name='brightness_range')
        validate_unit_range(*self.illumination_range, name='illumination_range')
        if self.sheep_width_range[0] <= 0:
            raise ValueError("sheep widths must be positive")
        if self.sheep_width_range[1] > self.sheep_length_range[1]:
            raise ValueError("sheep_width_range must not exceed sheep_length_range")
        if self.sheep_length_range[1] >= self.image_size:
            raise ValueError(f"sheep of length {self.sheep_length_range[1]} do not fit a {self.image_size}px image")
        if not self.allow_overlap:
            footprint = (self.sheep_length_range[1] + self.min_separation) ** 2
            capacity = self.image_size ** 2
            if self.count_range[1] * footprint > capacity:
                raise ValueError(
                    f"{self.count_range[1]} sheep at separation {self.min_separation} do not fit a "
                    f"{self.image_size}px image; lower count_range or min_separation, or set allow_overlap"
                )
        return self

    @classmethod
    def paper(cls, **overrides) -> 'SceneConfig':
        """Full-size frames: sheep about 20 px long and 10 px wide in 256 px images"""
        values = dict(
            image_size=256,
            count_range=(1, 18),
            sheep_length_range=(18.0, 22.0),
            sheep_width_range=(9.0, 11.0),
            min_separation=3.0,
            shadow_offset=3.0,
        )
        values.update(overrides)
        return cls(**values)

    @property
    def nominal_sheep_length(self) -> float:
        return sum(self.sheep_length_range) / 2
