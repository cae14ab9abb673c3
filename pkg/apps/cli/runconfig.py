# apps/cli/runconfig.py
"""
Run-level configuration shared by the management commands.

Values are layered: desk defaults, then the preset, then a key=value
config file, then command-line flags. Unknown keys are rejected.
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, field_validator

from apps.common.exceptions import ConfigurationError
from apps.common.utils import PathLike, atomic_write, format_key_values, get_project_setting
from apps.networks.config import RcnnNetConfig, UNetConfig
from apps.postprocess.extraction import ExtractionParams
from apps.proposals.services.detector_service import DetectorParams
from apps.synthdata.config import SceneConfig
from apps.trainer.config import LOSS_FOR_MODEL, TrainConfig

logger = logging.getLogger(__name__)

PRESETS: Dict[str, Dict[str, Any]] = {
    'desk': {},
    'paper': {
        'image_size': 256,
        'count_range': (1, 18),
        'sheep_length_range': (18.0, 22.0),
        'sheep_width_range': (9.0, 11.0),
        'min_separation': 3.0,
        'shadow_offset': 3.0,
        'unet_width_scale': 1.0,
        'rcnn_width_scale': 1.0,
        'network2_patch_size': 256,
        'epochs': 500,
        'proposal_scales': [16, 24],
        'proposal_stride': 8,
    },
}

PAIR_FIELDS = ('count_range', 'sheep_length_range', 'sheep_width_range', 'brightness_range', 'splits')
LIST_FIELDS = ('proposal_scales', 'unet_contraction_channels', 'unet_expansion_channels')


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    preset: Literal['desk', 'paper'] = 'desk'
    seed: int = Field(default=0, ge=0)
    threads: int = Field(default=1, ge=1)
    precision: Literal['float64', 'float32'] = Field(
        default_factory=lambda: get_project_setting('DEFAULT_DTYPE', 'float64'), validate_default=True,
    )

    # dataset
    total: int = Field(default=100, ge=1)
    splits: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    image_size: int = 64
    count_range: Tuple[int, int] = (0, 18)
    sheep_length_range: Tuple[float, float] = (7.0, 9.0)
    sheep_width_range: Tuple[float, float] = (3.5, 4.5)
    brightness_range: Tuple[float, float] = (0.8, 1.0)
    fence_probability: float = 0.3
    shadow_offset: float = 1.5
    min_separation: float = 2.0
    allow_overlap: bool = False
    contrast_margin: float = 0.15

    # architecture
    model: Literal['unet', 'network1', 'network2'] = 'unet'
    unet_width_scale: float = 0.125
    unet_contraction_channels: Optional[List[int]] = None
    unet_expansion_channels: Optional[List[int]] = None
    rcnn_width_scale: float = 0.125
    network1_patch_size: int = 64
    network2_patch_size: int = 128
    network1_kernels: int = 96
    network1_kernel_size: int = 11
    network1_stride: int = 4

    # training
    loss_kind: Optional[Literal['whd', 'cross-entropy']] = None
    learning_rate: float = 1e-4
    momentum: float = 0.9
    batch_size: int = 10
    epochs: int = 100
    validate_every: int = 2
    early_stop_patience: Optional[int] = 20
    whd_alpha: float = 4.0
    whd_epsilon: float = 1e-6
    positives_per_image: int = 2
    negative_ratio: int = 3
    proposals_per_image: int = 256
    augment: bool = False

    # inference and evaluation
    threshold_mode: Literal['otsu', 'fixed'] = 'otsu'
    fixed_threshold: float = 0.5
    min_component_area: int = 2
    reconcile_with_count: bool = False
    proposal_scales: List[int] = Field(default_factory=lambda: [8, 12])
    proposal_stride: int = 4
    score_threshold: float = 0.5
    nms_threshold: float = 0.3
    radius: Optional[float] = Field(default=None, gt=0)
    reps: int = Field(default=3, ge=1)
    warmup: int = Field(default=1, ge=0)

    @field_validator(*PAIR_FIELDS, *LIST_FIELDS, mode='before')
    @classmethod
    def _split_commas(cls, value):
        if isinstance(value, str):
            parts = [part.strip() for part in value.split(',') if part.strip()]
            return parts or None
        return value

    @field_validator('radius', 'early_stop_patience', 'loss_kind', mode='before')
    @classmethod
    def _empty_is_none(cls, value):
        if isinstance(value, str) and value.strip().lower() in ('', 'none'):
            return None
        return value

    @classmethod
    def resolve(cls, preset: Optional[str] = None, config_file: Optional[PathLike] = None,
                overrides: Optional[Mapping[str, Any]] = None) -> 'RunConfig':
        values: Dict[str, Any] = {}
        if config_file:
            path = Path(config_file)
            if not path.is_file():
                raise ConfigurationError(f"Config file {path} not found")
            values = {key.strip(): value for key, value in dotenv_values(path).items() if value is not None}
        preset = preset or values.pop('preset', None) or 'desk'
        values.pop('preset', None)
        if preset not in PRESETS:
            raise ConfigurationError(f"Unknown preset '{preset}', expected one of {sorted(PRESETS)}")
        layered = {**PRESETS[preset], **values}
        layered.update({key: value for key, value in (overrides or {}).items() if value is not None})
        return cls(preset=preset, **layered)

    def to_key_values(self) -> str:
        return format_key_values(self.model_dump(mode='json'))

    def write_resolved(self, directory: PathLike) -> Path:
        name = get_project_setting('RESOLVED_CONFIG_NAME', 'resolved_config.cfg')
        return atomic_write(Path(directory) / name, self.to_key_values().encode('utf-8'))

    def scene_config(self) -> SceneConfig:
        return SceneConfig(
            image_size=self.image_size,
            count_range=self.count_range,
            sheep_length_range=self.sheep_length_range,
            sheep_width_range=self.sheep_width_range,
            brightness_range=self.brightness_range,
            fence_probability=self.fence_probability,
            shadow_offset=self.shadow_offset,
            min_separation=self.min_separation,
            allow_overlap=self.allow_overlap,
            contrast_margin=self.contrast_margin,
            seed=self.seed,
        )

    def unet_config(self, input_size: Optional[int] = None) -> UNetConfig:
        return UNetConfig(
            input_size=input_size or self.image_size,
            contraction_channels=self.unet_contraction_channels,
            expansion_channels=self.unet_expansion_channels,
            width_scale=self.unet_width_scale,
        )

    def rcnn_config(self, variant: str) -> RcnnNetConfig:
        return RcnnNetConfig(
            variant=variant,
            patch_size=self.network1_patch_size if variant == 'network1' else self.network2_patch_size,
            network1_kernels=self.network1_kernels,
            network1_kernel_size=self.network1_kernel_size,
            network1_stride=self.network1_stride,
            width_scale=self.rcnn_width_scale,
        )

    def train_config(self, checkpoint_dir: Optional[PathLike] = None) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            batch_size=self.batch_size,
            epochs=self.epochs,
            validate_every=self.validate_every,
            seed=self.seed,
            loss_kind=self.loss_kind or LOSS_FOR_MODEL[self.model],
            whd_alpha=self.whd_alpha,
            whd_epsilon=self.whd_epsilon,
            checkpoint_dir=checkpoint_dir,
            early_stop_patience=self.early_stop_patience,
            positives_per_image=self.positives_per_image,
            negative_ratio=self.negative_ratio,
            proposals_per_image=self.proposals_per_image,
            augment=self.augment,
        )

    def extraction_params(self) -> ExtractionParams:
        return ExtractionParams(
            threshold_mode=self.threshold_mode,
            fixed_threshold=self.fixed_threshold,
            min_component_area=self.min_component_area,
            reconcile_with_count=self.reconcile_with_count,
        )

    def detector_params(self) -> DetectorParams:
        return DetectorParams(
            scales=self.proposal_scales,
            stride=self.proposal_stride,
            score_threshold=self.score_threshold,
            nms_threshold=self.nms_threshold,
        )

    @property
    def match_radius(self) -> float:
        """Explicit radius, or half the nominal sheep length"""
        if self.radius is not None:
            return self.radius
        low, high = self.sheep_length_range
        return (low + high) / 4.0
