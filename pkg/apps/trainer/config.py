# apps/trainer/config.py
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from apps.losses.hausdorff import WhdParams

LOSS_FOR_MODEL = {'unet': 'whd', 'network1': 'cross-entropy', 'network2': 'cross-entropy'}


class TrainConfig(BaseModel):
    """SGD-with-momentum training recipe shared by both loss paths"""

    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(default=1e-4, gt=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    batch_size: int = Field(default=10, ge=1)
    epochs: int = Field(default=100, ge=1)
    validate_every: int = Field(default=2, ge=1)
    seed: int = Field(default=0, ge=0)
    loss_kind: Literal['whd', 'cross-entropy'] = 'whd'
    whd_alpha: float = Field(default=4.0, ge=1)
    whd_epsilon: float = Field(default=1e-6, gt=0)
    whd_d_max: Optional[float] = Field(default=None, gt=0)
    checkpoint_dir: Optional[Path] = None
    early_stop_patience: Optional[int] = Field(default=20, ge=1)
    positives_per_image: int = Field(default=2, ge=1)
    negative_ratio: int = Field(default=3, ge=0)
    proposals_per_image: int = Field(default=256, ge=1)
    augment: bool = False

    @field_validator('early_stop_patience', 'whd_d_max', 'checkpoint_dir', mode='before')
    @classmethod
    def _empty_is_none(cls, value):
        if isinstance(value, str) and value.strip().lower() in ('', 'none'):
            return None
        return value

    @classmethod
    def paper(cls, **overrides) -> 'TrainConfig':
        return cls(**{'epochs': 500, **overrides})

    def whd_params(self, height: int, width: int) -> WhdParams:
        return WhdParams(
            image_height=height, image_width=width,
            alpha=self.whd_alpha, epsilon=self.whd_epsilon, d_max=self.whd_d_max,
        )
