"""Validated configuration models for training and evaluation."""

from typing import Any, Dict, Literal, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.exceptions import ParameterError

PAPER_BATCH_SIZE = 1024
PAPER_EPOCHS = 200
DESK_BATCH_SIZE = 64
DESK_EPOCHS = 30

LOSS_KEYS = ("w1", "w2", "w3", "w4", "huber_delta", "correlation_fallback")
METRIC_KEYS = ("alpha1", "alpha2", "alpha3")


class _Config(BaseModel):
    """Base for config models: unknown keys are rejected and failures surface as ParameterError."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    def __init__(self, **data: Any):
        try:
            super().__init__(**data)
        except ValidationError as e:
            raise ParameterError(f"Invalid {type(self).__name__}: {e}") from e


class LossWeights(_Config):
    """Weights of the correlation, Huber, MSE and MAE terms of the training loss."""

    w1: float = Field(0.002, ge=0)
    w2: float = Field(1.0032, ge=0)
    w3: float = Field(0.0096, ge=0)
    w4: float = Field(0.002, ge=0)
    huber_delta: float = Field(1.0, gt=0)
    # Skip the correlation term for batches of one instead of raising.
    correlation_fallback: bool = False

    @model_validator(mode='after')
    def _any_positive(self) -> 'LossWeights':
        if max(self.w1, self.w2, self.w3, self.w4) <= 0:
            raise ValueError("at least one loss weight must be positive")
        return self

    @classmethod
    def huber_only(cls, huber_delta: float = 1.0) -> 'LossWeights':
        """Plain Huber regression, the comparison baseline."""
        return cls(w1=0.0, w2=1.0, w3=0.0, w4=0.0, huber_delta=huber_delta)


class MetricWeights(_Config):
    """Weights of the checkpoint-selection metric."""

    alpha1: float = Field(10.0, ge=0)
    alpha2: float = Field(0.1, ge=0)
    alpha3: float = Field(0.1, ge=0)


class TrainConfig(_Config):
    """Everything needed to reproduce one training run."""

    batch_size: int = Field(DESK_BATCH_SIZE, ge=2)
    epochs: int = Field(DESK_EPOCHS, ge=1)
    seed: int = Field(0, ge=0)
    loss_preset: Literal['weighted', 'huber'] = 'weighted'
    loss: LossWeights = Field(default_factory=LossWeights)
    metric: MetricWeights = Field(default_factory=MetricWeights)
    dense_widths: Tuple[int, ...] = (1024, 736)
    repad_per_epoch: bool = False
    augment: bool = False
    fold_id: int = -1
    full_scale: bool = False
    eval_batch_size: int = Field(256, ge=1)

    @property
    def loss_weights(self) -> LossWeights:
        """Loss weights after applying the preset."""
        if self.loss_preset == 'huber':
            return LossWeights.huber_only(self.loss.huber_delta)
        return self.loss

    def to_flat(self) -> Dict[str, Any]:
        """Flat snapshot with loss and metric weights inlined, the shape of the config file."""
        data = self.model_dump(exclude={'loss', 'metric'})
        data['dense_widths'] = list(self.dense_widths)
        data.update(self.loss.model_dump())
        data.update(self.metric.model_dump())
        return data

    @classmethod
    def from_flat(cls, values: Dict[str, Any]) -> 'TrainConfig':
        """Inverse of `to_flat`; also applies the full-scale batch and epoch defaults."""
        values = {k: v for k, v in values.items() if v is not None}
        loss = {k: values.pop(k) for k in LOSS_KEYS if k in values}
        metric = {k: values.pop(k) for k in METRIC_KEYS if k in values}
        if isinstance(values.get('dense_widths'), str):
            values['dense_widths'] = tuple(values['dense_widths'].replace(',', ' ').split())
        if _truthy(values.get('full_scale')):
            values.setdefault('batch_size', PAPER_BATCH_SIZE)
            values.setdefault('epochs', PAPER_EPOCHS)
        return cls(loss=LossWeights(**loss), metric=MetricWeights(**metric), **values)


def _truthy(value: Any) -> bool:
    if isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes", "on")
    return bool(value)
