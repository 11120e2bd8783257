"""Architecture descriptors for the IBI regressor."""

import json
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

from core.exceptions import ArchitectureError

LAYER_KINDS = ("batchnorm", "conv", "dwsep", "maxpool", "gap", "flatten", "dense")
ACTIVATIONS = (None, "swish", "relu")


@dataclass
class LayerSpec:
    """One entry of the ordered layer stack."""

    kind: str
    channels: Optional[int] = None
    kernel: Optional[int] = None
    stride: int = 1
    pool: Optional[int] = None
    activation: Optional[str] = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ArchitectureError(f"Unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ArchitectureError(f"Unknown activation {self.activation!r}")

    def to_dict(self) -> Dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'LayerSpec':
        return cls(**data)


@dataclass
class ArchConfig:
    """Ordered layer descriptors plus input length and output width."""

    layers: List[LayerSpec] = field(default_factory=list)
    input_length: int = 4910
    output_width: int = 7

    def check(self) -> None:
        """Raise ArchitectureError unless the stack starts with batchnorm and ends in the output width."""
        if not self.layers or self.layers[0].kind != "batchnorm":
            raise ArchitectureError("First layer must be batch normalization")
        last = self.layers[-1]
        if last.kind != "dense" or last.channels != self.output_width:
            raise ArchitectureError(f"Final layer must be dense with width {self.output_width}")
        if self.input_length < 1:
            raise ArchitectureError(f"input_length must be positive, got {self.input_length}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'layers': [layer.to_dict() for layer in self.layers],
            'input_length': self.input_length,
            'output_width': self.output_width,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ArchConfig':
        return cls(
            layers=[LayerSpec.from_dict(layer) for layer in data['layers']],
            input_length=data.get('input_length', 4910),
            output_width=data.get('output_width', 7),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> 'ArchConfig':
        return cls.from_dict(json.loads(text))


def default_arch(dense_widths=(1024, 736)) -> ArchConfig:
    """
    The full-size network.

    Convolutional stem and depthwise-separable blocks with swish, global
    average pooling, then a ReLU dense head. The dense widths set the
    parameter budget (1,085,609 with the defaults).
    """
    layers = [
        LayerSpec("batchnorm"),
        LayerSpec("conv", channels=32, kernel=15, stride=2, activation="swish"),
        LayerSpec("maxpool", pool=2),
        LayerSpec("dwsep", channels=64, kernel=9, activation="swish"),
        LayerSpec("maxpool", pool=2),
        LayerSpec("dwsep", channels=128, kernel=9, activation="swish"),
        LayerSpec("maxpool", pool=2),
        LayerSpec("dwsep", channels=128, kernel=7, activation="swish"),
        LayerSpec("maxpool", pool=2),
        LayerSpec("dwsep", channels=256, kernel=5, activation="swish"),
        LayerSpec("gap"),
    ]
    layers += [LayerSpec("dense", channels=width, activation="relu") for width in dense_widths]
    layers.append(LayerSpec("dense", channels=7))
    return ArchConfig(layers=layers)


def tiny_arch(input_length: int = 64, dense_width: int = 16) -> ArchConfig:
    """Two conv blocks and one hidden dense layer; small enough for full gradient checks."""
    return ArchConfig(
        layers=[
            LayerSpec("batchnorm"),
            LayerSpec("conv", channels=4, kernel=5, stride=2, activation="swish"),
            LayerSpec("maxpool", pool=2),
            LayerSpec("dwsep", channels=8, kernel=3, activation="swish"),
            LayerSpec("gap"),
            LayerSpec("dense", channels=dense_width, activation="relu"),
            LayerSpec("dense", channels=7),
        ],
        input_length=input_length,
    )
