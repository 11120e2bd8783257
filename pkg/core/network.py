"""The IBI regressor: assembly from an ArchConfig, forward/backward and parameter bookkeeping."""

import logging
from typing import Any, Dict, List, Optional

import numpy as np

from core.exceptions import ArchitectureError, ParameterError, ShapeError
from core.nncore import (BatchNorm1d, Conv1d, Dense, DepthwiseSeparableConv1d, Flatten,
                         GlobalAveragePool1d, Layer, MaxPool1d, ReLU, Swish)
from models.architecture import ArchConfig, LayerSpec

logger = logging.getLogger(__name__)

MODES = ("train", "eval")


class Mibinet:
    """An ordered layer stack with named parameters `<layer>.<param>`."""

    def __init__(self, config: ArchConfig, layers: List[Layer]):
        self.config = config
        self.layers = layers
        self.metadata: Dict[str, Any] = {}
        self.optimizer_state = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        expected = (1, self.config.input_length)
        if x.ndim != 3 or x.shape[1:] != expected:
            raise ShapeError(f"Model input must be (B, {expected[0]}, {expected[1]}), got {x.shape}")
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def named_parameters(self) -> Dict[str, np.ndarray]:
        return {f"{layer.name}.{key}": value
                for layer in self.layers for key, value in layer.params.items()}

    def named_grads(self) -> Dict[str, np.ndarray]:
        return {f"{layer.name}.{key}": value
                for layer in self.layers for key, value in layer.grads.items()}

    def named_buffers(self) -> Dict[str, np.ndarray]:
        return {f"{layer.name}.{key}": value
                for layer in self.layers for key, value in layer.buffers.items()}

    def load_state(self, tensors: Dict[str, np.ndarray]) -> None:
        """Copy parameter and buffer values in by name; every name must be present."""
        for layer in self.layers:
            for store in (layer.params, layer.buffers):
                for key in store:
                    name = f"{layer.name}.{key}"
                    if name not in tensors:
                        raise ArchitectureError(f"Missing tensor {name}")
                    if tensors[name].shape != store[key].shape:
                        raise ArchitectureError(
                            f"Tensor {name} has shape {tensors[name].shape}, expected {store[key].shape}"
                        )
                    store[key] = tensors[name].astype(store[key].dtype).copy()
            layer.zero_grad()

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()

    def astype(self, dtype) -> 'Mibinet':
        for layer in self.layers:
            layer.astype(dtype)
        return self

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers)

    def __repr__(self) -> str:
        return f"Mibinet(layers={len(self.layers)}, params={self.param_count()})"


def _build_layer(spec: LayerSpec, name: str, channels: int,
                 rng: np.random.Generator) -> Layer:
    if spec.kind == "batchnorm":
        return BatchNorm1d(name, channels)
    if spec.kind == "conv":
        return Conv1d(name, channels, spec.channels, spec.kernel, spec.stride, rng=rng)
    if spec.kind == "dwsep":
        return DepthwiseSeparableConv1d(name, channels, spec.channels, spec.kernel, spec.stride, rng=rng)
    if spec.kind == "maxpool":
        return MaxPool1d(name, spec.pool or 2, spec.stride if spec.stride > 1 else None)
    if spec.kind == "gap":
        return GlobalAveragePool1d(name)
    if spec.kind == "flatten":
        return Flatten(name)
    if spec.kind == "dense":
        return Dense(name, channels, spec.channels, rng=rng)
    raise ArchitectureError(f"Unknown layer kind {spec.kind!r}")


def build_mibinet(config: ArchConfig, seed: int) -> Mibinet:
    """
    Instantiate every layer of an ArchConfig with He-uniform weights from `seed`.

    Raises:
        ArchitectureError: if the config is invalid or a layer would produce a
            non-positive length; the message names the offending layer
    """
    config.check()
    rng = np.random.default_rng(seed)
    layers: List[Layer] = []
    channels, length = 1, config.input_length

    for index, spec in enumerate(config.layers):
        name = f"{index:02d}_{spec.kind}"
        flat = length == 0
        if spec.kind == "dense" and not flat:
            raise ArchitectureError(f"Layer {name}: dense layer needs a gap or flatten layer before it")
        if spec.kind in ("batchnorm", "conv", "dwsep", "maxpool", "gap", "flatten") and flat:
            raise ArchitectureError(f"Layer {name}: {spec.kind} needs a (channels, length) input")

        layer = _build_layer(spec, name, channels, rng)
        channels, new_length = layer.output_shape(channels, length)
        if spec.kind in ("conv", "dwsep", "maxpool") and new_length <= 0:
            raise ArchitectureError(
                f"Layer {name}: output length {new_length} from input length {length}"
            )
        length = new_length
        layers.append(layer)

        if spec.activation == "swish":
            layers.append(Swish(f"{index:02d}_swish"))
        elif spec.activation == "relu":
            layers.append(ReLU(f"{index:02d}_relu"))

    model = Mibinet(config, layers)
    logger.debug(f"Built {model!r}")
    return model


def forward(model: Mibinet, batch: np.ndarray, mode: str = "eval") -> np.ndarray:
    """Run a (B, 1, L) batch through the model in 'train' or 'eval' mode."""
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")
    return model.forward(batch, training=mode == "train")


def param_count(model: Mibinet) -> int:
    """Exact number of trainable parameter elements."""
    return model.param_count()


def predict(model: Mibinet, inputs: np.ndarray, batch_size: int = 256,
            dtype: Optional[np.dtype] = np.float32) -> np.ndarray:
    """
    Eval-mode predictions for (N, L) inputs, computed batch by batch.

    Args:
        model: Network to run
        inputs: Windows, one per row
        batch_size: Rows per forward pass
        dtype: Cast applied to each batch before the forward pass

    Returns:
        Predictions of shape (N, output_width)
    """
    outputs = []
    for start in range(0, len(inputs), batch_size):
        batch = inputs[start:start + batch_size, None, :].astype(dtype, copy=False)
        outputs.append(model.forward(batch, training=False))
    if not outputs:
        return np.zeros((0, model.config.output_width), dtype=np.float32)
    return np.concatenate(outputs, axis=0)
