"""
Differentiable 1D operators and the layers built from them.

Tensors are plain numpy arrays laid out as (batch, channels, length) for
sequence data and (batch, features) after pooling. Every operator computes in
the dtype of its inputs, so the same code runs in float32 for training and in
float64 for gradient checks.
"""

from typing import Dict, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from core.exceptions import ParameterError, ShapeError

Tensor = np.ndarray

BN_MOMENTUM = 0.9
BN_EPS = 1e-5


def _require_3d(x: Tensor, op: str) -> None:
    if x.ndim != 3:
        raise ShapeError(f"{op}: expected input of shape (B, C, L), got {x.shape}")


def _pad(x: Tensor, padding: int) -> Tensor:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding)))


def output_length(length: int, kernel: int, stride: int = 1, padding: int = 0) -> int:
    return (length + 2 * padding - kernel) // stride + 1


def _strided(xp: Tensor, k: int, stride: int, l_out: int) -> Tensor:
    """The samples that kernel tap k touches, one per output position."""
    return xp[:, :, k:k + stride * (l_out - 1) + 1:stride]


# ------------------------------------------------------------------ convolution

def conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor], stride: int = 1,
           padding: int = 0) -> Tensor:
    """
    Cross-correlation of x (B, Cin, L) with weight (Cout, Cin, K).

    Args:
        x: Input batch
        weight: Kernels, one per output channel
        bias: Optional per-output-channel offset
        stride: Step between output positions
        padding: Zeros added on both ends of the length axis

    Returns:
        Output of shape (B, Cout, L_out)

    Raises:
        ShapeError: If the channels disagree or the kernel outruns the padded input
    """
    _require_3d(x, "conv1d")
    if weight.ndim != 3 or weight.shape[1] != x.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} does not match weight {weight.shape}")
    k = weight.shape[2]
    l_out = output_length(x.shape[2], k, stride, padding)
    if l_out <= 0:
        raise ShapeError(f"conv1d: kernel {weight.shape} longer than padded input {x.shape}")

    cols = sliding_window_view(_pad(x, padding), k, axis=2)[:, :, ::stride][:, :, :l_out]
    y = np.tensordot(cols, weight, axes=([1, 3], [1, 2])).transpose(0, 2, 1)
    if bias is not None:
        y = y + bias[None, :, None]
    return np.ascontiguousarray(y)


def conv1d_backward(dout: Tensor, x: Tensor, weight: Tensor, stride: int = 1,
                    padding: int = 0) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Gradients of conv1d with respect to its input, weight and bias.

    Args:
        dout: Upstream gradient (B, Cout, L_out)
        x: Forward input (B, Cin, L)
        weight: Forward kernel (Cout, Cin, K)
        stride, padding: As passed to conv1d

    Returns:
        (dx, dweight, dbias) shaped like x, weight and (Cout,)
    """
    k = weight.shape[2]
    l_out = dout.shape[2]
    xp = _pad(x, padding)
    cols = sliding_window_view(xp, k, axis=2)[:, :, ::stride][:, :, :l_out]

    dweight = np.tensordot(dout, cols, axes=([0, 2], [0, 2]))
    dbias = dout.sum(axis=(0, 2))
    dcols = np.tensordot(dout, weight, axes=([1], [0]))  # (B, L_out, Cin, K)
    dxp = np.zeros(xp.shape, dtype=np.result_type(dout, weight))
    for tap in range(k):
        _strided(dxp, tap, stride, l_out)[...] += dcols[:, :, :, tap].transpose(0, 2, 1)
    return dxp[:, :, padding:padding + x.shape[2]], dweight, dbias


def depthwise_conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
                     stride: int = 1, padding: int = 0) -> Tensor:
    """One kernel per channel: weight has shape (C, K)."""
    _require_3d(x, "depthwise_conv1d")
    if weight.ndim != 2 or weight.shape[0] != x.shape[1]:
        raise ShapeError(f"depthwise_conv1d: input {x.shape} does not match weight {weight.shape}")
    k = weight.shape[1]
    l_out = output_length(x.shape[2], k, stride, padding)
    if l_out <= 0:
        raise ShapeError(f"depthwise_conv1d: kernel {weight.shape} longer than padded input {x.shape}")

    xp = _pad(x, padding)
    y = np.zeros((x.shape[0], x.shape[1], l_out), dtype=np.result_type(x, weight))
    for tap in range(k):
        y += _strided(xp, tap, stride, l_out) * weight[None, :, tap, None]
    if bias is not None:
        y += bias[None, :, None]
    return y


def depthwise_conv1d_backward(dout: Tensor, x: Tensor, weight: Tensor, stride: int = 1,
                              padding: int = 0) -> Tuple[Tensor, Tensor, Tensor]:
    """Gradients (dx, dweight, dbias) of depthwise_conv1d."""
    k = weight.shape[1]
    l_out = dout.shape[2]
    xp = _pad(x, padding)
    dweight = np.zeros(weight.shape, dtype=np.result_type(dout, x))
    dxp = np.zeros(xp.shape, dtype=np.result_type(dout, weight))
    for tap in range(k):
        dweight[:, tap] = (dout * _strided(xp, tap, stride, l_out)).sum(axis=(0, 2))
        _strided(dxp, tap, stride, l_out)[...] += dout * weight[None, :, tap, None]
    return dxp[:, :, padding:padding + x.shape[2]], dweight, dout.sum(axis=(0, 2))


def pointwise_conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """1x1 convolution mixing channels: weight has shape (Cout, Cin)."""
    _require_3d(x, "pointwise_conv1d")
    if weight.ndim != 2 or weight.shape[1] != x.shape[1]:
        raise ShapeError(f"pointwise_conv1d: input {x.shape} does not match weight {weight.shape}")
    y = np.matmul(weight, x)
    if bias is not None:
        y += bias[None, :, None]
    return y


def pointwise_conv1d_backward(dout: Tensor, x: Tensor,
                              weight: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    """Gradients (dx, dweight, dbias) of pointwise_conv1d."""
    dweight = np.tensordot(dout, x, axes=([0, 2], [0, 2]))
    return np.matmul(weight.T, dout), dweight, dout.sum(axis=(0, 2))


def depthwise_separable_conv1d(x: Tensor, depthwise_weight: Tensor, pointwise_weight: Tensor,
                               pointwise_bias: Optional[Tensor] = None,
                               depthwise_bias: Optional[Tensor] = None,
                               stride: int = 1, padding: int = 0) -> Tensor:
    """Depthwise convolution followed by a 1x1 pointwise convolution."""
    hidden = depthwise_conv1d(x, depthwise_weight, depthwise_bias, stride, padding)
    return pointwise_conv1d(hidden, pointwise_weight, pointwise_bias)


# ------------------------------------------------------------------ normalisation

def batchnorm1d(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: Tensor,
                running_var: Tensor, training: bool, momentum: float = BN_MOMENTUM,
                eps: float = BN_EPS) -> Tuple[Tensor, tuple]:
    """
    Per-channel batch normalisation over (batch, length).

    In training mode the batch statistics are used and the running
    statistics are updated in place; in eval mode the running statistics
    are used and left untouched.
    """
    _require_3d(x, "batchnorm1d")
    if training:
        if x.shape[0] < 2:
            raise ParameterError("batchnorm1d: training mode needs a batch of at least 2")
        mean = x.mean(axis=(0, 2))
        var = x.var(axis=(0, 2))
        running_mean *= momentum
        running_mean += (1 - momentum) * mean
        running_var *= momentum
        running_var += (1 - momentum) * var
    else:
        mean, var = running_mean, running_var

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None]) * inv_std[None, :, None]
    y = gamma[None, :, None] * xhat + beta[None, :, None]
    return y.astype(np.result_type(x, gamma), copy=False), (xhat, inv_std, gamma, training)


def batchnorm1d_backward(dout: Tensor, cache: tuple) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Gradients (dx, dgamma, dbeta) of batchnorm1d.

    Args:
        dout: Upstream gradient, shaped like the forward output
        cache: Second value returned by the forward call

    Returns:
        dx, dgamma, dbeta; in training mode dx also flows through the batch
        statistics, so it sums to zero per channel
    """
    xhat, inv_std, gamma, training = cache
    dgamma = (dout * xhat).sum(axis=(0, 2))
    dbeta = dout.sum(axis=(0, 2))
    dxhat = dout * gamma[None, :, None]
    if not training:
        return dxhat * inv_std[None, :, None], dgamma, dbeta
    n = dout.shape[0] * dout.shape[2]
    dx = (inv_std[None, :, None] / n) * (
        n * dxhat
        - dxhat.sum(axis=(0, 2))[None, :, None]
        - xhat * (dxhat * xhat).sum(axis=(0, 2))[None, :, None]
    )
    return dx, dgamma, dbeta


# ------------------------------------------------------------------ pooling & dense

def maxpool1d(x: Tensor, window: int, stride: int) -> Tuple[Tensor, Tensor]:
    """Max over sliding windows; also returns the in-window argmax for the backward pass."""
    _require_3d(x, "maxpool1d")
    l_out = output_length(x.shape[2], window, stride)
    if l_out <= 0:
        raise ShapeError(f"maxpool1d: window {window} longer than input {x.shape}")
    cols = sliding_window_view(x, window, axis=2)[:, :, ::stride][:, :, :l_out]
    arg = cols.argmax(axis=3)
    return np.take_along_axis(cols, arg[..., None], axis=3)[..., 0], arg


def maxpool1d_backward(dout: Tensor, arg: Tensor, length: int, window: int,
                       stride: int) -> Tensor:
    """Route each pooled gradient back to the argmax of its window."""
    dx = np.zeros((dout.shape[0], dout.shape[1], length), dtype=dout.dtype)
    l_out = dout.shape[2]
    for tap in range(window):
        _strided(dx, tap, stride, l_out)[...] += np.where(arg == tap, dout, 0)
    return dx


def global_average_pool(x: Tensor) -> Tensor:
    """Mean over the length axis: (B, C, L) to (B, C)."""
    _require_3d(x, "global_average_pool")
    return x.mean(axis=2)


def global_average_pool_backward(dout: Tensor, length: int) -> Tensor:
    """Spread each gradient evenly over the pooled length."""
    return np.repeat(dout[:, :, None] / length, length, axis=2)


def flatten(x: Tensor) -> Tensor:
    return x.reshape(x.shape[0], -1)


def dense(x: Tensor, weight: Tensor, bias: Optional[Tensor]) -> Tensor:
    """x (B, in) @ weight (in, out) + bias (out,)."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"dense: input {x.shape} does not match weight {weight.shape}")
    y = x @ weight
    if bias is not None:
        y += bias
    return y


def dense_backward(dout: Tensor, x: Tensor, weight: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    """Gradients (dx, dweight, dbias) of dense."""
    return dout @ weight.T, x.T @ dout, dout.sum(axis=0)


# ------------------------------------------------------------------ activations

def swish(x: Tensor) -> Tensor:
    return x * expit(x)


def swish_backward(dout: Tensor, x: Tensor) -> Tensor:
    """Derivative of x * sigmoid(x), chained with dout."""
    s = expit(x)
    return dout * (s * (1 + x * (1 - s)))


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0)


def relu_backward(dout: Tensor, x: Tensor) -> Tensor:
    """Pass dout where x was positive."""
    return dout * (x > 0)


def he_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> Tensor:
    """Uniform in +-sqrt(6 / fan_in), as float32."""
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


# ------------------------------------------------------------------ layers

class Layer:
    """
    A stage of the network with named parameters and matching gradients.

    `forward` caches what `backward` needs; `backward` fills `grads` and
    returns the gradient with respect to the layer input.
    """

    kind = "layer"

    def __init__(self, name: str):
        self.name = name
        self.params: Dict[str, Tensor] = {}
        self.grads: Dict[str, Tensor] = {}
        self.buffers: Dict[str, Tensor] = {}
        self._cache = None

    def forward(self, x: Tensor, training: bool = False) -> Tensor:
        raise NotImplementedError

    def backward(self, dout: Tensor) -> Tensor:
        raise NotImplementedError

    def output_shape(self, channels: int, length: int) -> Tuple[int, int]:
        """(channels, length) produced from an input of (channels, length); length 0 means flat."""
        return channels, length

    def zero_grad(self) -> None:
        for key, value in self.params.items():
            self.grads[key] = np.zeros_like(value)

    def astype(self, dtype) -> 'Layer':
        """Cast parameters and buffers in place (used for float64 gradient checks)."""
        for store in (self.params, self.buffers):
            for key in store:
                store[key] = store[key].astype(dtype)
        self.zero_grad()
        return self

    def param_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r}, params={self.param_count()})"


class BatchNorm1d(Layer):
    kind = "batchnorm"

    def __init__(self, name: str, channels: int):
        super().__init__(name)
        self.params = {'gamma': np.ones(channels, np.float32), 'beta': np.zeros(channels, np.float32)}
        self.buffers = {'running_mean': np.zeros(channels, np.float32),
                        'running_var': np.ones(channels, np.float32)}
        self.zero_grad()

    def forward(self, x, training=False):
        y, self._cache = batchnorm1d(x, self.params['gamma'], self.params['beta'],
                                     self.buffers['running_mean'], self.buffers['running_var'],
                                     training)
        return y

    def backward(self, dout):
        dx, self.grads['gamma'], self.grads['beta'] = batchnorm1d_backward(dout, self._cache)
        return dx


class Conv1d(Layer):
    kind = "conv"

    def __init__(self, name: str, in_channels: int, out_channels: int, kernel: int,
                 stride: int = 1, padding: Optional[int] = None,
                 rng: Optional[np.random.Generator] = None):
        super().__init__(name)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        self.params = {
            'weight': he_uniform(rng, (out_channels, in_channels, kernel), in_channels * kernel),
            'bias': np.zeros(out_channels, np.float32),
        }
        self.zero_grad()

    def forward(self, x, training=False):
        self._cache = x
        return conv1d(x, self.params['weight'], self.params['bias'], self.stride, self.padding)

    def backward(self, dout):
        dx, self.grads['weight'], self.grads['bias'] = conv1d_backward(
            dout, self._cache, self.params['weight'], self.stride, self.padding)
        return dx

    def output_shape(self, channels, length):
        out_channels, _, kernel = self.params['weight'].shape
        return out_channels, output_length(length, kernel, self.stride, self.padding)


class DepthwiseSeparableConv1d(Layer):
    kind = "dwsep"

    def __init__(self, name: str, in_channels: int, out_channels: int, kernel: int,
                 stride: int = 1, padding: Optional[int] = None,
                 rng: Optional[np.random.Generator] = None):
        super().__init__(name)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        self.params = {
            'depthwise': he_uniform(rng, (in_channels, kernel), kernel),
            'pointwise': he_uniform(rng, (out_channels, in_channels), in_channels),
            'bias': np.zeros(out_channels, np.float32),
        }
        self.zero_grad()

    def forward(self, x, training=False):
        hidden = depthwise_conv1d(x, self.params['depthwise'], None, self.stride, self.padding)
        self._cache = (x, hidden)
        return pointwise_conv1d(hidden, self.params['pointwise'], self.params['bias'])

    def backward(self, dout):
        x, hidden = self._cache
        dhidden, self.grads['pointwise'], self.grads['bias'] = pointwise_conv1d_backward(
            dout, hidden, self.params['pointwise'])
        dx, self.grads['depthwise'], _ = depthwise_conv1d_backward(
            dhidden, x, self.params['depthwise'], self.stride, self.padding)
        return dx

    def output_shape(self, channels, length):
        kernel = self.params['depthwise'].shape[1]
        return (self.params['pointwise'].shape[0],
                output_length(length, kernel, self.stride, self.padding))


class MaxPool1d(Layer):
    kind = "maxpool"

    def __init__(self, name: str, window: int = 2, stride: Optional[int] = None):
        super().__init__(name)
        self.window = window
        self.stride = window if stride is None else stride

    def forward(self, x, training=False):
        y, arg = maxpool1d(x, self.window, self.stride)
        self._cache = (arg, x.shape[2])
        return y

    def backward(self, dout):
        arg, length = self._cache
        return maxpool1d_backward(dout, arg, length, self.window, self.stride)

    def output_shape(self, channels, length):
        return channels, output_length(length, self.window, self.stride)


class GlobalAveragePool1d(Layer):
    kind = "gap"

    def forward(self, x, training=False):
        self._cache = x.shape[2]
        return global_average_pool(x)

    def backward(self, dout):
        return global_average_pool_backward(dout, self._cache)

    def output_shape(self, channels, length):
        return channels, 0


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, training=False):
        self._cache = x.shape
        return flatten(x)

    def backward(self, dout):
        return dout.reshape(self._cache)

    def output_shape(self, channels, length):
        return channels * max(length, 1), 0


class Dense(Layer):
    kind = "dense"

    def __init__(self, name: str, in_features: int, out_features: int,
                 rng: Optional[np.random.Generator] = None):
        super().__init__(name)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = {
            'weight': he_uniform(rng, (in_features, out_features), in_features),
            'bias': np.zeros(out_features, np.float32),
        }
        self.zero_grad()

    def forward(self, x, training=False):
        self._cache = x
        return dense(x, self.params['weight'], self.params['bias'])

    def backward(self, dout):
        dx, self.grads['weight'], self.grads['bias'] = dense_backward(
            dout, self._cache, self.params['weight'])
        return dx

    def output_shape(self, channels, length):
        return self.params['weight'].shape[1], 0


class Swish(Layer):
    kind = "swish"

    def forward(self, x, training=False):
        self._cache = x
        return swish(x)

    def backward(self, dout):
        return swish_backward(dout, self._cache)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False):
        self._cache = x
        return relu(x)

    def backward(self, dout):
        return relu_backward(dout, self._cache)
