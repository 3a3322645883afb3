"""Minimal dense-tensor neural-network kernel.

Forward and backward passes for the layer types used by the model zoo
(fully connected, valid 2-D convolution, 2x2 max pooling, ReLU, LSTM),
a softmax cross-entropy head, plain SGD, and a central-difference
gradient oracle for testing.

All production tensors are float32 numpy arrays with 1-4 dimensions.
Kernels preserve the dtype of their inputs so the gradient oracle can run
the same code in a float64 shadow of a model.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .errors import DimensionError, StateError, ValidationError

DTYPE = np.float32

MAX_NDIM = 4


def _check_tensor(name: str, x: np.ndarray) -> None:
    if not isinstance(x, np.ndarray):
        raise DimensionError(f"{name} must be a numpy array, got {type(x).__name__}")
    if x.ndim < 1 or x.ndim > MAX_NDIM:
        raise DimensionError(f"{name} must have 1-{MAX_NDIM} dimensions, got {x.ndim}")


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Parameter:
    """A named weight tensor and its gradient accumulator."""

    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if not self.name:
            raise ValidationError("parameter name must be non-empty")
        _check_tensor(self.name, self.value)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise DimensionError(
                f"grad shape {self.grad.shape} != value shape {self.value.shape} "
                f"for parameter {self.name!r}"
            )

    @property
    def size(self) -> int:
        return int(self.value.size)


class ParameterSet:
    """Ordered, name-unique collection of parameters for one model.

    This is the unit exchanged between the aggregation server and the
    workers: cloning, loading received values, and gradient bookkeeping
    all happen here.
    """

    def __init__(self, params: Iterable[Parameter]):
        self._params: list[Parameter] = list(params)
        names = [p.name for p in self._params]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValidationError(f"duplicate parameter names: {dupes}")
        self._by_name = {p.name: p for p in self._params}

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def __getitem__(self, key: int | str) -> Parameter:
        if isinstance(key, str):
            return self._by_name[key]
        return self._params[key]

    def __eq__(self, other) -> bool:
        """Equal when names, shapes, dtypes, and value bytes all match."""
        if not isinstance(other, ParameterSet):
            return NotImplemented
        if self.names() != other.names():
            return False
        return all(
            a.value.shape == b.value.shape
            and a.value.dtype == b.value.dtype
            and np.array_equal(a.value, b.value)
            for a, b in zip(self._params, other._params)
        )

    def names(self) -> list[str]:
        return [p.name for p in self._params]

    @property
    def count(self) -> int:
        """Total number of scalar parameters."""
        return sum(p.size for p in self._params)

    def zero_grads(self) -> None:
        for p in self._params:
            p.grad[...] = 0

    def clone(self) -> "ParameterSet":
        """Deep copy of the values; gradients start at zero."""
        return ParameterSet(
            Parameter(p.name, p.value.copy()) for p in self._params
        )

    def astype(self, dtype) -> "ParameterSet":
        return ParameterSet(
            Parameter(p.name, p.value.astype(dtype)) for p in self._params
        )

    def load_values(self, other: "ParameterSet") -> None:
        """Overwrite values with another set's; names and shapes must match."""
        if other.names() != self.names():
            raise DimensionError(
                f"parameter names differ: {other.names()} vs {self.names()}"
            )
        for mine, theirs in zip(self._params, other._params):
            if mine.value.shape != theirs.value.shape:
                raise DimensionError(
                    f"shape mismatch for {mine.name!r}: "
                    f"{theirs.value.shape} vs {mine.value.shape}"
                )
            mine.value[...] = theirs.value
            mine.grad[...] = 0

    def to_pairs(self) -> list[tuple[str, np.ndarray]]:
        return [(p.name, p.value) for p in self._params]


def sgd_step(params: ParameterSet, lr: float) -> None:
    """In-place SGD update: value <- value - lr * grad, then clear grads."""
    if lr <= 0:
        raise ValidationError(f"learning rate must be positive, got {lr}")
    for p in params:
        p.value -= p.value.dtype.type(lr) * p.grad
        p.grad[...] = 0


# ---------------------------------------------------------------------------
# Functional kernels
# ---------------------------------------------------------------------------


def fc_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """y[i, j] = sum_k x[i, k] * w[k, j] + b[j]."""
    if x.ndim != 2 or w.ndim != 2:
        raise DimensionError(f"fc expects 2-D x and w, got {x.ndim}-D and {w.ndim}-D")
    if x.shape[1] != w.shape[0]:
        raise DimensionError(
            f"fc inner axis mismatch: x has {x.shape[1]} columns, w has {w.shape[0]} rows"
        )
    if b.shape != (w.shape[1],):
        raise DimensionError(f"fc bias axis: expected ({w.shape[1]},), got {b.shape}")
    return x @ w + b


def fc_backward(
    grad_y: np.ndarray, x: np.ndarray, w: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (grad_x, grad_w, grad_b) for y = x @ w + b."""
    grad_x = grad_y @ w.T
    grad_w = x.T @ grad_y
    grad_b = grad_y.sum(axis=0)
    return grad_x, grad_w, grad_b


def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Gather all kh x kw patches of x (B,C,H,W) into rows.

    Output shape (B*H'*W', C*kh*kw) with H' = H-kh+1, W' = W-kw+1,
    matching a stride-1 valid cross-correlation.
    """
    bsz, c, h, w = x.shape
    ho, wo = h - kh + 1, w - kw + 1
    s0, s1, s2, s3 = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x, (bsz, c, ho, wo, kh, kw), (s0, s1, s2, s3, s2, s3), writeable=False
    )
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(bsz * ho * wo, c * kh * kw)


def conv2d_forward(x: np.ndarray, k: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Valid cross-correlation, stride 1, no padding.

    x: (B, C, H, W), k: (F, C, Kh, Kw), b: (F,) -> (B, F, H-Kh+1, W-Kw+1).
    """
    _validate_conv_shapes(x, k, b)
    cols = _im2col(x, k.shape[2], k.shape[3])
    return _conv_from_cols(cols, x.shape, k, b)


def _validate_conv_shapes(x: np.ndarray, k: np.ndarray, b: np.ndarray) -> None:
    if x.ndim != 4 or k.ndim != 4:
        raise DimensionError(
            f"conv2d expects 4-D x and k, got {x.ndim}-D and {k.ndim}-D"
        )
    if x.shape[1] != k.shape[1]:
        raise DimensionError(
            f"conv2d channel axis mismatch: input has {x.shape[1]}, kernel has {k.shape[1]}"
        )
    if x.shape[2] < k.shape[2] or x.shape[3] < k.shape[3]:
        raise DimensionError(
            f"kernel {k.shape[2]}x{k.shape[3]} larger than input {x.shape[2]}x{x.shape[3]}"
        )
    if b.shape != (k.shape[0],):
        raise DimensionError(f"conv2d bias axis: expected ({k.shape[0]},), got {b.shape}")


def _conv_from_cols(
    cols: np.ndarray, x_shape: tuple, k: np.ndarray, b: np.ndarray
) -> np.ndarray:
    bsz, _, h, w = x_shape
    f, _, kh, kw = k.shape
    ho, wo = h - kh + 1, w - kw + 1
    y = cols @ k.reshape(f, -1).T + b
    return y.reshape(bsz, ho, wo, f).transpose(0, 3, 1, 2)


def conv2d_backward(
    grad_y: np.ndarray, cols: np.ndarray, x_shape: tuple, k: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (grad_x, grad_k, grad_b); `cols` is the im2col matrix of the forward input."""
    bsz, c, h, w = x_shape
    f, _, kh, kw = k.shape
    ho, wo = h - kh + 1, w - kw + 1

    gy_mat = grad_y.transpose(0, 2, 3, 1).reshape(bsz * ho * wo, f)
    grad_k = (gy_mat.T @ cols).reshape(f, c, kh, kw)
    grad_b = grad_y.sum(axis=(0, 2, 3))

    grad_cols = gy_mat @ k.reshape(f, -1)
    g6 = grad_cols.reshape(bsz, ho, wo, c, kh, kw)
    grad_x = np.zeros(x_shape, dtype=grad_y.dtype)
    for i in range(kh):
        for j in range(kw):
            grad_x[:, :, i : i + ho, j : j + wo] += g6[:, :, :, :, i, j].transpose(
                0, 3, 1, 2
            )
    return grad_x, grad_k, grad_b


def maxpool2_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Non-overlapping 2x2 max pooling; ties resolve to the first element in
    row-major window order.

    Returns (pooled, idx) where idx in {0..3} stores the argmax position
    within each window for gradient routing.
    """
    if x.ndim != 4:
        raise DimensionError(f"maxpool2 expects 4-D input, got {x.ndim}-D")
    bsz, c, h, w = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    windows = (
        x.reshape(bsz, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(bsz, c, h // 2, w // 2, 4)
    )
    idx = windows.argmax(axis=-1)
    pooled = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return pooled, idx


def maxpool2_backward(
    grad_y: np.ndarray, idx: np.ndarray, x_shape: tuple
) -> np.ndarray:
    """Routes each window's upstream gradient to its recorded argmax element."""
    bsz, c, h, w = x_shape
    flat = np.zeros((bsz, c, h // 2, w // 2, 4), dtype=grad_y.dtype)
    np.put_along_axis(flat, idx[..., None], grad_y[..., None], axis=-1)
    return (
        flat.reshape(bsz, c, h // 2, w // 2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(x_shape)
    )


def relu_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mask = x > 0
    return x * mask, mask


def relu_backward(grad_y: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return grad_y * mask


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Split form avoids exp overflow for large |z|.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1 / (1 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1 + ez)
    return out


def lstm_cell_forward(
    x_t: np.ndarray,
    h_prev: np.ndarray,
    c_prev: np.ndarray,
    wx: np.ndarray,
    wh: np.ndarray,
    b: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, tuple]:
    """One LSTM step with input/forget/cell/output gates.

    wx: (I, 4H), wh: (H, 4H), b: (4H,), gate blocks ordered i, f, g, o.
    c_t = f*c_prev + i*g;  h_t = o*tanh(c_t).
    """
    hid = h_prev.shape[1]
    if x_t.shape[0] != h_prev.shape[0]:
        raise DimensionError(
            f"lstm batch axis mismatch: x has {x_t.shape[0]}, h has {h_prev.shape[0]}"
        )
    if wx.shape != (x_t.shape[1], 4 * hid):
        raise DimensionError(
            f"lstm wx: expected ({x_t.shape[1]}, {4 * hid}), got {wx.shape}"
        )
    if wh.shape != (hid, 4 * hid) or c_prev.shape != h_prev.shape:
        raise DimensionError("lstm recurrent shapes do not conform")

    z = x_t @ wx + h_prev @ wh + b
    i = _sigmoid(z[:, :hid])
    f = _sigmoid(z[:, hid : 2 * hid])
    g = np.tanh(z[:, 2 * hid : 3 * hid])
    o = _sigmoid(z[:, 3 * hid :])
    c_t = f * c_prev + i * g
    tanh_c = np.tanh(c_t)
    h_t = o * tanh_c
    cache = (x_t, h_prev, c_prev, i, f, g, o, tanh_c)
    return h_t, c_t, cache


def lstm_cell_backward(
    grad_h: np.ndarray,
    grad_c: np.ndarray,
    cache: tuple,
    wx: np.ndarray,
    wh: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Backward through one LSTM step.

    Returns (grad_x, grad_h_prev, grad_c_prev, grad_wx, grad_wh, grad_b).
    """
    x_t, h_prev, c_prev, i, f, g, o, tanh_c = cache
    go = grad_h * tanh_c
    gc = grad_c + grad_h * o * (1 - tanh_c * tanh_c)
    gi = gc * g
    gf = gc * c_prev
    gg = gc * i
    grad_c_prev = gc * f

    dz = np.concatenate(
        [gi * i * (1 - i), gf * f * (1 - f), gg * (1 - g * g), go * o * (1 - o)],
        axis=1,
    )
    grad_x = dz @ wx.T
    grad_h_prev = dz @ wh.T
    grad_wx = x_t.T @ dz
    grad_wh = h_prev.T @ dz
    grad_b = dz.sum(axis=0)
    return grad_x, grad_h_prev, grad_c_prev, grad_wx, grad_wh, grad_b


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy over the batch, with max-subtracted softmax.

    Returns (loss, probs, grad_logits) where grad_logits = (probs - onehot) / B.
    """
    if logits.ndim != 2:
        raise DimensionError(f"logits must be 2-D, got {logits.ndim}-D")
    labels = np.asarray(labels)
    bsz, k = logits.shape
    if labels.shape != (bsz,):
        raise DimensionError(f"labels must have shape ({bsz},), got {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValidationError(
            f"labels must be in [0, {k}), got range [{labels.min()}, {labels.max()}]"
        )
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    picked = probs[np.arange(bsz), labels]
    loss = float(-np.log(np.maximum(picked, 1e-12)).mean())
    grad = probs.copy()
    grad[np.arange(bsz), labels] -= 1
    grad /= bsz
    return loss, probs, grad


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------


def _uniform_init(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)


class Dense:
    """Fully connected layer y = x @ w + b."""

    def __init__(self, name: str, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.w = Parameter(f"{name}.weight", _uniform_init(rng, (in_dim, out_dim), in_dim))
        self.b = Parameter(f"{name}.bias", _uniform_init(rng, (out_dim,), in_dim))

    def params(self) -> list[Parameter]:
        return [self.w, self.b]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        return fc_forward(x, self.w.value, self.b.value), (x,)

    def backward(self, grad_y: np.ndarray, cache: tuple) -> np.ndarray:
        (x,) = cache
        grad_x, grad_w, grad_b = fc_backward(grad_y, x, self.w.value)
        self.w.grad += grad_w
        self.b.grad += grad_b
        return grad_x


class Conv2d:
    """Stride-1 valid convolution (cross-correlation) layer."""

    def __init__(
        self,
        name: str,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: np.random.Generator,
    ):
        fan_in = in_channels * kernel * kernel
        self.k = Parameter(
            f"{name}.weight",
            _uniform_init(rng, (out_channels, in_channels, kernel, kernel), fan_in),
        )
        self.b = Parameter(f"{name}.bias", _uniform_init(rng, (out_channels,), fan_in))

    def params(self) -> list[Parameter]:
        return [self.k, self.b]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        _validate_conv_shapes(x, self.k.value, self.b.value)
        cols = _im2col(x, self.k.value.shape[2], self.k.value.shape[3])
        y = _conv_from_cols(cols, x.shape, self.k.value, self.b.value)
        return y, (cols, x.shape)

    def backward(self, grad_y: np.ndarray, cache: tuple) -> np.ndarray:
        cols, x_shape = cache
        grad_x, grad_k, grad_b = conv2d_backward(grad_y, cols, x_shape, self.k.value)
        self.k.grad += grad_k
        self.b.grad += grad_b
        return grad_x


class MaxPool2:
    def params(self) -> list[Parameter]:
        return []

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        pooled, idx = maxpool2_forward(x)
        return pooled, (idx, x.shape)

    def backward(self, grad_y: np.ndarray, cache: tuple) -> np.ndarray:
        idx, x_shape = cache
        return maxpool2_backward(grad_y, idx, x_shape)


class ReLU:
    def params(self) -> list[Parameter]:
        return []

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        y, mask = relu_forward(x)
        return y, (mask,)

    def backward(self, grad_y: np.ndarray, cache: tuple) -> np.ndarray:
        (mask,) = cache
        return relu_backward(grad_y, mask)


class Flatten:
    def params(self) -> list[Parameter]:
        return []

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        return x.reshape(x.shape[0], -1), (x.shape,)

    def backward(self, grad_y: np.ndarray, cache: tuple) -> np.ndarray:
        (x_shape,) = cache
        return grad_y.reshape(x_shape)


class LSTM:
    """LSTM over a (B, T, I) sequence, unrolled with full backprop through time.

    With return_sequences the output is (B, T, H); otherwise only the final
    step's hidden state (B, H) is returned.
    """

    def __init__(
        self,
        name: str,
        input_size: int,
        hidden_size: int,
        rng: np.random.Generator,
        return_sequences: bool = True,
    ):
        self.hidden_size = hidden_size
        self.return_sequences = return_sequences
        self.wx = Parameter(
            f"{name}.wx", _uniform_init(rng, (input_size, 4 * hidden_size), input_size)
        )
        self.wh = Parameter(
            f"{name}.wh", _uniform_init(rng, (hidden_size, 4 * hidden_size), hidden_size)
        )
        self.b = Parameter(
            f"{name}.bias", _uniform_init(rng, (4 * hidden_size,), hidden_size)
        )

    def params(self) -> list[Parameter]:
        return [self.wx, self.wh, self.b]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        if x.ndim != 3:
            raise DimensionError(f"lstm expects (B, T, I) input, got {x.ndim}-D")
        bsz, steps, _ = x.shape
        h = np.zeros((bsz, self.hidden_size), dtype=x.dtype)
        c = np.zeros_like(h)
        caches = []
        outputs = np.empty((bsz, steps, self.hidden_size), dtype=x.dtype)
        for t in range(steps):
            h, c, cell_cache = lstm_cell_forward(
                x[:, t, :], h, c, self.wx.value, self.wh.value, self.b.value
            )
            outputs[:, t, :] = h
            caches.append(cell_cache)
        y = outputs if self.return_sequences else h
        return y, (caches, x.shape)

    def backward(self, grad_y: np.ndarray, cache: tuple) -> np.ndarray:
        caches, x_shape = cache
        bsz, steps, _ = x_shape
        grad_x = np.empty(x_shape, dtype=grad_y.dtype)
        grad_h = np.zeros((bsz, self.hidden_size), dtype=grad_y.dtype)
        grad_c = np.zeros_like(grad_h)
        for t in reversed(range(steps)):
            if self.return_sequences:
                grad_h = grad_h + grad_y[:, t, :]
            elif t == steps - 1:
                grad_h = grad_h + grad_y
            gx, grad_h, grad_c, gwx, gwh, gb = lstm_cell_backward(
                grad_h, grad_c, caches[t], self.wx.value, self.wh.value
            )
            grad_x[:, t, :] = gx
            self.wx.grad += gwx
            self.wh.grad += gwh
            self.b.grad += gb
        return grad_x


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------


class ForwardCache:
    """Per-layer intermediates from one forward pass, consumed by exactly
    one matching backward pass."""

    def __init__(self, token: int, items: list):
        self.token = token
        self.items = items
        self.consumed = False


class Network:
    """A plain sequential stack of layers with explicit caches."""

    def __init__(self, layers: list):
        self.layers = layers
        self._token = 0

    def parameters(self) -> ParameterSet:
        return ParameterSet(p for layer in self.layers for p in layer.params())

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
        items = []
        out = x
        for layer in self.layers:
            out, cache = layer.forward(out)
            items.append(cache)
        self._token += 1
        return out, ForwardCache(self._token, items)

    def backward(self, cache: ForwardCache, grad_out: np.ndarray) -> np.ndarray:
        if cache.consumed:
            raise StateError("forward cache already consumed by a backward pass")
        if cache.token != self._token:
            raise StateError(
                "stale forward cache: another forward ran on this network since"
            )
        cache.consumed = True
        grad = grad_out
        for layer, item in zip(reversed(self.layers), reversed(cache.items)):
            grad = layer.backward(grad, item)
        return grad

    def clone(self, dtype=None) -> "Network":
        other = copy.deepcopy(self)
        other._token = 0
        if dtype is not None:
            for p in other.parameters():
                p.value = p.value.astype(dtype)
                p.grad = np.zeros_like(p.value)
        return other


def model_backward(
    net: Network, cache: ForwardCache, grad_output: np.ndarray
) -> np.ndarray:
    """Fills every parameter's grad; returns the gradient w.r.t. the input."""
    return net.backward(cache, grad_output)


def finite_diff_grad(
    net: Network,
    x: np.ndarray,
    labels: np.ndarray | None,
    param_index: int,
    h: float = 1e-4,
) -> np.ndarray:
    """Central-difference gradient oracle, evaluated in a float64 shadow.

    The loss is softmax cross-entropy against `labels`, or the plain sum of
    the outputs when labels is None. 32-bit central differences are too
    noisy at h = 1e-4, hence the double-precision shadow.
    """
    shadow = net.clone(np.float64)
    x64 = x.astype(np.float64)

    def loss_at() -> float:
        out, _ = shadow.forward(x64)
        if labels is None:
            return float(out.sum())
        loss, _, _ = softmax_cross_entropy(out, labels)
        return loss

    target = shadow.parameters()[param_index].value
    grad = np.zeros_like(target)
    flat_v = target.reshape(-1)
    flat_g = grad.reshape(-1)
    for idx in range(flat_v.size):
        orig = flat_v[idx]
        flat_v[idx] = orig + h
        up = loss_at()
        flat_v[idx] = orig - h
        down = loss_at()
        flat_v[idx] = orig
        flat_g[idx] = (up - down) / (2 * h)
    return grad
