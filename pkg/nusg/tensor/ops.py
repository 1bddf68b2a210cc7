"""
The operator set of the nested-U model family.

Every public function validates its operands, raising `ShapeError` with both
shapes in the message, then dispatches to a `Function`. Convolution is
cross-correlation with zero padding; pooling pads with -inf; bilinear
resizing samples at half-pixel centres.
"""

from typing import List, Optional, Sequence, Tuple
import numpy as np

from nusg.errors import ShapeError
from .tensor import Function, Tensor


def conv_output_size(size: int, kernel: int, stride: int, padding: int, dilation: int) -> int:
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def _windows(
    x: np.ndarray, kernel: int, stride: int, dilation: int, out_h: int, out_w: int
) -> np.ndarray:
    # View of shape (N, C, k, k, H', W') over an already padded input
    sn, sc, sh, sw = x.strides
    n, c = x.shape[:2]
    return np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, kernel, kernel, out_h, out_w),
        strides=(sn, sc, dilation * sh, dilation * sw, stride * sh, stride * sw),
        writeable=False,
    )


class Conv2d(Function):
    def forward(self, x, w, b, *, stride: int, padding: int, dilation: int):
        n, c_in, h, width = x.shape
        c_out, _, k, _ = w.shape
        out_h = conv_output_size(h, k, stride, padding, dilation)
        out_w = conv_output_size(width, k, stride, padding, dilation)

        if padding > 0:
            x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))

        if k == 1 and stride == 1:
            cols = x.reshape(n, c_in, out_h * out_w)
        else:
            cols = _windows(x, k, stride, dilation, out_h, out_w).reshape(
                n, c_in * k * k, out_h * out_w
            )

        w_mat = w.reshape(c_out, -1)
        out = np.matmul(w_mat, cols).reshape(n, c_out, out_h, out_w)
        out += b[None, :, None, None]

        self.cols = cols
        self.w_mat = w_mat
        self.padded_shape = x.shape
        self.w_shape = w.shape
        self.stride, self.padding, self.dilation = stride, padding, dilation

        return out

    def backward(self, grad):
        n, c_out, out_h, out_w = grad.shape
        _, c_in, hp, wp = self.padded_shape
        k = self.w_shape[2]
        s, p, d = self.stride, self.padding, self.dilation

        go = grad.reshape(n, c_out, out_h * out_w)
        grad_w = np.matmul(go, self.cols.transpose(0, 2, 1)).sum(axis=0).reshape(self.w_shape)
        grad_b = grad.sum(axis=(0, 2, 3))

        grad_cols = np.matmul(self.w_mat.T, go)
        if k == 1 and s == 1:
            grad_x = grad_cols.reshape(n, c_in, hp, wp)
        else:
            grad_x = np.zeros(self.padded_shape, dtype=grad.dtype)
            grad_cols = grad_cols.reshape(n, c_in, k, k, out_h, out_w)
            for i in range(k):
                row = i * d
                for j in range(k):
                    col = j * d
                    grad_x[:, :, row : row + s * out_h : s, col : col + s * out_w : s] += grad_cols[:, :, i, j]

        if p > 0:
            grad_x = grad_x[:, :, p : hp - p, p : wp - p]

        return grad_x, grad_w, grad_b


def conv2d(
    x: Tensor,
    w: Tensor,
    b: Tensor,
    stride: int = 1,
    padding: int = 0,
    dilation: int = 1,
) -> Tensor:
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and weight, got {x.shape} and {w.shape}")
    if w.shape[2] != w.shape[3] or w.shape[2] < 1:
        raise ShapeError(f"conv2d expects a square kernel, got weight {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape} vs weight {w.shape}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"conv2d bias {b.shape} does not match weight {w.shape}")
    if stride < 1 or dilation < 1:
        raise ShapeError(f"conv2d needs positive stride and dilation, got {stride} and {dilation}")
    if padding < 0:
        raise ShapeError(f"conv2d padding must be non-negative, got {padding}")

    k = w.shape[2]
    receptive = dilation * (k - 1) + 1
    for size in x.shape[2:]:
        if size + 2 * padding < receptive:
            raise ShapeError(
                f"conv2d input {x.shape} with padding {padding} is smaller than "
                f"the dilated kernel extent {receptive}"
            )

    return Conv2d.apply(x, w, b, stride=stride, padding=padding, dilation=dilation)


class MaxPool2d(Function):
    def forward(self, x, *, kernel: int, stride: int, padding: int):
        n, c, h, w = x.shape
        out_h = conv_output_size(h, kernel, stride, padding, 1)
        out_w = conv_output_size(w, kernel, stride, padding, 1)

        if padding > 0:
            x = np.pad(
                x,
                ((0, 0), (0, 0), (padding, padding), (padding, padding)),
                constant_values=-np.inf,
            )

        windows = _windows(x, kernel, stride, 1, out_h, out_w)
        windows = windows.transpose(0, 1, 4, 5, 2, 3).reshape(n, c, out_h, out_w, kernel * kernel)

        # argmax returns the first maximum, so ties resolve row-major
        self.argmax = np.argmax(windows, axis=-1)
        out = np.take_along_axis(windows, self.argmax[..., None], axis=-1)[..., 0]

        self.padded_shape = x.shape
        self.kernel, self.stride, self.padding = kernel, stride, padding

        return out

    def backward(self, grad):
        _, _, out_h, out_w = grad.shape
        _, _, hp, wp = self.padded_shape
        k, s, p = self.kernel, self.stride, self.padding

        grad_x = np.zeros(self.padded_shape, dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                routed = np.where(self.argmax == i * k + j, grad, 0)
                grad_x[:, :, i : i + s * out_h : s, j : j + s * out_w : s] += routed

        if p > 0:
            grad_x = grad_x[:, :, p : hp - p, p : wp - p]

        return (grad_x,)


def maxpool2d(x: Tensor, kernel: int, stride: Optional[int] = None, padding: int = 0) -> Tensor:
    stride = kernel if stride is None else stride

    if x.data.ndim != 4:
        raise ShapeError(f"maxpool2d expects a 4-d input, got {x.shape}")
    if kernel < 1 or stride < 1 or padding < 0:
        raise ShapeError(f"maxpool2d got kernel {kernel}, stride {stride}, padding {padding}")
    if any(size + 2 * padding < kernel for size in x.shape[2:]):
        raise ShapeError(f"maxpool2d window {kernel} is larger than padded input {x.shape}")

    return MaxPool2d.apply(x, kernel=kernel, stride=stride, padding=padding)


def interpolation_matrix(size_in: int, size_out: int, dtype) -> np.ndarray:
    """
    The (size_out × size_in) matrix of half-pixel-centre linear
    interpolation weights along one axis.
    """

    scale = size_in / size_out
    src = (np.arange(size_out, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.clip(src, 0, size_in - 1)

    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, size_in - 1)
    frac = src - lo

    matrix = np.zeros((size_out, size_in), dtype=np.float64)
    rows = np.arange(size_out)
    np.add.at(matrix, (rows, lo), 1.0 - frac)
    np.add.at(matrix, (rows, hi), frac)

    return matrix.astype(dtype)


class UpsampleBilinear(Function):
    def forward(self, x, *, out_h: int, out_w: int):
        self.rows = interpolation_matrix(x.shape[2], out_h, x.dtype)
        self.cols = interpolation_matrix(x.shape[3], out_w, x.dtype)

        return np.matmul(np.matmul(self.rows, x), self.cols.T)

    def backward(self, grad):
        return (np.matmul(np.matmul(self.rows.T, grad), self.cols),)


def upsample_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    if x.data.ndim != 4:
        raise ShapeError(f"upsample_bilinear expects a 4-d input, got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"upsample_bilinear target {out_h}x{out_w} is empty")

    return UpsampleBilinear.apply(x, out_h=out_h, out_w=out_w)


class ConcatChannels(Function):
    def forward(self, *xs):
        self.splits = np.cumsum([x.shape[1] for x in xs])[:-1]
        return np.concatenate(xs, axis=1)

    def backward(self, grad):
        return tuple(np.split(grad, self.splits, axis=1))


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    if len(xs) == 0:
        raise ShapeError("concat_channels needs at least one tensor")

    first = xs[0].shape
    for x in xs:
        if x.data.ndim != 4 or x.shape[0] != first[0] or x.shape[2:] != first[2:]:
            raise ShapeError(f"concat_channels spatial mismatch: {first} vs {x.shape}")

    if len(xs) == 1:
        return xs[0]

    return ConcatChannels.apply(*xs)


class ReLU(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0).astype(x.dtype)

    def backward(self, grad):
        # Subgradient 0 at the kink
        return (grad * self.mask,)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


class Sigmoid(Function):
    def forward(self, x):
        e = np.exp(-np.abs(x))
        out = np.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(x.dtype)

        # Keep outputs strictly inside (0, 1) even where the dtype saturates
        info = np.finfo(x.dtype)
        out = np.clip(out, info.tiny, 1 - info.epsneg)

        self.out = out
        return out

    def backward(self, grad):
        return (grad * self.out * (1 - self.out),)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


class Add(Function):
    def forward(self, x, y):
        return x + y

    def backward(self, grad):
        return grad, grad


def add(x: Tensor, y: Tensor) -> Tensor:
    if x.shape != y.shape:
        raise ShapeError(f"add shape mismatch: {x.shape} vs {y.shape}")
    return Add.apply(x, y)


class Gate(Function):
    def forward(self, alpha, x):
        self.alpha = alpha
        self.x = x
        return (alpha.reshape(()) * x).astype(x.dtype)

    def backward(self, grad):
        grad_alpha = np.asarray(np.sum(grad * self.x), dtype=grad.dtype).reshape(self.alpha.shape)
        return grad_alpha, grad * self.alpha.reshape(())


def gate(alpha: Tensor, x: Tensor) -> Tensor:
    """
    Scales `x` by a learnable scalar. The only broadcasting op.
    """

    if alpha.data.size != 1:
        raise ShapeError(f"gate expects a scalar coefficient, got {alpha.shape}")
    return Gate.apply(alpha, x)


class Scale(Function):
    def forward(self, x, *, factor: float):
        self.factor = factor
        return (x * factor).astype(x.dtype)

    def backward(self, grad):
        return ((grad * self.factor).astype(grad.dtype),)


def scale(x: Tensor, factor: float) -> Tensor:
    return Scale.apply(x, factor=float(factor))


class Mean(Function):
    def forward(self, x):
        self.shape = x.shape
        return np.asarray(x.mean(), dtype=x.dtype)

    def backward(self, grad):
        size = int(np.prod(self.shape))
        return (np.full(self.shape, grad / size, dtype=grad.dtype),)


def mean(x: Tensor) -> Tensor:
    return Mean.apply(x)


class Sum(Function):
    def forward(self, x):
        self.shape = x.shape
        return np.asarray(x.sum(), dtype=x.dtype)

    def backward(self, grad):
        return (np.full(self.shape, grad, dtype=grad.dtype),)


def reduce_sum(x: Tensor) -> Tensor:
    return Sum.apply(x)


class BatchNorm2d(Function):
    def forward(self, x, gamma, beta, *, mean: np.ndarray, var: np.ndarray, eps: float, batch_stats: bool):
        self.inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
        self.xhat = (x - mean[None, :, None, None]) * self.inv_std[None, :, None, None]
        self.gamma = gamma
        self.batch_stats = batch_stats

        return self.xhat * gamma[None, :, None, None] + beta[None, :, None, None]

    def backward(self, grad):
        axes = (0, 2, 3)
        grad_gamma = np.sum(grad * self.xhat, axis=axes)
        grad_beta = np.sum(grad, axis=axes)

        gxhat = grad * self.gamma[None, :, None, None]
        inv_std = self.inv_std[None, :, None, None]
        if not self.batch_stats:
            return gxhat * inv_std, grad_gamma, grad_beta

        count = grad.size // grad.shape[1]
        grad_x = (inv_std / count) * (
            count * gxhat
            - np.sum(gxhat, axis=axes, keepdims=True)
            - self.xhat * np.sum(gxhat * self.xhat, axis=axes, keepdims=True)
        )
        return grad_x, grad_gamma, grad_beta


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """
    Per-channel batch normalization.

    In training mode the batch statistics normalize the input and the
    running statistics are updated in place by exponential moving average
    (unbiased variance); in eval mode the running statistics are used.
    """

    if x.data.ndim != 4:
        raise ShapeError(f"batchnorm2d expects a 4-d input, got {x.shape}")
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError(f"batchnorm2d channel mismatch: input {x.shape} vs gamma {gamma.shape}")
    if eps <= 0:
        raise ValueError(f"batchnorm2d eps must be positive, got {eps}")

    if not training:
        return BatchNorm2d.apply(
            x, gamma, beta, mean=running_mean, var=running_var, eps=eps, batch_stats=False
        )

    batch_mean = x.data.mean(axis=(0, 2, 3))
    batch_var = x.data.var(axis=(0, 2, 3))

    count = x.data.size // channels
    unbiased = batch_var * (count / max(count - 1, 1))
    running_mean *= 1 - momentum
    running_mean += momentum * batch_mean
    running_var *= 1 - momentum
    running_var += momentum * unbiased

    return BatchNorm2d.apply(
        x, gamma, beta, mean=batch_mean, var=batch_var, eps=eps, batch_stats=True
    )


# Ops listed by the gradient-check suite. Kept here so adding an op and
# forgetting its check shows up as a missing entry.
DIFFERENTIABLE_OPS: Tuple[str, ...] = (
    "conv2d",
    "maxpool2d",
    "upsample_bilinear",
    "concat_channels",
    "relu",
    "sigmoid",
    "add",
    "gate",
    "scale",
    "mean",
    "reduce_sum",
    "batchnorm2d",
)


__all__: List[str] = [
    "conv_output_size",
    "interpolation_matrix",
    "conv2d",
    "maxpool2d",
    "upsample_bilinear",
    "concat_channels",
    "relu",
    "sigmoid",
    "add",
    "gate",
    "scale",
    "mean",
    "reduce_sum",
    "batchnorm2d",
    "DIFFERENTIABLE_OPS",
]
