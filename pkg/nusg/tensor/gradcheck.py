from typing import Callable, Optional, Sequence
import logging
import numpy as np

from nusg.errors import GradientError
from .tensor import Function, Tensor, backward, no_grad, reset_grads

logger = logging.getLogger(__name__)


class Project(Function):
    """
    Contracts a tensor against fixed weights into a scalar.
    """

    def forward(self, x, *, weights: np.ndarray):
        self.weights = weights
        return np.asarray(np.sum(x * weights), dtype=x.dtype)

    def backward(self, grad):
        return ((grad * self.weights).astype(grad.dtype),)


def project(x: Tensor, weights: np.ndarray) -> Tensor:
    """
    Reduces `x` to a scalar by a fixed random projection, so every
    coordinate of `x` gets a distinct, non-degenerate gradient.
    """

    return Project.apply(x, weights=np.asarray(weights, dtype=x.dtype).reshape(x.shape))


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def grad_check(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-6,
    *,
    kink_tol: Optional[float] = None,
) -> float:
    """
    Compares the analytic gradient of scalar `f(*inputs)` against central
    differences `(f(x+eps) - f(x-eps)) / (2 eps)` for every coordinate of
    every input that requires grad.

    Returns the worst relative error, with `max(|a|, |n|, 1e-8)` as the
    denominator. Only meaningful in 64-bit precision.

    With `kink_tol`, a coordinate whose one-sided slopes differ by more
    than `kink_tol` (relative) straddles a non-differentiable point such as
    a relu kink within `eps`; it is scored against the nearer one-sided
    slope instead of the central difference.
    """

    checked = [t for t in inputs if t.requires_grad]
    for t in checked:
        if t.dtype != np.float64:
            raise GradientError(f"grad_check needs float64 inputs, got {t.dtype}")
        # Perturbations are written through a flat view
        t.data = np.ascontiguousarray(t.data)

    reset_grads(checked)
    out = f(*inputs)
    if out.data.size != 1:
        raise GradientError(f"grad_check needs a scalar function, got shape {out.shape}")
    backward(out)
    center = out.item()
    kinks = 0

    worst = 0.0
    for t in checked:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        numeric = np.zeros_like(t.data)

        flat = t.data.reshape(-1)
        numeric_flat = numeric.reshape(-1)
        with no_grad():
            for i in range(flat.size):
                original = flat[i]

                flat[i] = original + eps
                plus = f(*inputs).item()
                flat[i] = original - eps
                minus = f(*inputs).item()
                flat[i] = original

                numeric_flat[i] = (plus - minus) / (2 * eps)

                if kink_tol is not None:
                    right = (plus - center) / eps
                    left = (center - minus) / eps
                    if relative_error(np.asarray(right), np.asarray(left)) > kink_tol:
                        kinks += 1
                        a = analytic.reshape(-1)[i]
                        numeric_flat[i] = right if abs(right - a) <= abs(left - a) else left

        worst = max(worst, relative_error(analytic, numeric))

    if kinks:
        logger.debug(f"{kinks} coordinates scored one-sided at kinks")

    reset_grads(checked)
    return worst
