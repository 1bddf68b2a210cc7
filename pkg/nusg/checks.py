"""
Finite-difference suite over every differentiable op and composite block.

Each case builds a scalar function of small float64 tensors (dims ≤ 8) and
the tensors to check; `run_suite` reports the worst relative error per case.
"""

from typing import Callable, Dict, List, Optional, Sequence, Tuple
import logging
import numpy as np

from nusg.metrics import FocalParams, deep_supervision_loss, weighted_focal_loss
from nusg.model import SideOutputs, initialize
from nusg.nn import (
    ConvBlockSpec,
    ConvBNReLU,
    Module,
    ResConnect,
    ResConnectSpec,
    RSU,
    RSU4F,
    RsuSpec,
)
from nusg.tensor import (
    Tensor,
    add,
    batchnorm2d,
    concat_channels,
    conv2d,
    gate,
    grad_check,
    maxpool2d,
    mean,
    no_grad,
    precision,
    project,
    reduce_sum,
    relu,
    scale,
    sigmoid,
    upsample_bilinear,
)

logger = logging.getLogger(__name__)


TOLERANCE = 1e-4

# Slopes this far apart on either side of a point mark a relu/maxpool kink
KINK_TOL = 1e-3

type Case = Tuple[Callable[..., Tensor], List[Tensor]]
type CaseBuilder = Callable[[np.random.Generator], Case]


cases: Dict[str, CaseBuilder] = {}

# Cases whose graph contains relu or maxpool behind a learned layer
_kinked: set[str] = set()


def case(name: str, *, kinked: bool = False) -> Callable[[CaseBuilder], CaseBuilder]:
    """
    Registers a gradient-check case under `name`.
    """

    def register(builder: CaseBuilder) -> CaseBuilder:
        if name in cases:
            raise ValueError(f"gradient case {name} registered twice")
        cases[name] = builder
        if kinked:
            _kinked.add(name)
        return builder

    return register


def _tensor(rng: np.random.Generator, *shape: int, grad: bool = True) -> Tensor:
    return Tensor(rng.standard_normal(shape), requires_grad=grad, dtype=np.float64)


def _projected(rng: np.random.Generator, fn: Callable[..., Tensor], inputs: List[Tensor]) -> Case:
    with no_grad():
        shape = fn(*inputs).shape
    weights = rng.standard_normal(shape)
    return (lambda *xs: project(fn(*xs), weights)), inputs


def _module_case(
    rng: np.random.Generator,
    module: Module,
    inputs: List[Tensor],
    skip: Sequence[str] = (),
) -> Case:
    """
    Checks `inputs` plus every parameter of `module` not ending in one of
    `skip`.
    """

    initialize(module, int(rng.integers(2**31)))

    def skipped(name: str) -> bool:
        return any(name == s or name.endswith(f".{s}") for s in skip)

    params = [p for name, p in module.named_parameters() if not skipped(name)]
    n = len(inputs)

    # Parameters are read through the module; they are passed only so
    # grad_check perturbs them
    return _projected(rng, lambda *xs: module(*xs[:n]), inputs + params)


@case("conv2d")
def _conv2d(rng: np.random.Generator) -> Case:
    x, w, b = _tensor(rng, 2, 3, 6, 6), _tensor(rng, 4, 3, 3, 3), _tensor(rng, 4)
    return _projected(rng, lambda x, w, b: conv2d(x, w, b, 1, 1, 1), [x, w, b])


@case("conv2d_strided_dilated")
def _conv2d_strided(rng: np.random.Generator) -> Case:
    x, w, b = _tensor(rng, 1, 2, 8, 8), _tensor(rng, 3, 2, 3, 3), _tensor(rng, 3)
    return _projected(rng, lambda x, w, b: conv2d(x, w, b, 2, 2, 2), [x, w, b])


@case("maxpool2d")
def _maxpool2d(rng: np.random.Generator) -> Case:
    # Well-separated distinct values keep every window's maximum unique
    values = rng.permutation(2 * 2 * 8 * 8).astype(np.float64) * 0.1
    x = Tensor(values.reshape(2, 2, 8, 8), requires_grad=True, dtype=np.float64)
    return _projected(rng, lambda x: maxpool2d(x, 2, 2), [x])


@case("maxpool2d_padded")
def _maxpool2d_padded(rng: np.random.Generator) -> Case:
    values = rng.permutation(1 * 2 * 6 * 6).astype(np.float64) * 0.1
    x = Tensor(values.reshape(1, 2, 6, 6), requires_grad=True, dtype=np.float64)
    return _projected(rng, lambda x: maxpool2d(x, 3, 1, 1), [x])


@case("upsample_bilinear")
def _upsample(rng: np.random.Generator) -> Case:
    x = _tensor(rng, 2, 2, 3, 4)
    return _projected(rng, lambda x: upsample_bilinear(x, 8, 7), [x])


@case("upsample_bilinear_down")
def _downsample(rng: np.random.Generator) -> Case:
    x = _tensor(rng, 1, 2, 8, 8)
    return _projected(rng, lambda x: upsample_bilinear(x, 3, 5), [x])


@case("concat_channels")
def _concat(rng: np.random.Generator) -> Case:
    a, b, c = _tensor(rng, 2, 1, 4, 4), _tensor(rng, 2, 3, 4, 4), _tensor(rng, 2, 2, 4, 4)
    return _projected(rng, lambda a, b, c: concat_channels([a, b, c]), [a, b, c])


@case("relu")
def _relu(rng: np.random.Generator) -> Case:
    # Kept well away from the kink at 0
    raw = rng.standard_normal((2, 3, 4, 4))
    x = Tensor(np.sign(raw) * (np.abs(raw) + 0.1), requires_grad=True, dtype=np.float64)
    return _projected(rng, relu, [x])


@case("sigmoid")
def _sigmoid(rng: np.random.Generator) -> Case:
    return _projected(rng, sigmoid, [_tensor(rng, 2, 3, 4, 4)])


@case("add")
def _add(rng: np.random.Generator) -> Case:
    return _projected(rng, add, [_tensor(rng, 2, 3, 4, 4), _tensor(rng, 2, 3, 4, 4)])


@case("gate")
def _gate(rng: np.random.Generator) -> Case:
    return _projected(rng, gate, [_tensor(rng, 1), _tensor(rng, 2, 3, 4, 4)])


@case("scale")
def _scale(rng: np.random.Generator) -> Case:
    return _projected(rng, lambda x: scale(x, -1.7), [_tensor(rng, 2, 3, 4, 4)])


@case("mean")
def _mean(rng: np.random.Generator) -> Case:
    return mean, [_tensor(rng, 2, 3, 4, 4)]


@case("reduce_sum")
def _reduce_sum(rng: np.random.Generator) -> Case:
    return reduce_sum, [_tensor(rng, 2, 3, 4, 4)]


@case("batchnorm2d")
def _batchnorm_train(rng: np.random.Generator) -> Case:
    x, gamma, beta = _tensor(rng, 2, 3, 4, 4), _tensor(rng, 3), _tensor(rng, 3)
    running_mean, running_var = np.zeros(3), np.ones(3)

    def fn(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
        return batchnorm2d(x, gamma, beta, running_mean, running_var, True)

    return _projected(rng, fn, [x, gamma, beta])


@case("batchnorm2d_eval")
def _batchnorm_eval(rng: np.random.Generator) -> Case:
    x, gamma, beta = _tensor(rng, 2, 3, 4, 4), _tensor(rng, 3), _tensor(rng, 3)
    running_mean = rng.standard_normal(3)
    running_var = rng.uniform(0.5, 2.0, 3)

    def fn(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
        return batchnorm2d(x, gamma, beta, running_mean, running_var, False)

    return _projected(rng, fn, [x, gamma, beta])


# A conv bias feeding batch-statistics normalization has an identically
# zero gradient; relative error is meaningless there
_BN_CONV_BIAS = ("conv.bias",)


@case("conv_bn_relu", kinked=True)
def _conv_bn_relu(rng: np.random.Generator) -> Case:
    block = ConvBNReLU(ConvBlockSpec(2, 3, 3, 2))
    return _module_case(rng, block, [_tensor(rng, 2, 2, 6, 6)], skip=_BN_CONV_BIAS)


@case("rsu4", kinked=True)
def _rsu4(rng: np.random.Generator) -> Case:
    block = RSU(RsuSpec(4, 2, 3, 3))
    return _module_case(rng, block, [_tensor(rng, 1, 2, 8, 8)], skip=_BN_CONV_BIAS)


@case("rsu4f", kinked=True)
def _rsu4f(rng: np.random.Generator) -> Case:
    block = RSU4F(RsuSpec.dilated(2, 2, 3))
    return _module_case(rng, block, [_tensor(rng, 1, 2, 8, 8)], skip=_BN_CONV_BIAS)


@case("res_connect", kinked=True)
def _res_connect(rng: np.random.Generator) -> Case:
    block = ResConnect(ResConnectSpec(2, 3))
    x_in, x_out = _tensor(rng, 2, 2, 5, 5), _tensor(rng, 2, 3, 5, 5)
    checked = _module_case(rng, block, [x_in, x_out])
    # A non-unit gate so the residual branch is not trivially scaled
    block.alpha.data = np.asarray([0.7])
    return checked


def _side_outputs(rng: np.random.Generator) -> Tuple[Callable[..., SideOutputs], List[Tensor]]:
    logits = [_tensor(rng, 2, 1, 4, 4) for _ in range(6)]
    w, b = _tensor(rng, 1, 6, 1, 1), _tensor(rng, 1)

    def outputs(*xs: Tensor) -> SideOutputs:
        sides, w, b = xs[:6], xs[6], xs[7]
        fused = conv2d(concat_channels(list(sides)), w, b)
        return SideOutputs(*(sigmoid(s) for s in sides), fused=sigmoid(fused))

    return outputs, logits + [w, b]


def _mask(rng: np.random.Generator) -> np.ndarray:
    return (rng.random((2, 1, 4, 4)) < 0.3).astype(np.float64)


@case("deep_supervision_loss")
def _deep_supervision(rng: np.random.Generator) -> Case:
    outputs, inputs = _side_outputs(rng)
    gt = _mask(rng)
    return (lambda *xs: deep_supervision_loss(outputs(*xs), gt)), inputs


@case("weighted_focal_loss")
def _weighted_focal(rng: np.random.Generator) -> Case:
    outputs, inputs = _side_outputs(rng)
    gt = _mask(rng)
    params = FocalParams()
    return (lambda *xs: weighted_focal_loss(outputs(*xs), gt, params)), inputs


def run_case(name: str, seed: int = 0) -> float:
    builder = cases[name]
    with precision(np.float64):
        rng = np.random.default_rng(seed)
        fn, inputs = builder(rng)
        kink_tol = KINK_TOL if name in _kinked else None
        error = grad_check(fn, inputs, kink_tol=kink_tol)

    logger.debug(f"gradient case {name}: worst relative error {error:.3e}")
    return error


def run_suite(names: Optional[Sequence[str]] = None, seed: int = 0) -> Dict[str, float]:
    """
    Worst relative error per case, in registration order.
    """

    selected = list(cases) if names is None else list(names)
    unknown = [n for n in selected if n not in cases]
    if unknown:
        raise KeyError(f"unknown gradient cases: {', '.join(unknown)}")

    return {name: run_case(name, seed) for name in selected}


def passed(results: Dict[str, float], tolerance: float = TOLERANCE) -> bool:
    return all(error < tolerance for error in results.values())
