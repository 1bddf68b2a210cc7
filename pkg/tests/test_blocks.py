import numpy as np
import pytest

from nusg.errors import ShapeError
from nusg.model import build_model, count_params, initialize
from nusg.nn import (
    RSU,
    RSU4F,
    ConvBlockSpec,
    ConvBNReLU,
    ResConnect,
    ResConnectSpec,
    RsuSpec,
    RsuVariant,
    build_rsu,
)
from nusg.tensor import Tensor, grad_check, no_grad, project


def _x(rng, *shape) -> Tensor:
    return Tensor(rng.standard_normal(shape))


def _zero_conv(block: ConvBNReLU) -> None:
    block.conv.weight.data = np.zeros_like(block.conv.weight.data)
    block.conv.bias.data = np.zeros_like(block.conv.bias.data)


class TestConvBNReLU:
    def test_identity_composition(self, rng):
        block = ConvBNReLU(ConvBlockSpec(1, 1, 1))
        block.conv.weight.data = np.ones((1, 1, 1, 1), dtype=np.float32)
        block.eval()

        x = _x(rng, 2, 1, 5, 5)
        np.testing.assert_allclose(block(x).data, np.maximum(x.data, 0), rtol=1e-5)

    @pytest.mark.parametrize("dilation", [1, 8])
    def test_preserves_size(self, rng, dilation):
        block = ConvBNReLU(ConvBlockSpec(2, 4, 3, dilation))
        initialize(block, 0)
        assert block(_x(rng, 1, 2, 19, 19)).shape == (1, 4, 19, 19)

    def test_channel_mismatch(self, rng):
        block = ConvBNReLU(ConvBlockSpec(3, 4))
        with pytest.raises(ShapeError):
            block(_x(rng, 1, 2, 8, 8))

    def test_padding_rule(self):
        assert ConvBlockSpec(8, 8, 3, 1).padding == 1
        assert ConvBlockSpec(8, 8, 3, 8).padding == 8
        assert ConvBlockSpec(8, 8, 1, 1).padding == 0


class TestRSU:
    def test_shape_contract(self, rng):
        block = RSU(RsuSpec(4, 1, 1, 1))
        initialize(block, 0)
        assert block(_x(rng, 1, 1, 8, 8)).shape == (1, 1, 8, 8)

    @pytest.mark.parametrize("height", [4, 5, 6, 7])
    def test_changes_channels_only(self, rng, height):
        block = RSU(RsuSpec(height, 3, 4, 6))
        initialize(block, 1)
        size = 2 ** (height - 2) * 2
        assert block(_x(rng, 2, 3, size, size)).shape == (2, 6, size, size)

    def test_zero_branch_is_projection(self, rng):
        block = RSU(RsuSpec(5, 2, 3, 4))
        initialize(block, 2)
        _zero_conv(block.rebnconv1d)
        block.eval()

        x = _x(rng, 1, 2, 16, 16)
        with no_grad():
            np.testing.assert_array_equal(block(x).data, block.rebnconvin(x).data)

    def test_indivisible_input_names_divisor(self, rng):
        block = RSU(RsuSpec(4, 1, 2, 2))
        initialize(block, 0)
        with pytest.raises(ShapeError) as e:
            block(_x(rng, 1, 1, 6, 6))
        assert e.value.divisor == 4
        assert "4" in str(e.value)

    def test_rsu7_parameter_count(self):
        def cbr(c_in: int, c_out: int) -> int:
            # 3×3 conv weights and bias, batchnorm gamma and beta
            return 9 * c_in * c_out + c_out + 2 * c_out

        expected = (
            cbr(3, 64)  # rebnconvin
            + cbr(64, 32)  # rebnconv1
            + 5 * cbr(32, 32)  # rebnconv2..6
            + cbr(32, 32)  # dilated bottom
            + 5 * cbr(64, 32)  # rebnconv6d..2d
            + cbr(64, 64)  # rebnconv1d
        )
        block = RSU(RsuSpec(7, 3, 32, 64))
        assert count_params(block).count == expected == 206_016

    def test_height_too_small(self):
        with pytest.raises(ValueError):
            RsuSpec(1, 3, 4, 4)

    def test_divisor(self):
        assert RsuSpec(7, 3, 32, 64).divisor == 32
        assert RsuSpec.dilated(64, 16, 64).divisor == 1


class TestRSU4F:
    @pytest.mark.parametrize("size", [15, 16, 21])
    def test_preserves_size(self, rng, size):
        block = RSU4F(RsuSpec.dilated(2, 3, 4))
        initialize(block, 0)
        assert block(_x(rng, 1, 2, size, size)).shape == (1, 4, size, size)

    def test_zero_branch_is_projection(self, rng):
        block = RSU4F(RsuSpec.dilated(2, 3, 4))
        initialize(block, 3)
        _zero_conv(block.rebnconv1d)
        block.eval()

        x = _x(rng, 1, 2, 16, 16)
        with no_grad():
            np.testing.assert_array_equal(block(x).data, block.rebnconvin(x).data)

    def test_smallest_stage_of_a_96px_model(self, rng):
        block = RSU4F(RsuSpec.dilated(64, 16, 64))
        initialize(block, 0)
        assert block(_x(rng, 1, 64, 3, 3)).shape == (1, 64, 3, 3)

    def test_channel_mismatch(self, rng):
        block = RSU4F(RsuSpec.dilated(4, 2, 4))
        with pytest.raises(ShapeError):
            block(_x(rng, 1, 3, 8, 8))

    def test_build_rsu_dispatch(self):
        assert isinstance(build_rsu(RsuSpec.dilated(4, 2, 4)), RSU4F)
        assert isinstance(build_rsu(RsuSpec(4, 4, 2, 4)), RSU)
        assert RsuSpec.dilated(4, 2, 4).variant == RsuVariant.DILATED


class TestResConnect:
    def test_alpha_starts_at_one(self):
        block = ResConnect(ResConnectSpec(2, 3))
        initialize(block, 0)
        np.testing.assert_array_equal(block.alpha.data, [1.0])

    def test_zero_gate_is_identity(self, rng):
        block = ResConnect(ResConnectSpec(2, 3))
        initialize(block, 0)
        block.alpha.data = np.zeros(1, dtype=np.float32)

        x_out = _x(rng, 2, 3, 6, 6)
        np.testing.assert_array_equal(block(_x(rng, 2, 2, 6, 6), x_out).data, x_out.data)

    def test_zero_convs_are_identity(self, rng):
        block = ResConnect(ResConnectSpec(2, 3))
        for conv in (block.proj, block.fuse):
            conv.weight.data = np.zeros_like(conv.weight.data)
            conv.bias.data = np.zeros_like(conv.bias.data)

        x_out = _x(rng, 1, 3, 5, 5)
        np.testing.assert_array_equal(block(_x(rng, 1, 2, 5, 5), x_out).data, x_out.data)

    def test_spatial_mismatch(self, rng):
        block = ResConnect(ResConnectSpec(2, 3))
        initialize(block, 0)
        with pytest.raises(ShapeError):
            block(_x(rng, 1, 2, 6, 6), _x(rng, 1, 3, 5, 5))

    def test_alpha_gradient(self, rng, float64):
        block = ResConnect(ResConnectSpec(2, 3))
        initialize(block, 0)
        block.alpha.data = np.array([0.3])

        x_in = Tensor(rng.standard_normal((1, 2, 5, 5)))
        x_out = Tensor(rng.standard_normal((1, 3, 5, 5)))
        weights = rng.standard_normal((1, 3, 5, 5))

        error = grad_check(lambda alpha: project(block(x_in, x_out), weights), [block.alpha])
        assert error < 1e-4


def test_every_parameter_enumerated_once():
    model = build_model("res-u2net-lite", seed=0)
    named = list(model.named_parameters())

    names = [name for name, _ in named]
    assert len(names) == len(set(names))
    assert len({id(p) for _, p in named}) == len(named)
    assert names == [name for name, _ in build_model("res-u2net-lite", seed=1).named_parameters()]
