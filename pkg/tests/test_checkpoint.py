import struct

import numpy as np
import pytest

from nusg.model import (
    MAGIC,
    VERSION,
    Arch,
    BadMagicError,
    CheckpointError,
    TensorMismatchError,
    TruncatedError,
    UnsupportedVersionError,
    build_model,
    load_model,
    load_state,
    pack_state,
    read_checkpoint,
    save_checkpoint,
    unpack_state,
)
from nusg.tensor import Tensor, no_grad


@pytest.fixture
def lite():
    return build_model("res-u2net-lite", seed=11)


def test_roundtrip_restores_forward(tmp_path, rng, lite):
    # One train-mode pass moves the batchnorm running statistics off their defaults
    x = Tensor(rng.standard_normal((2, 3, 64, 64)))
    with no_grad():
        lite(x)

    path = save_checkpoint(tmp_path / "ckpt" / "model.nusg", lite)
    restored = load_model(path)

    assert restored.arch is Arch.RES_U2NET_LITE
    with no_grad():
        a = lite.eval()(x).fused.data
        b = restored.eval()(x).fused.data
    np.testing.assert_array_equal(a, b)


def test_state_roundtrip_keeps_order_and_dtype():
    state = {
        "b.weight": np.arange(6, dtype=np.float32).reshape(2, 3),
        "a.running_var": np.array([0.5, 2.0], dtype=np.float64),
        "scalar": np.array(3.0, dtype=np.float32),
    }
    decoded = unpack_state(pack_state(state))

    assert list(decoded) == list(state)
    for name, value in state.items():
        assert decoded[name].dtype == value.dtype
        np.testing.assert_array_equal(decoded[name], value)


def test_header_layout():
    buf = pack_state({})
    assert buf == MAGIC + struct.pack("<II", VERSION, 0)


def test_bad_magic():
    buf = b"PK\x03\x04" + pack_state({"w": np.ones(2, dtype=np.float32)})[4:]
    with pytest.raises(BadMagicError) as e:
        unpack_state(buf)
    assert e.value.magic == b"PK\x03\x04"


def test_short_file_is_bad_magic():
    with pytest.raises(BadMagicError):
        unpack_state(b"NU")


def test_unsupported_version():
    buf = bytearray(pack_state({"w": np.ones(2, dtype=np.float32)}))
    buf[4:8] = struct.pack("<I", VERSION + 1)
    with pytest.raises(UnsupportedVersionError) as e:
        unpack_state(bytes(buf))
    assert e.value.version == VERSION + 1


@pytest.mark.parametrize("cut", [1, 4, 9])
def test_truncated(cut):
    buf = pack_state({"w": np.ones((3, 3), dtype=np.float32)})
    with pytest.raises(TruncatedError):
        unpack_state(buf[:-cut])


def test_trailing_bytes():
    buf = pack_state({"w": np.ones(2, dtype=np.float32)})
    with pytest.raises(CheckpointError):
        unpack_state(buf + b"\x00")


def test_unsupported_dtype():
    with pytest.raises(CheckpointError):
        pack_state({"steps": np.arange(3)})


def test_shape_mismatch_names_tensor(lite):
    state = dict(lite.state_dict())
    state["outconv.weight"] = np.zeros((1, 5, 1, 1), dtype=np.float32)

    with pytest.raises(TensorMismatchError) as e:
        load_state(lite, state)
    assert e.value.name == "outconv.weight"


def test_unexpected_tensor_names_tensor(lite):
    state = dict(lite.state_dict())
    state["bogus"] = np.zeros(1, dtype=np.float32)

    with pytest.raises(TensorMismatchError) as e:
        load_state(lite, state)
    assert e.value.name == "bogus"


def test_failed_load_leaves_model_untouched(lite):
    before = {name: value.copy() for name, value in lite.state_dict().items()}
    state = {name: np.zeros_like(value) for name, value in before.items()}
    state.pop("res1.alpha")

    with pytest.raises(TensorMismatchError):
        load_state(lite, state)
    for name, value in lite.state_dict().items():
        np.testing.assert_array_equal(value, before[name])


def test_explicit_arch_mismatch(tmp_path):
    path = save_checkpoint(tmp_path / "plain.nusg", build_model("u2net-lite", seed=0))

    with pytest.raises(TensorMismatchError) as e:
        load_model(path, "res-u2net-lite")
    assert e.value.name.startswith("res1.")


def test_unrecognized_checkpoint(tmp_path):
    path = tmp_path / "other.nusg"
    path.write_bytes(pack_state({"w": np.ones(2, dtype=np.float32)}))

    with pytest.raises(TensorMismatchError):
        load_model(path)
    assert read_checkpoint(path)["w"].shape == (2,)


def test_detection_names_the_late_mismatch(tmp_path):
    state = dict(build_model("u2net-lite", seed=0).state_dict())
    c_out, c_in, kh, kw = state["side6.weight"].shape
    state["side6.weight"] = np.zeros((c_out, c_in - 1, kh, kw), dtype=np.float32)
    path = tmp_path / "corrupt.nusg"
    path.write_bytes(pack_state(state))

    with pytest.raises(TensorMismatchError) as e:
        load_model(path)
    assert e.value.name == "side6.weight"
    assert "u2net-lite" in str(e.value)
