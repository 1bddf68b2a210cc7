import pytest

from nusg.train import Decay, Schedule, lr_at, trace


@pytest.fixture
def schedule() -> Schedule:
    return Schedule(base_lr=0.001, warmup_steps=100, total_steps=1000)


def test_endpoints(schedule):
    assert lr_at(0, schedule) == 0.0
    assert lr_at(100, schedule) == pytest.approx(0.001, abs=1e-12)
    assert lr_at(1000, schedule) == pytest.approx(0.0, abs=1e-12)


def test_cosine_midpoint(schedule):
    assert lr_at(550, schedule) == pytest.approx(0.0005, abs=1e-12)


def test_warmup_is_linear(schedule):
    assert lr_at(25, schedule) == pytest.approx(0.00025, abs=1e-12)
    assert lr_at(50, schedule) == pytest.approx(0.0005, abs=1e-12)


def test_continuous_at_warmup_end(schedule):
    # Cosine branch at W and the limit of the warmup ramp both give base_lr
    assert lr_at(100, schedule) == pytest.approx(0.001 * 100 / 100, abs=1e-12)
    assert abs(lr_at(101, schedule) - lr_at(100, schedule)) < 1e-6
    assert abs(lr_at(99, schedule) - lr_at(100, schedule)) <= 0.001 / 100 + 1e-12


def test_rises_then_falls(schedule):
    lrs = [lr for _, lr in trace(schedule)]
    assert len(lrs) == 1001
    peak = lrs.index(max(lrs))
    assert peak == 100
    assert all(a <= b for a, b in zip(lrs[: peak + 1], lrs[1 : peak + 1]))
    assert all(a >= b for a, b in zip(lrs[peak:], lrs[peak + 1 :]))


def test_linear_decay():
    schedule = Schedule(base_lr=0.001, warmup_steps=0, total_steps=100, decay=Decay.LINEAR)
    assert lr_at(0, schedule) == 0.001
    assert lr_at(50, schedule) == pytest.approx(0.0005, abs=1e-12)
    assert lr_at(75, schedule) == pytest.approx(0.00025, abs=1e-12)


def test_past_the_end_is_zero(schedule):
    assert lr_at(5000, schedule) == 0.0


@pytest.mark.parametrize(
    "kwargs",
    [
        {"warmup_steps": 10, "total_steps": 10},
        {"warmup_steps": -1, "total_steps": 10},
        {"warmup_steps": 0, "total_steps": 10, "base_lr": 0.0},
    ],
)
def test_validation(kwargs):
    with pytest.raises(ValueError):
        Schedule(**kwargs)


def test_negative_step(schedule):
    with pytest.raises(ValueError):
        lr_at(-1, schedule)
