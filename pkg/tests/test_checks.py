import pytest

from nusg import checks
from nusg.tensor import DIFFERENTIABLE_OPS

from .conftest import broken_case


@pytest.mark.parametrize("name", list(checks.cases))
def test_case_passes(name):
    assert checks.run_case(name) < checks.TOLERANCE


def test_every_op_is_covered():
    assert set(DIFFERENTIABLE_OPS) <= set(checks.cases)


def test_suite_reports_in_order():
    results = checks.run_suite(["sigmoid", "add"], seed=3)
    assert list(results) == ["sigmoid", "add"]
    assert checks.passed(results)


def test_broken_gradient_fails(monkeypatch):
    monkeypatch.setitem(checks.cases, "broken", broken_case)

    results = checks.run_suite(["mean", "broken"])
    assert results["broken"] > 0.1
    assert not checks.passed(results)


def test_unknown_case():
    with pytest.raises(KeyError):
        checks.run_suite(["conv2d", "conv3d"])


def test_duplicate_registration():
    with pytest.raises(ValueError):
        checks.case("conv2d")(broken_case)
