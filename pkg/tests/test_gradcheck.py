import numpy as np
import pytest

from modalformer.autograd import Tensor, grad_check, ops, tensor_relative_error
from modalformer.autograd.tensor import make_result
from modalformer.gradcheck_suite import THRESHOLDS, CheckResult, run_scope


def _leaf(a):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)


@pytest.mark.parametrize("per", ["element", "tensor", "global"])
def test_exact_gradient_scores_near_zero(per):
    x = _leaf(np.random.default_rng(0).standard_normal((3, 4)))
    assert grad_check(lambda: ops.sum(ops.mul(x, x)), [x], per=per) < 1e-8


def test_norm_modes_forgive_tiny_entries():
    # entries ~1e-12 next to entries ~1: elementwise error blows up, norm-wise does not
    a = np.array([1.0, 2.0, 1e-12])
    n = np.array([1.0, 2.0, 3e-12])
    assert tensor_relative_error(a, n) < 1e-11
    assert tensor_relative_error(np.zeros(3), np.zeros(3)) == 0.0


def _bad_square(x):
    # forward x^2, backward claims 2.2x
    return make_result("bad_square", x.data**2, (x,), lambda g: (2.2 * g * x.data,))


def test_wrong_gradient_is_caught_in_every_mode():
    x = _leaf([0.5, -1.0, 2.0])
    for per in ("element", "tensor", "global"):
        assert grad_check(lambda: ops.sum(_bad_square(x)), [x], per=per) > 0.05
    with pytest.raises(ValueError):
        grad_check(lambda: ops.sum(_bad_square(x)), [x], per="columns")


def test_check_result_verdict_and_line():
    ok = CheckResult("op", "add", 1e-9, THRESHOLDS["op"], 0.01)
    bad = CheckResult("model", "shape 8x8", 2e-3, THRESHOLDS["model"], 1.0)
    assert ok.passed and not bad.passed
    assert ok.line().endswith("ok") and bad.line().endswith("FAIL")


def test_unknown_scope():
    with pytest.raises(ValueError):
        run_scope("galaxy")
