"""grad_check sanity: exact quadratic, small networks, determinism guard."""

import numpy as np
import pytest

from spkfilter.errors import UsageError
from spkfilter.nn_core import Fc, Tensor, grad_check
from spkfilter.nn_core import tape as T


def test_quadratic_exact():
    rng = np.random.default_rng(0)
    p = Tensor(rng.normal(size=6), requires_grad=True)

    def loss():
        return T.scale(T.sum_all(T.mul(p, p)), 0.5)

    assert grad_check(loss, [p]) < 1e-8


def test_two_layer_fc_sigmoid():
    rng = np.random.default_rng(1)
    fc1 = Fc(5, 4, "sigmoid", rng=rng)
    fc2 = Fc(4, 3, "sigmoid", rng=rng)
    x = rng.normal(size=5)
    target = rng.normal(size=3)

    def loss():
        d = T.sub(fc2(fc1(Tensor(x))), target)
        return T.sum_all(T.mul(d, d))

    params = [p for _, p in fc1.params() + fc2.params()]
    assert grad_check(loss, params) < 1e-4


def test_nondeterministic_loss_rejected():
    state = {"n": 0.0}
    p = Tensor(np.ones(1), requires_grad=True)

    def loss():
        state["n"] += 1.0
        return T.sum_all(T.scale(p, state["n"]))

    with pytest.raises(UsageError):
        grad_check(loss, [p])


def test_bad_eps_rejected():
    p = Tensor(np.ones(1), requires_grad=True)
    with pytest.raises(UsageError):
        grad_check(lambda: T.sum_all(p), [p], eps=0.0)


def test_subset_sampling_for_large_models():
    rng = np.random.default_rng(2)
    p = Tensor(rng.normal(size=(40, 40)), requires_grad=True)  # 1600 coords

    def loss():
        return T.scale(T.sum_all(T.mul(p, p)), 0.5)

    # subset path still reports an accurate max error; the bound is looser
    # than the tiny-quadratic case because the summed loss is ~800 and
    # central differences lose ~ulp(loss)/eps to cancellation
    assert grad_check(loss, [p]) < 1e-4
