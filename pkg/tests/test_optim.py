import numpy as np
import pytest

from formgate.optim import Adam, RMSProp, make_optimizer


def quadratic_descent(opt_factory):
    target = np.array([3.0, -2.0, 0.5])
    p = np.zeros(3)
    opt = opt_factory([{"params": [p], "lr": 0.05}])
    for _ in range(2000):
        grad = 2.0 * (p - target)
        opt.step([[grad]])
    return p, target


def test_adam_minimizes_quadratic():
    p, target = quadratic_descent(Adam)
    np.testing.assert_allclose(p, target, atol=1e-3)


def test_rmsprop_minimizes_quadratic():
    p, target = quadratic_descent(RMSProp)
    np.testing.assert_allclose(p, target, atol=1e-2)


def test_param_groups_use_own_lr():
    a, b = np.zeros(1), np.zeros(1)
    opt = Adam([{"params": [a], "lr": 1e-1}, {"params": [b], "lr": 1e-3}])
    opt.step([[np.ones(1)], [np.ones(1)]])
    assert abs(a[0]) > abs(b[0])


def test_updates_in_place():
    p = np.zeros(2)
    ref = p
    opt = Adam([{"params": [p], "lr": 0.1}])
    opt.step([[np.ones(2)]])
    assert ref is p and not np.all(p == 0.0)


def test_zero_d_parameter_supported():
    p = np.zeros(())
    opt = Adam([{"params": [p], "lr": 0.1}])
    opt.step([[np.asarray(1.0)]])
    assert p != 0.0


def test_make_optimizer_dispatch():
    p = np.zeros(1)
    assert isinstance(make_optimizer("adam", [{"params": [p], "lr": 1e-3}]), Adam)
    assert isinstance(make_optimizer("rmsprop", [{"params": [p], "lr": 1e-3}]), RMSProp)
    with pytest.raises(ValueError):
        make_optimizer("sgd", [])
