import numpy as np
import pytest

from src.core.tensor import Parameter
from src.training.optimizer import Adam
from src.training.schedule import Schedule, lr_at
from src.utils.errors import ConfigError, NonFiniteGradientError, UsageError

SCHEDULE = Schedule(peak_lr=4e-4, warmup_steps=500, decay_rate=0.5, decay_steps=1000)


def test_schedule_warmup_and_decay():
    assert lr_at(500, SCHEDULE) == pytest.approx(4e-4)
    assert lr_at(250, SCHEDULE) == pytest.approx(2e-4)
    assert lr_at(1, SCHEDULE) == pytest.approx(4e-4 / 500)
    assert lr_at(1499, SCHEDULE) == pytest.approx(4e-4)
    assert lr_at(1500, SCHEDULE) == pytest.approx(2e-4)
    assert lr_at(2500, SCHEDULE) == pytest.approx(1e-4)


def test_schedule_rejects_bad_input():
    with pytest.raises(UsageError):
        lr_at(0, SCHEDULE)
    with pytest.raises(ConfigError):
        Schedule(decay_rate=0.0)
    with pytest.raises(ConfigError):
        Schedule(peak_lr=-1.0)


def test_schedule_without_warmup_starts_at_peak():
    assert lr_at(1, Schedule(peak_lr=1e-3, warmup_steps=0)) == pytest.approx(1e-3)


def test_adam_zero_gradient_leaves_parameters():
    p = Parameter(np.array([1.0, -2.0]), name="p")
    opt = Adam([("p", p)])
    p.grad = np.zeros(2)
    opt.step(1e-2)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_first_step_matches_formula():
    p = Parameter(np.array([1.0, 1.0]), name="p")
    opt = Adam([("p", p)])
    g = np.array([0.5, -2.0])
    p.grad = g.copy()
    opt.step(0.1)
    # bias correction: m_hat = g, v_hat = g^2
    np.testing.assert_allclose(p.data, 1.0 - 0.1 * g / (np.abs(g) + 1e-8), atol=1e-12)
    m, v = opt.moments(p)
    np.testing.assert_allclose(m, 0.1 * g)
    np.testing.assert_allclose(v, 0.001 * g * g)


def test_adam_second_step_uses_moments():
    p = Parameter(np.array([0.0]), name="p")
    opt = Adam([("p", p)])
    for g in (1.0, 3.0):
        p.grad = np.array([g])
        opt.step(0.01)
    m = 0.9 * 0.1 * 1.0 + 0.1 * 3.0
    v = 0.999 * 0.001 * 1.0 + 0.001 * 9.0
    second = 0.01 * (m / (1 - 0.9 ** 2)) / (np.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
    assert p.data[0] == pytest.approx(-0.01 - second, abs=1e-9)


def test_adam_skips_parameters_without_gradient():
    a, b = Parameter(np.ones(1), name="a"), Parameter(np.ones(1), name="b")
    opt = Adam([("a", a), ("b", b)])
    a.grad = np.array([1.0])
    opt.step(0.1)
    assert b.data[0] == 1.0 and opt.moments(b) == (None, None)


def test_adam_non_finite_gradient_changes_nothing():
    a, b = Parameter(np.ones(2), name="a"), Parameter(np.ones(2), name="b")
    opt = Adam([("a", a), ("b", b)])
    a.grad = np.array([1.0, 1.0])
    b.grad = np.array([np.nan, 0.0])
    with pytest.raises(NonFiniteGradientError):
        opt.step(0.1)
    np.testing.assert_array_equal(a.data, [1.0, 1.0])
    assert opt.state.step == 0


def test_adam_rejects_non_positive_lr():
    p = Parameter(np.ones(1), name="p")
    p.grad = np.ones(1)
    with pytest.raises(UsageError):
        Adam([("p", p)]).step(0.0)


def test_clip_by_global_norm():
    p = Parameter(np.zeros(2), name="p")
    opt = Adam([("p", p)], clip_norm=1.0)
    p.grad = np.array([3.0, 4.0])
    assert opt.step(0.1) == pytest.approx(5.0)
    m, _ = opt.moments(p)
    np.testing.assert_allclose(m, 0.1 * np.array([0.6, 0.8]), atol=1e-12)


def test_frozen_parameters_are_not_tracked():
    p = Parameter(np.ones(1), name="p", requires_grad=False)
    assert Adam([("p", p)]).params == []
