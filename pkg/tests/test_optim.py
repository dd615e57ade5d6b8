import numpy as np
import pytest

from primalsense import ndgrad as nd
from primalsense.optim import Adam, AdamState, adam_step, clip_global_norm


def _reference_adam(theta, grads, lr=0.1, b1=0.9, b2=0.999, eps=1e-8):
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g ** 2
        theta = theta - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return theta


class TestAdam:
    def test_matches_textbook_update(self, rng):
        theta0 = rng.normal(size=4)
        grads = [rng.normal(size=4) for _ in range(5)]
        p = nd.parameter(theta0)
        state = AdamState(lr=0.1)
        for g in grads:
            p.grad = g.copy()
            adam_step(state, {"p": p}, clip_norm=None)
        np.testing.assert_allclose(p.data, _reference_adam(theta0, grads), rtol=1e-12)
        assert state.step == 5 and p.grad is None

    def test_first_step_moves_by_lr(self):
        p = nd.parameter([1.0, -2.0])
        p.grad = np.array([3.0, -0.001])
        adam_step(AdamState(lr=0.01), {"p": p}, clip_norm=None)
        np.testing.assert_allclose(p.data, [0.99, -1.99], rtol=1e-6)

    def test_missing_gradient_raises(self):
        with pytest.raises(ValueError, match="'q'"):
            adam_step(AdamState(), {"q": nd.parameter([1.0])})

    def test_wrapper_fills_unused_parameters(self):
        used, unused = nd.parameter([1.0]), nd.parameter([5.0])
        opt = Adam({"used": used, "unused": unused}, lr=0.5)
        nd.backward(nd.sum(nd.mul(used, used)))
        opt.step()
        np.testing.assert_allclose(unused.data, [5.0])
        assert used.data[0] < 1.0

    def test_minimises_quadratic(self):
        p = nd.parameter([4.0, -3.0])
        opt = Adam({"p": p}, lr=0.1)
        for _ in range(500):
            nd.backward(nd.sum(nd.mul(p, p)))
            opt.step()
        np.testing.assert_allclose(p.data, 0.0, atol=1e-2)


class TestClipping:
    def test_global_norm_is_capped(self):
        a, b = nd.parameter([0.0, 0.0]), nd.parameter([0.0])
        a.grad, b.grad = np.array([3.0, 0.0]), np.array([4.0])
        before = clip_global_norm({"a": a, "b": b}, 1.0)
        assert before == pytest.approx(5.0)
        total = np.sqrt(np.sum(a.grad ** 2) + np.sum(b.grad ** 2))
        assert total == pytest.approx(1.0)
        np.testing.assert_allclose(a.grad, [0.6, 0.0])

    def test_small_gradients_untouched(self):
        a = nd.parameter([0.0])
        a.grad = np.array([0.5])
        clip_global_norm({"a": a}, 5.0)
        np.testing.assert_array_equal(a.grad, [0.5])
