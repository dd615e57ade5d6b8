import numpy as np
import pytest

from primalsense import ndgrad as nd
from primalsense.gradcheck import grad_check
from primalsense.ndgrad import ShapeError


def _check(f, params, tol=1e-6):
    report = grad_check(f, params)
    assert report.passed, report
    assert report.max_rel_error < tol, report


class TestElementwise:
    def test_add_sub_mul_with_broadcast(self, rng):
        a = nd.parameter(rng.normal(size=(3, 4)))
        b = nd.parameter(rng.normal(size=(4,)))
        c = nd.parameter(rng.normal(size=(3, 1)))
        _check(lambda: nd.sum(nd.mul(nd.sub(nd.add(a, b), c), a)), {"a": a, "b": b, "c": c})

    def test_operator_overloads_match_functions(self, rng):
        a = nd.parameter(rng.normal(size=(2, 3)))
        b = nd.parameter(rng.normal(size=(3, 2)))
        np.testing.assert_allclose((a @ b).data, a.data @ b.data)
        np.testing.assert_allclose((-a + 1.0 - a * 2.0).data, -3 * a.data + 1.0)
        np.testing.assert_allclose(a[1].data, a.data[1])

    def test_incompatible_shapes_name_the_op(self):
        with pytest.raises(ShapeError, match=r"add.*\(2, 3\).*\(4,\)"):
            nd.add(nd.tensor(np.zeros((2, 3))), nd.tensor(np.zeros(4)))

    def test_nonlinearities(self, rng):
        x = nd.parameter(rng.normal(size=(3, 3)))
        _check(lambda: nd.sum(nd.mul(nd.tanh(x), nd.sigmoid(x))), {"x": x})
        _check(lambda: nd.sum(nd.exp(x)), {"x": x})
        y = nd.parameter(rng.uniform(0.5, 2.0, size=(4,)))
        _check(lambda: nd.sum(nd.log(y)), {"y": y})

    def test_sigmoid_is_stable_for_large_inputs(self):
        out = nd.sigmoid(nd.tensor([-1000.0, 0.0, 1000.0])).data
        np.testing.assert_allclose(out, [0.0, 0.5, 1.0])

    def test_exp_overflow_raises(self):
        with pytest.raises(FloatingPointError):
            nd.exp(nd.tensor([1000.0]))

    def test_log_of_non_positive_raises(self):
        with pytest.raises(ValueError):
            nd.log(nd.tensor([1.0, 0.0]))

    def test_where(self, rng):
        a = nd.parameter(rng.normal(size=(3, 2)))
        b = nd.parameter(rng.normal(size=(3, 2)))
        cond = np.array([[True, False], [False, False], [True, True]])
        _check(lambda: nd.sum(nd.mul(nd.where(cond, a, b), a)), {"a": a, "b": b})


class TestLinearAlgebraAndShape:
    def test_matmul_2d_and_batched(self, rng):
        a = nd.parameter(rng.normal(size=(2, 3, 4)))
        b = nd.parameter(rng.normal(size=(4, 5)))
        c = nd.parameter(rng.normal(size=(2, 5, 3)))
        _check(lambda: nd.sum(nd.matmul(nd.matmul(a, b), c)), {"a": a, "b": b, "c": c})

    def test_matmul_rejects_vectors_and_mismatch(self):
        with pytest.raises(ShapeError):
            nd.matmul(nd.tensor(np.zeros(3)), nd.tensor(np.zeros((3, 2))))
        with pytest.raises(ShapeError, match="matmul"):
            nd.matmul(nd.tensor(np.zeros((2, 3))), nd.tensor(np.zeros((4, 2))))

    def test_concat_stack_reshape_transpose(self, rng):
        a = nd.parameter(rng.normal(size=(2, 3)))
        b = nd.parameter(rng.normal(size=(2, 2)))
        w = rng.normal(size=(5, 2, 2))

        def f():
            c = nd.concat([a, b], axis=1)
            s = nd.stack([c, nd.mul(c, c)], axis=0)
            t = nd.transpose(nd.reshape(s, (2, 5, 2)), (1, 0, 2))
            return nd.sum(nd.mul(t, w))

        _check(f, {"a": a, "b": b})

    def test_getitem_take_and_embedding_accumulate_repeats(self, rng):
        table = nd.parameter(rng.normal(size=(5, 3)))
        idx = np.array([[0, 2, 2], [4, 0, 0]])

        def f():
            e = nd.embedding_lookup(table, idx)
            return nd.add(nd.sum(nd.mul(e, e)), nd.sum(nd.take(table, np.array([1, 1]))[0]))

        _check(f, {"table": table})
        loss = nd.sum(nd.embedding_lookup(table, np.array([2, 2, 2])))
        nd.backward(loss)
        np.testing.assert_array_equal(table.grad[2], [3.0, 3.0, 3.0])
        np.testing.assert_array_equal(table.grad[0], 0.0)

    def test_getitem_slices(self, rng):
        a = nd.parameter(rng.normal(size=(4, 5)))
        _check(lambda: nd.sum(nd.mul(a[1:3, ::2], a[:2, 1:4])), {"a": a})

    def test_reductions(self, rng):
        a = nd.parameter(rng.normal(size=(3, 4)))
        w = rng.normal(size=(4,))
        _check(lambda: nd.add(nd.sum(nd.mul(nd.mean(a, axis=0), w)),
                              nd.sum(nd.mul(nd.sum(a, axis=1, keepdims=True), a))), {"a": a})


class TestSoftmax:
    def test_rows_sum_to_one_and_mask_is_exact_zero(self, rng):
        x = rng.normal(size=(3, 5))
        mask = np.array([[1, 1, 1, 0, 0], [1, 1, 1, 1, 1], [1, 0, 0, 0, 0]], dtype=bool)
        p = nd.softmax_rows(nd.tensor(x), mask).data
        np.testing.assert_allclose(p.sum(axis=1), 1.0)
        assert np.all(p[~mask] == 0.0)
        np.testing.assert_allclose(p[2], [1, 0, 0, 0, 0])

    def test_log_softmax_agrees_with_log_of_softmax(self, rng):
        x = rng.normal(size=(2, 4)) * 30
        np.testing.assert_allclose(np.exp(nd.log_softmax_rows(nd.tensor(x)).data),
                                   nd.softmax_rows(nd.tensor(x)).data, atol=1e-12)

    def test_masked_gradients(self, rng):
        x = nd.parameter(rng.normal(size=(3, 4)))
        mask = np.array([[1, 1, 0, 0], [1, 1, 1, 1], [1, 1, 1, 0]], dtype=bool)
        w = rng.normal(size=(3, 4))
        _check(lambda: nd.sum(nd.mul(nd.softmax_rows(x, mask), w)), {"x": x})
        _check(lambda: nd.sum(nd.mul(nd.log_softmax_rows(x, mask), w)), {"x": x})
        nd.backward(nd.sum(nd.mul(nd.log_softmax_rows(x, mask), w)))
        assert np.all(x.grad[~mask] == 0.0)

    def test_fully_masked_row_raises(self):
        with pytest.raises(ValueError):
            nd.softmax_rows(nd.tensor(np.zeros((2, 2))), np.array([[1, 0], [0, 0]], dtype=bool))


class TestTape:
    def test_shared_subexpression_accumulates(self):
        x = nd.parameter([3.0])
        y = nd.mul(x, x)
        nd.backward(nd.sum(nd.add(y, y)))
        np.testing.assert_allclose(x.grad, [12.0])

    def test_backward_requires_scalar(self):
        x = nd.parameter(np.ones(3))
        with pytest.raises(ShapeError):
            nd.backward(nd.mul(x, 2.0))

    def test_no_grad_records_nothing(self):
        x = nd.parameter(np.ones(2))
        with nd.no_grad():
            y = nd.sum(nd.mul(x, x))
        assert not y.requires_grad
        with pytest.raises(ValueError):
            nd.backward(y)

    def test_constants_get_no_gradient(self):
        x = nd.parameter(np.ones(2))
        c = nd.tensor(np.ones(2))
        nd.backward(nd.sum(nd.mul(x, c)))
        assert c.grad is None

    def test_zero_grad(self):
        x = nd.parameter(np.ones(2))
        nd.backward(nd.sum(x))
        nd.zero_grad([x])
        assert x.grad is None

    def test_deep_chain_does_not_recurse(self):
        x = nd.parameter([1.0])
        y = x
        for _ in range(5000):
            y = nd.add(y, 0.0)
        nd.backward(nd.sum(y))
        np.testing.assert_allclose(x.grad, [1.0])


class TestDropout:
    def test_eval_mode_is_identity(self, rng):
        x = nd.tensor(rng.normal(size=(4, 4)))
        assert nd.dropout(x, 0.5, train=False) is x

    def test_inverted_scaling_preserves_expectation(self):
        x = nd.tensor(np.ones((200, 200)))
        out = nd.dropout(x, 0.2, train=True, rng=np.random.default_rng(0)).data
        assert set(np.unique(out)) <= {0.0, 1.25}
        np.testing.assert_allclose(out.mean(), 1.0, atol=0.01)

    def test_rejects_bad_rate_and_missing_rng(self):
        with pytest.raises(ValueError):
            nd.dropout(nd.tensor([1.0]), 1.0, train=True, rng=np.random.default_rng(0))
        with pytest.raises(ValueError):
            nd.dropout(nd.tensor([1.0]), 0.5, train=True)
