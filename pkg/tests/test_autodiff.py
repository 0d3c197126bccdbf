import numpy as np
import pytest

from deepknot import autodiff as ad
from deepknot.linalg import SingularSystemError


def fd_check(f, x0, tol=1e-6):
    assert ad.grad_check(f, x0) < tol


class TestBasics:
    def test_fan_out_accumulates(self):
        t = ad.Tape()
        x = t.var(3.0)
        g = t.backward(x + x)
        assert g[x] == 2.0

    def test_product_rule(self):
        t = ad.Tape()
        x, y = t.var(2.0), t.var(5.0)
        g = t.backward(x * y + x)
        assert (g[x], g[y]) == (6.0, 2.0)

    def test_constants_get_zero(self):
        t = ad.Tape()
        x = t.var([1.0, 2.0])
        c = t.const([3.0, 4.0])
        g = t.backward(ad.sum_all(x * c))
        np.testing.assert_array_equal(g[c], [0.0, 0.0])
        np.testing.assert_array_equal(g[x], [3.0, 4.0])

    def test_unused_leaf_zero(self):
        t = ad.Tape()
        x, y = t.var(1.0), t.var([1.0, 2.0])
        g = t.backward(x * 2.0)
        np.testing.assert_array_equal(g[y], [0.0, 0.0])

    def test_backward_needs_scalar(self):
        t = ad.Tape()
        with pytest.raises(ad.ShapeError):
            t.backward(t.var([1.0, 2.0]))

    def test_backward_is_repeatable(self):
        t = ad.Tape()
        x = t.var([1.0, -2.0])
        y = ad.sum_all(ad.square(x))
        np.testing.assert_array_equal(t.backward(y)[x], t.backward(y)[x])

    def test_mixed_tapes_rejected(self):
        a, b = ad.Tape(), ad.Tape()
        with pytest.raises(ValueError):
            a.var(1.0) + b.var(1.0)

    def test_shape_mismatch(self):
        t = ad.Tape()
        with pytest.raises(ad.ShapeError):
            t.var([1.0, 2.0]) + t.var([1.0, 2.0, 3.0])
        with pytest.raises(ad.ShapeError):
            t.var(np.ones((2, 3))) @ t.var(np.ones((2, 3)))


class TestElementwise:
    def test_broadcast_add(self):
        fd_check(lambda t, x: ad.sum_all(ad.square(x + np.arange(6.0).reshape(2, 3))), np.ones((1, 3)))

    def test_div(self):
        rng = np.random.default_rng(0)
        fd_check(lambda t, x: ad.sum_all(x / (x * x + 1.0)), rng.normal(size=5))

    def test_div_by_zero_names_index(self):
        t = ad.Tape()
        with pytest.raises(ad.NumericError, match=r"\[2\]"):
            t.var([1.0, 2.0, 3.0]) / t.var([1.0, 1.0, 0.0])

    def test_safe_recip(self):
        t = ad.Tape()
        x = t.var([0.0, 2.0])
        y = ad.safe_recip(x)
        np.testing.assert_array_equal(y.value, [0.0, 0.5])
        np.testing.assert_array_equal(t.backward(ad.sum_all(y))[x], [0.0, -0.25])

    def test_relu_kink(self):
        t = ad.Tape()
        x = t.var([-1.0, 0.0, 2.0])
        np.testing.assert_array_equal(t.backward(ad.sum_all(ad.relu(x)))[x], [0.0, 0.0, 1.0])

    def test_exp(self):
        fd_check(lambda t, x: ad.sum_all(ad.exp(x)), [0.1, -0.7, 1.3])

    def test_clip_min_passes_only_unclipped(self):
        t = ad.Tape()
        x = t.var([0.1, 0.5])
        y = ad.clip_min(x, 0.2)
        np.testing.assert_array_equal(y.value, [0.2, 0.5])
        np.testing.assert_array_equal(t.backward(ad.sum_all(y * y))[x], [0.0, 1.0])


class TestStructural:
    def test_cumsum_adjoint_is_reverse_cumsum(self):
        t = ad.Tape()
        x = t.var([1.0, 2.0, 3.0, 4.0])
        w = np.array([1.0, 10.0, 100.0, 1000.0])
        g = t.backward(ad.sum_all(ad.cumsum(x) * w))[x]
        np.testing.assert_array_equal(g, [1111.0, 1110.0, 1100.0, 1000.0])

    def test_take_slice_and_fancy(self):
        fd_check(lambda t, x: ad.sum_all(ad.square(x[1:3])) + ad.sum_all(x[np.array([0, 0, 2])]), [1.0, 2.0, 3.0])

    def test_take_fancy_2d(self):
        rows = np.array([[0, 1], [2, 0]])
        fd_check(lambda t, x: ad.sum_all(ad.square(x[rows])), np.arange(1.0, 4.0))

    def test_concat(self):
        t = ad.Tape()
        x = t.var([1.0, 2.0])
        y = ad.concat([np.zeros(1), x, np.ones(2)])
        np.testing.assert_array_equal(y.value, [0, 1, 2, 1, 1])
        np.testing.assert_array_equal(t.backward(ad.sum_all(y * np.arange(5.0)))[x], [1.0, 2.0])

    def test_stack_and_scatter(self):
        def f(t, x):
            m = ad.stack_columns([x, x * 2.0])
            d = ad.scatter(ad.reshape(m, (4,)), (np.array([0, 0, 1, 1]), np.array([0, 2, 1, 2])), (2, 3))
            return ad.sum_all(ad.square(d @ np.array([1.0, 2.0, 3.0])))

        fd_check(f, [0.3, -1.1])

    def test_matmul_chain(self):
        rng = np.random.default_rng(1)
        b = rng.normal(size=(3, 4))
        v = rng.normal(size=4)
        fd_check(lambda t, x: ad.sum_all(ad.square(x @ b @ v)), rng.normal(size=(2, 3)))
        fd_check(lambda t, x: ad.sum_all(x @ b), rng.normal(size=3))
        fd_check(lambda t, x: ad.sum_all(b @ x), rng.normal(size=4))
        fd_check(lambda t, x: x @ x, rng.normal(size=4))


class TestSoftmax:
    def test_sums_to_one(self):
        t = ad.Tape()
        y = ad.softmax(t.var([1.0, 2.0, 3.0]))
        assert y.value.sum() == pytest.approx(1.0, abs=1e-15)

    def test_shift_invariant(self):
        t = ad.Tape()
        a = ad.softmax(t.var([1.0, 2.0, 3.0])).value
        b = ad.softmax(t.var([1001.0, 1002.0, 1003.0])).value
        np.testing.assert_allclose(a, b, rtol=1e-14)

    def test_large_logits_are_finite(self):
        t = ad.Tape()
        assert np.all(np.isfinite(ad.softmax(t.var([800.0, 0.0, -800.0])).value))

    def test_jacobian_fd(self):
        w = np.array([0.3, -1.0, 2.0, 0.5])
        fd_check(lambda t, x: ad.sum_all(ad.softmax(x) * w), [0.1, 0.4, -0.2, 1.5])

    def test_rejects_nonfinite(self):
        t = ad.Tape()
        with pytest.raises(ad.NumericError):
            ad.softmax(t.var([0.0, np.nan]))


class TestLsSolve:
    def test_matches_numeric_solution(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(12, 4))
        p = rng.normal(size=(12, 2))
        t = ad.Tape()
        c = ad.ls_solve(t.var(a), p, 0.0)
        np.testing.assert_allclose(c.value, np.linalg.lstsq(a, p, rcond=None)[0], rtol=1e-10)

    @pytest.mark.parametrize("ridge", [0.0, 1e-8, 1e-2])
    def test_gradient_fd(self, ridge):
        rng = np.random.default_rng(3)
        p = rng.normal(size=(12, 2))
        w = rng.normal(size=(4, 2))
        a0 = rng.normal(size=(12, 4))
        fd_check(lambda t, a: ad.sum_all(ad.ls_solve(a, p, ridge) * w), a0, tol=1e-5)

    def test_residual_loss_gradient_fd(self):
        rng = np.random.default_rng(4)
        p = rng.normal(size=(12, 3))

        def f(t, a):
            r = p - a @ ad.ls_solve(a, p, 1e-8)
            return ad.sum_all(ad.square(r))

        fd_check(f, rng.normal(size=(12, 4)), tol=1e-5)

    def test_vector_rhs(self):
        rng = np.random.default_rng(5)
        p = rng.normal(size=12)
        fd_check(lambda t, a: ad.sum_all(ad.square(ad.ls_solve(a, p, 1e-8))), rng.normal(size=(12, 4)), tol=1e-5)

    def test_ridge_limit(self):
        rng = np.random.default_rng(6)
        a0 = rng.normal(size=(12, 4))
        p = rng.normal(size=(12, 2))
        grads = []
        for ridge in (0.0, 1e-10):
            t = ad.Tape()
            a = t.var(a0)
            grads.append(t.backward(ad.sum_all(ad.ls_solve(a, p, ridge)))[a])
        np.testing.assert_allclose(grads[0], grads[1], rtol=1e-6, atol=1e-9)

    def test_singular_raises(self):
        t = ad.Tape()
        a = np.ones((5, 2))
        with pytest.raises(SingularSystemError):
            ad.ls_solve(t.var(a), np.ones(5), 0.0)


class TestGradCheckUtilities:
    def test_finite_difference_quadratic(self):
        g = ad.finite_difference(lambda v: float(v @ v), np.array([1.0, -2.0]))
        np.testing.assert_allclose(g, [2.0, -4.0], rtol=1e-8)

    def test_error_metric(self):
        assert ad.max_gradient_error([1.0, 1e-10], [1.1, 2e-10]) == pytest.approx(0.1)

    def test_detects_wrong_adjoint(self):
        def wrong(t, x):
            return t._push("bad", x.value.sum() ** 2, (x,), lambda g: (g * np.ones_like(x.value),))

        assert ad.grad_check(wrong, [1.0, 2.0]) > 1.0
