"""Autodiff engine: forward values against brute-force oracles, gradients
against central finite differences, and the graph/shape contracts."""

import numpy as np
import pytest

from blindtrack import tensor as tz
from blindtrack.errors import NotScalar, ShapeMismatch
from blindtrack.tensor import Tensor

from util_grad import check_gradients


def loop_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for p in range(k):
                out[i, j] += a[i, p] * b[p, j]
    return out


def direct_softmax(a: np.ndarray) -> np.ndarray:
    out = np.zeros_like(a)
    for i in range(a.shape[0]):
        e = np.exp(a[i] - a[i].max())
        out[i] = e / e.sum()
    return out


class TestForward:
    def test_matmul_matches_loop_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            a = rng.normal(size=(3, 4))
            b = rng.normal(size=(4, 2))
            got = tz.matmul(Tensor(a), Tensor(b)).data
            assert np.allclose(got, loop_matmul(a, b), atol=1e-12)

    def test_softmax_matches_direct_oracle_and_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        a = rng.normal(scale=5.0, size=(6, 7))
        got = tz.softmax_rows(Tensor(a)).data
        assert np.allclose(got, direct_softmax(a), atol=1e-12)
        assert np.allclose(got.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(got >= 0.0)

    def test_softmax_stable_for_large_inputs(self):
        a = np.array([[1000.0, 1000.0, 999.0]])
        got = tz.softmax_rows(Tensor(a)).data
        assert np.all(np.isfinite(got))
        assert abs(got.sum() - 1.0) < 1e-12

    def test_layer_norm_rows_standardized(self):
        rng = np.random.default_rng(2)
        x = rng.normal(loc=3.0, scale=2.0, size=(5, 8))
        gain = Tensor(np.ones((1, 8)))
        shift = Tensor(np.zeros((1, 8)))
        out = tz.layer_norm(Tensor(x), gain, shift).data
        assert np.allclose(out.mean(axis=1), 0.0, atol=1e-10)
        assert np.allclose(out.var(axis=1), 1.0, atol=1e-3)

    def test_scalar_and_vector_promotion(self):
        assert Tensor(2.5).data.shape == (1, 1)
        assert Tensor([1.0, 2.0, 3.0]).data.shape == (1, 3)
        with pytest.raises(ShapeMismatch):
            Tensor(np.zeros((2, 2, 2)))

    def test_slice_concat_round_trip(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 6))
        t = Tensor(x)
        rows = tz.concat_rows([tz.slice_rows(t, 0, 2), tz.slice_rows(t, 2, 4)])
        cols = tz.concat_cols([tz.slice_cols(t, 0, 3), tz.slice_cols(t, 3, 6)])
        assert np.array_equal(rows.data, x)
        assert np.array_equal(cols.data, x)

    def test_reshape_is_row_major(self):
        x = np.arange(6.0).reshape(2, 3)
        out = tz.reshape(Tensor(x), 3, 2).data
        assert np.array_equal(out, np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]]))

    def test_clamp_away_from_zero(self):
        x = Tensor(np.array([[0.5, -0.5, 1e-9, -1e-9, 0.0]]))
        out = tz.clamp_away_from_zero(x, 1e-6).data
        assert np.array_equal(out, np.array([[0.5, -0.5, 1e-6, -1e-6, 1e-6]]))

    def test_mse_loss_value(self):
        pred = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
        target = Tensor(np.array([[0.0, 0.0], [0.0, 0.0]]))
        # (1 + 4 + 9 + 16) / 4
        assert tz.mse_loss(pred, target).item() == pytest.approx(7.5, abs=1e-12)

    def test_deterministic_reruns_bitwise(self):
        rng = np.random.default_rng(4)
        a = rng.normal(size=(3, 3))
        b = rng.normal(size=(3, 3))
        one = tz.softmax_rows(tz.matmul(Tensor(a), Tensor(b))).data
        two = tz.softmax_rows(tz.matmul(Tensor(a), Tensor(b))).data
        assert np.array_equal(one, two)


class TestShapeContracts:
    def test_add_rejects_general_broadcast(self):
        with pytest.raises(ShapeMismatch):
            tz.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 1))))
        with pytest.raises(ShapeMismatch):
            tz.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 3))))

    def test_add_allows_bias_row(self):
        out = tz.add(Tensor(np.zeros((4, 3))), Tensor(np.array([[1.0, 2.0, 3.0]])))
        assert np.array_equal(out.data, np.tile([1.0, 2.0, 3.0], (4, 1)))

    def test_matmul_inner_dim_checked(self):
        with pytest.raises(ShapeMismatch):
            tz.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_mul_requires_exact_shapes(self):
        with pytest.raises(ShapeMismatch):
            tz.mul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((1, 3))))

    def test_backward_requires_scalar(self):
        t = Tensor(np.zeros((2, 2)), requires_grad=True)
        with pytest.raises(NotScalar):
            (t + t).backward()

    def test_constant_graph_is_pruned(self):
        out = tz.matmul(Tensor(np.eye(2)), Tensor(np.eye(2)))
        assert out._parents == ()
        assert not out.requires_grad


class TestBackward:
    def test_every_primitive_gradient(self):
        # one loss per primitive, checked on several random instances
        rng = np.random.default_rng(5)
        for trial in range(3):
            a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
            b = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
            w = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
            d = Tensor(rng.normal(size=(3, 4)) + 3.0, requires_grad=True)
            cases = [
                (lambda: tz.sum_all(tz.add(a, b)), [a, b]),
                (lambda: tz.sum_all(tz.sub(a, b)), [a, b]),
                (lambda: tz.mean_all(tz.mul(a, b)), [a, b]),
                (lambda: tz.mean_all(tz.div(a, d)), [a, d]),
                (lambda: tz.sum_all(tz.square(tz.matmul(a, w))), [a, w]),
                (lambda: tz.sum_all(tz.square(tz.transpose(a))), [a]),
                (lambda: tz.sum_all(tz.exp(tz.scale(a, 0.3))), [a]),
                (lambda: tz.sum_all(tz.tanh(a)), [a]),
                (lambda: tz.sum_all(tz.sigmoid(a)), [a]),
                (lambda: tz.sum_all(tz.square(tz.relu(a))), [a]),
                (lambda: tz.sum_all(tz.square(tz.softmax_rows(a))), [a]),
                (lambda: tz.mean_all(tz.square(tz.reshape(a, 4, 3))), [a]),
                (lambda: tz.sum_all(tz.square(tz.slice_rows(a, 1, 3))), [a]),
                (lambda: tz.sum_all(tz.square(tz.slice_cols(a, 0, 2))), [a]),
                (lambda: tz.sum_all(tz.square(tz.concat_rows([a, b]))), [a, b]),
                (lambda: tz.sum_all(tz.square(tz.concat_cols([a, b]))), [a, b]),
                (lambda: tz.sum_all(tz.square(tz.row_sum(a))), [a]),
                (lambda: tz.sum_all(tz.square(tz.mean_rows(a))), [a]),
                (lambda: tz.mean_all(tz.square(tz.tile_rows(tz.mean_rows(a), 5))), [a]),
                (lambda: tz.mse_loss(a, b), [a, b]),
                (lambda: tz.sum_all(tz.col_scale(a, [1.0, -2.0, 0.5, 3.0])), [a]),
            ]
            for build, params in cases:
                check_gradients(build, params, tol=1e-4)

    def test_relu_gradient_away_from_kink(self):
        x = Tensor(np.array([[1.0, -1.0, 2.0]]), requires_grad=True)
        check_gradients(lambda: tz.sum_all(tz.relu(x)), [x], tol=1e-6)

    def test_clamp_masks_gradient(self):
        x = Tensor(np.array([[0.5, 1e-9, -0.25]]), requires_grad=True)
        out = tz.sum_all(tz.clamp_away_from_zero(x, 1e-6))
        out.backward()
        assert np.array_equal(x.grad, np.array([[1.0, 0.0, 1.0]]))

    def test_layer_norm_gradient(self):
        rng = np.random.default_rng(6)
        x = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        gain = Tensor(rng.normal(size=(1, 5)), requires_grad=True)
        shift = Tensor(rng.normal(size=(1, 5)), requires_grad=True)
        check_gradients(
            lambda: tz.sum_all(tz.square(tz.layer_norm(x, gain, shift))),
            [x, gain, shift],
            tol=1e-4,
        )

    def test_attention_gradient(self):
        rng = np.random.default_rng(7)
        q = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        k = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        v = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        check_gradients(
            lambda: tz.sum_all(tz.square(tz.attention_block(q, k, v))),
            [q, k, v],
            tol=1e-4,
        )

    def test_shared_node_counted_once(self):
        # diamond: s feeds the loss twice; double-visiting would double part
        # of the gradient
        x = Tensor(np.array([[2.0, -1.0]]), requires_grad=True)
        w = Tensor(np.array([[1.0, 0.5], [-0.5, 2.0]]), requires_grad=True)

        def build():
            s = tz.matmul(x, w)
            return tz.add(tz.sum_all(tz.mul(s, s)), tz.sum_all(s))

        check_gradients(build, [x, w], tol=1e-6)

    def test_repeated_backward_accumulates(self):
        x = Tensor(np.array([[3.0]]), requires_grad=True)
        loss = tz.sum_all(tz.square(x))
        loss.backward()
        first = x.grad.copy()
        loss.backward()
        assert np.array_equal(x.grad, 2.0 * first)
        assert first[0, 0] == pytest.approx(6.0, abs=1e-12)

    def test_long_chain_does_not_recurse(self):
        # deeper than the default Python recursion limit
        x = Tensor(np.array([[1.0]]), requires_grad=True)
        y = x
        for _ in range(3000):
            y = tz.scale(y, 1.0)
        tz.sum_all(y).backward()
        assert x.grad[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_grad_populated_on_intermediates(self):
        x = Tensor(np.array([[1.0, 2.0]]), requires_grad=True)
        mid = tz.square(x)
        tz.sum_all(mid).backward()
        assert mid.grad is not None
        assert np.array_equal(mid.grad, np.ones((1, 2)))
