import numpy as np
import pytest

from conftest import assert_gradients_match

from gclbench.autodiff import (
    AdamState,
    BatchNormState,
    Tape,
    adam_step,
    backward,
    op_kinds,
    set_precision,
)
from gclbench.errors import NonFiniteError, ShapeError, TapeError, UnknownOpError


def weighted(tape, out, weights):
    """Scalar sum(out * weights) so every output entry gets its own upstream gradient."""
    return tape.sum(tape.multiply(out, tape.constant(weights)))


@pytest.fixture
def r():
    return np.random.default_rng(7)


# =============================================================================
# Gradient checks, one per op-kind
# =============================================================================

class TestGradients:
    def test_matmul(self, r):
        w = r.normal(size=(3, 2))
        assert_gradients_match(lambda t, p: weighted(t, t.matmul(p["a"], p["b"]), w),
                               {"a": r.normal(size=(3, 4)), "b": r.normal(size=(4, 2))})

    def test_matmul_transpose_b(self, r):
        w = r.normal(size=(3, 5))
        assert_gradients_match(lambda t, p: weighted(t, t.matmul(p["a"], p["b"], transpose_b=True), w),
                               {"a": r.normal(size=(3, 4)), "b": r.normal(size=(5, 4))})

    def test_add_with_broadcast(self, r):
        w = r.normal(size=(4, 3))
        assert_gradients_match(lambda t, p: weighted(t, t.add(p["a"], p["b"]), w),
                               {"a": r.normal(size=(4, 3)), "b": r.normal(size=(3,))})

    def test_multiply_with_broadcast(self, r):
        w = r.normal(size=(4, 3))
        assert_gradients_match(lambda t, p: weighted(t, t.multiply(p["a"], p["b"]), w),
                               {"a": r.normal(size=(4, 3)), "b": r.normal(size=(1, 3))})

    def test_relu_away_from_kink(self, r):
        x = r.normal(size=(5, 3))
        x = np.where(np.abs(x) < 0.1, 0.5, x)
        w = r.normal(size=(5, 3))
        assert_gradients_match(lambda t, p: weighted(t, t.relu(p["x"]), w), {"x": x})

    @pytest.mark.parametrize("op", ["softplus", "exp"])
    def test_smooth_unary(self, r, op):
        w = r.normal(size=(4, 2))
        assert_gradients_match(lambda t, p: weighted(t, getattr(t, op)(p["x"]), w), {"x": r.normal(size=(4, 2))})

    def test_log(self, r):
        w = r.normal(size=(4, 2))
        assert_gradients_match(lambda t, p: weighted(t, t.log(p["x"]), w), {"x": r.uniform(0.5, 2.0, size=(4, 2))})

    @pytest.mark.parametrize("axis", [None, 0, 1])
    def test_sum_and_mean(self, r, axis):
        x = r.normal(size=(3, 4))

        def build(t, p):
            s = t.sum(p["x"], axis=axis)
            m = t.mean(p["x"], axis=axis)
            both = t.multiply(s, m)
            return t.sum(both) if axis is not None else both

        assert_gradients_match(build, {"x": x})

    @pytest.mark.parametrize("training", [True, False])
    def test_batch_norm(self, r, training):
        w = r.normal(size=(6, 3))

        def build(t, p):
            state = BatchNormState(np.full(3, 0.2), np.full(3, 1.5))
            return weighted(t, t.batch_norm(p["x"], p["gamma"], p["beta"], state, training), w)

        assert_gradients_match(build, {"x": r.normal(size=(6, 3)), "gamma": r.normal(size=3),
                                       "beta": r.normal(size=3)})

    def test_cosine_similarity_matrix(self, r):
        w = r.normal(size=(3, 4))
        assert_gradients_match(lambda t, p: weighted(t, t.cosine_similarity(p["a"], p["b"]), w),
                               {"a": r.normal(size=(3, 5)), "b": r.normal(size=(4, 5))})

    def test_cosine_similarity_vectors(self, r):
        assert_gradients_match(lambda t, p: t.cosine_similarity(p["a"], p["b"]),
                               {"a": r.normal(size=4), "b": r.normal(size=4)})

    def test_concatenate(self, r):
        w = r.normal(size=(3, 5))
        assert_gradients_match(lambda t, p: weighted(t, t.concatenate([p["a"], p["b"]], axis=1), w),
                               {"a": r.normal(size=(3, 2)), "b": r.normal(size=(3, 3))})

    def test_scatter_sum(self, r):
        index = np.array([0, 2, 2, 1, 0])
        w = r.normal(size=(3, 2))
        assert_gradients_match(lambda t, p: weighted(t, t.scatter_sum(p["x"], index, 3), w),
                               {"x": r.normal(size=(5, 2))})

    def test_row_gather_with_repeats(self, r):
        index = np.array([1, 1, 0, 3])
        w = r.normal(size=(4, 2))
        assert_gradients_match(lambda t, p: weighted(t, t.row_gather(p["x"], index), w),
                               {"x": r.normal(size=(4, 2))})


# =============================================================================
# Tape behaviour
# =============================================================================

class TestTape:
    def test_every_op_kind_is_registered(self):
        assert set(op_kinds()) >= {
            "matmul", "add", "multiply", "relu", "softplus", "exp", "log", "sum-reduce",
            "mean-reduce", "batch-norm", "cosine-similarity", "concatenate", "scatter-sum", "row-gather",
        }

    def test_unused_parameter_gets_zero_gradient(self):
        tape = Tape()
        a = tape.parameter("a", np.ones(3))
        tape.parameter("unused", np.ones((2, 2)))
        grads = backward(tape, tape.sum(a))
        np.testing.assert_array_equal(grads["a"], np.ones(3))
        np.testing.assert_array_equal(grads["unused"], np.zeros((2, 2)))

    def test_shared_operand_accumulates(self):
        tape = Tape()
        x = tape.parameter("x", np.array([3.0]))
        grads = backward(tape, tape.sum(tape.multiply(x, x)))
        np.testing.assert_allclose(grads["x"], [6.0])

    def test_unknown_op(self):
        tape = Tape()
        with pytest.raises(UnknownOpError, match="softmax"):
            tape.forward("softmax", tape.constant(np.ones(2)))

    def test_foreign_operand(self):
        first, second = Tape(), Tape()
        x = first.parameter("x", np.ones(2))
        with pytest.raises(TapeError):
            second.relu(x)

    def test_foreign_loss(self):
        first, second = Tape(), Tape()
        loss = first.sum(first.parameter("x", np.ones(2)))
        with pytest.raises(TapeError):
            backward(second, loss)

    def test_non_scalar_loss(self):
        tape = Tape()
        x = tape.parameter("x", np.ones(2))
        with pytest.raises(ShapeError, match="scalar"):
            backward(tape, tape.relu(x))

    def test_duplicate_parameter_name(self):
        tape = Tape()
        tape.parameter("w", np.ones(2))
        with pytest.raises(TapeError, match="already registered"):
            tape.parameter("w", np.ones(2))

    def test_non_finite_forward(self):
        tape = Tape()
        with pytest.raises(NonFiniteError, match="log"):
            tape.log(tape.constant(np.array([0.0, 1.0])))

    def test_non_finite_gradient(self):
        tape = Tape()
        x = tape.parameter("x", np.array([1e-320, 1.0]))
        with np.errstate(divide="ignore", over="ignore"):
            with pytest.raises(NonFiniteError, match="Gradient of 'x'"):
                backward(tape, tape.sum(tape.log(x)))

    def test_shape_mismatch(self):
        tape = Tape()
        with pytest.raises(ShapeError):
            tape.matmul(tape.constant(np.ones((2, 3))), tape.constant(np.ones((2, 3))))

    def test_relu_subgradient_at_zero(self):
        tape = Tape()
        x = tape.parameter("x", np.array([0.0, 1.0]))
        grads = backward(tape, tape.sum(tape.relu(x)))
        np.testing.assert_array_equal(grads["x"], [0.0, 1.0])

    def test_cosine_zero_vector(self):
        tape = Tape()
        with pytest.raises(ShapeError, match="zero-norm"):
            tape.cosine_similarity(tape.constant(np.zeros((1, 2))), tape.constant(np.ones((1, 2))))

    def test_float32_precision(self):
        set_precision("float32")
        try:
            assert Tape().constant(np.ones(2)).values.dtype == np.float32
        finally:
            set_precision("float64")
        assert Tape().constant(np.ones(2)).values.dtype == np.float64


class TestBatchNorm:
    def test_train_mode_normalises_and_updates_running_stats(self, r):
        x = r.normal(loc=3.0, scale=2.0, size=(50, 4))
        state = BatchNormState(np.zeros(4), np.ones(4))
        tape = Tape()
        out = tape.batch_norm(tape.constant(x), tape.constant(np.ones(4)), tape.constant(np.zeros(4)), state, True)
        np.testing.assert_allclose(out.values.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(out.values.var(axis=0), 1.0, atol=1e-6)
        np.testing.assert_allclose(state.running_mean, 0.1 * x.mean(axis=0))
        np.testing.assert_allclose(state.running_var, 0.9 + 0.1 * x.var(axis=0, ddof=1))

    def test_eval_mode_uses_running_stats(self):
        state = BatchNormState(np.array([1.0]), np.array([4.0]))
        tape = Tape()
        out = tape.batch_norm(tape.constant(np.array([[3.0]])), tape.constant(np.ones(1)),
                              tape.constant(np.zeros(1)), state, False)
        np.testing.assert_allclose(out.values, [[2.0 / np.sqrt(4.0 + 1e-5)]])
        np.testing.assert_array_equal(state.running_mean, [1.0])


class TestAdam:
    def test_first_step_moves_by_lr_against_gradient(self):
        params = {"w": np.array([1.0, -1.0])}
        state = AdamState.create(params, lr=0.1)
        new, new_state = adam_step(params, {"w": np.array([0.5, -2.0])}, state)
        np.testing.assert_allclose(new["w"], [0.9, -0.9], atol=1e-6)
        assert new_state.step == 1

    def test_inputs_not_mutated(self):
        params = {"w": np.array([1.0])}
        state = AdamState.create(params)
        adam_step(params, {"w": np.array([1.0])}, state)
        np.testing.assert_array_equal(params["w"], [1.0])
        assert state.step == 0
        np.testing.assert_array_equal(state.first_moment["w"], [0.0])

    def test_decoupled_weight_decay_with_zero_gradient(self):
        params = {"w": np.array([2.0])}
        state = AdamState.create(params, lr=0.1, weight_decay=0.5)
        new, _ = adam_step(params, {"w": np.array([0.0])}, state)
        np.testing.assert_allclose(new["w"], [2.0 - 0.1 * 0.5 * 2.0])

    def test_mismatched_names(self):
        params = {"w": np.ones(2)}
        with pytest.raises(ShapeError):
            adam_step(params, {"v": np.ones(2)}, AdamState.create(params))

    def test_converges_on_quadratic(self):
        params = {"w": np.array([5.0, -3.0])}
        state = AdamState.create(params, lr=0.1)
        for _ in range(1000):
            params, state = adam_step(params, {"w": 2 * params["w"]}, state)
        np.testing.assert_allclose(params["w"], 0.0, atol=5e-2)
