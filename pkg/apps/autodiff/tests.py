import math

import numpy as np
from django.test import SimpleTestCase

from apps.autodiff.exceptions import (
    EmptyLogits,
    InvalidEpsilon,
    NonDeterministicFunction,
    NonScalarLoss,
    TokenOutOfVocab,
)
from apps.autodiff.services import (
    Graph,
    Tensor,
    backward,
    concat,
    finite_difference_check,
    log_softmax,
    no_grad,
    sequence_nll,
    softmax,
    stack,
)


class SoftmaxTests(SimpleTestCase):

    def test_symmetric_logits(self):
        np.testing.assert_allclose(softmax(Tensor([1.0, 1.0])).data, [0.5, 0.5], atol=1e-12)

    def test_log_three(self):
        out = softmax(Tensor([0.0, math.log(3.0)])).data
        np.testing.assert_allclose(out, [0.25, 0.75], atol=1e-12)

    def test_large_magnitudes_are_stable(self):
        out = softmax(Tensor([1000.0, 1000.0])).data
        np.testing.assert_allclose(out, [0.5, 0.5], atol=1e-12)
        self.assertTrue(np.all(np.isfinite(out)))

    def test_sums_to_one_and_shift_invariant(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            logits = rng.normal(scale=5.0, size=7)
            probs = softmax(Tensor(logits)).data
            shifted = softmax(Tensor(logits + 123.4)).data
            self.assertAlmostEqual(probs.sum(), 1.0, delta=1e-9)
            self.assertTrue(np.all(probs >= 0))
            np.testing.assert_allclose(probs, shifted, atol=1e-9)

    def test_empty_logits(self):
        with self.assertRaises(EmptyLogits):
            softmax(Tensor(np.zeros(0)))


class SequenceNllTests(SimpleTestCase):

    def test_uniform_rows(self):
        probs = Tensor(np.full((3, 4), 0.25))
        self.assertAlmostEqual(sequence_nll(probs, [0, 1, 3]).item(), 3 * math.log(4), places=10)

    def test_one_hot_rows_give_zero(self):
        probs = Tensor(np.eye(4)[[2, 0, 1]])
        self.assertAlmostEqual(sequence_nll(probs, [2, 0, 1]).item(), 0.0, places=12)

    def test_hand_evaluated_rows(self):
        probs = Tensor([[0.5, 0.25, 0.25], [0.5, 0.25, 0.25]])
        self.assertAlmostEqual(sequence_nll(probs, [1, 2]).item(), 2 * math.log(4), places=10)

    def test_target_outside_vocab(self):
        with self.assertRaises(TokenOutOfVocab):
            sequence_nll(Tensor(np.full((2, 3), 1 / 3)), [0, 3])


class BackwardTests(SimpleTestCase):

    def test_product_rule(self):
        x = Tensor(2.0, requires_grad=True)
        y = Tensor(3.0, requires_grad=True)
        grads = backward(x * y)
        self.assertEqual(grads[x.id], 3.0)
        self.assertEqual(grads[y.id], 2.0)
        self.assertEqual(x.grad, 3.0)

    def test_softmax_nll_composite_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        weights = Tensor(rng.normal(size=(5, 4)), requires_grad=True)
        inputs = Tensor(rng.normal(size=(3, 4)))

        def loss():
            return sequence_nll(softmax(inputs @ weights.T), [1, 4, 0])

        self.assertLessEqual(finite_difference_check(loss, [weights], eps=1e-4), 1e-5)

    def test_independent_parameter_gets_zero(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        p = Tensor([5.0], requires_grad=True)
        grads = backward((x * x).sum(), params=[x, p])
        np.testing.assert_array_equal(grads[p.id], [0.0])
        self.assertIsNone(p.grad)

    def test_non_scalar_loss(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with self.assertRaises(NonScalarLoss):
            backward(x * 2.0)

    def test_shared_node_visited_once(self):
        x = Tensor(3.0, requires_grad=True)
        y = x * 2.0
        loss = y * y + y
        graph = Graph.trace(loss)
        ids = [node.id for node in graph.nodes]
        self.assertEqual(len(ids), len(set(ids)))
        self.assertLess(ids.index(x.id), ids.index(y.id))
        self.assertLess(ids.index(y.id), ids.index(loss.id))
        grads = backward(loss)
        # d/dx (4x^2 + 2x) = 8x + 2
        self.assertAlmostEqual(float(grads[x.id]), 26.0)

    def test_deterministic_gradients(self):
        def run():
            rng = np.random.default_rng(11)
            w = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
            v = Tensor(rng.normal(size=3))
            loss = log_softmax(w @ v)[2] * -1.0
            return backward(loss)[w.id]

        self.assertEqual(run().tobytes(), run().tobytes())

    def test_no_grad_records_nothing(self):
        x = Tensor([1.0], requires_grad=True)
        with no_grad():
            y = x * 3.0
        self.assertFalse(y.requires_grad)
        self.assertTrue(y.is_leaf)


class FiniteDifferenceCheckTests(SimpleTestCase):

    def test_linear_projection_is_exact(self):
        p = Tensor([1.5, -0.75, 2.0], requires_grad=True)
        projection = Tensor([1.0, 2.0, -0.5])
        error = finite_difference_check(lambda: (p * projection).sum(), [p], eps=0.125)
        self.assertLessEqual(error, 1e-12)

    def test_invalid_epsilon(self):
        p = Tensor([1.0], requires_grad=True)
        with self.assertRaises(InvalidEpsilon):
            finite_difference_check(lambda: p.sum(), [p], eps=0.0)

    def test_non_deterministic_function(self):
        p = Tensor([1.0], requires_grad=True)
        calls = []

        def drifting():
            calls.append(1)
            return p.sum() + float(len(calls))

        with self.assertRaises(NonDeterministicFunction):
            finite_difference_check(drifting, [p])


class OpGradientPropertyTests(SimpleTestCase):
    """Every differentiable op against central differences over 100 seeds."""

    def _cases(self, rng):
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        pos = Tensor(np.abs(rng.normal(size=(3, 4))) + 0.5, requires_grad=True)
        m = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        v = Tensor(rng.normal(size=4), requires_grad=True)
        row = Tensor(rng.normal(size=(1, 4)), requires_grad=True)
        weights = Tensor(rng.normal(size=(3, 4)))
        return {
            'add': (lambda: ((a + b) * weights).sum(), [a, b]),
            'broadcast_add': (lambda: ((a + row) * weights).sum(), [a, row]),
            'sub': (lambda: ((a - b) * weights).sum(), [a, b]),
            'mul': (lambda: (a * b).sum(), [a, b]),
            'div': (lambda: (a / pos).sum(), [a, pos]),
            'pow': (lambda: ((a ** 3.0) * weights).sum(), [a]),
            'neg': (lambda: (-(a * weights)).sum(), [a]),
            'matmul_mm': (lambda: ((a @ m) ** 2.0).sum(), [a, m]),
            'matmul_mv': (lambda: ((a @ v) ** 2.0).sum(), [a, v]),
            'matmul_vm': (lambda: ((v @ m) ** 2.0).sum(), [v, m]),
            'exp': (lambda: (a.exp() * weights).sum(), [a]),
            'log': (lambda: (pos.log() * weights).sum(), [pos]),
            'tanh': (lambda: (a.tanh() * weights).sum(), [a]),
            'sigmoid': (lambda: (a.sigmoid() * weights).sum(), [a]),
            'sum_axis': (lambda: (a.sum(axis=1) ** 2.0).sum(), [a]),
            'getitem': (lambda: (a[1] * v).sum() + a[(np.array([0, 2, 0]), np.array([1, 3, 1]))].sum(), [a, v]),
            'reshape': (lambda: (a.reshape(4, 3) @ m.T).sum(), [a, m]),
            'transpose': (lambda: ((a.T @ b) * Tensor(np.eye(4))).sum(), [a, b]),
            'concat': (lambda: (concat([a, b], axis=1) ** 2.0).sum(), [a, b]),
            'stack': (lambda: (stack([v, v * 2.0]) ** 2.0).sum(), [v]),
            'softmax': (lambda: (softmax(a) * weights).sum(), [a]),
            'log_softmax': (lambda: (log_softmax(a) * weights).sum(), [a]),
            'mean': (lambda: (a * b).mean(), [a, b]),
        }

    def test_ops_match_central_differences(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            for name, (fn, params) in self._cases(rng).items():
                with self.subTest(op=name, seed=seed):
                    self.assertLessEqual(finite_difference_check(fn, params, eps=1e-4), 1e-4)

    def test_values_stay_finite(self):
        rng = np.random.default_rng(5)
        for name, (fn, params) in self._cases(rng).items():
            with self.subTest(op=name):
                loss = fn()
                grads = backward(loss, params)
                self.assertTrue(np.isfinite(loss.item()))
                for param in params:
                    self.assertTrue(np.all(np.isfinite(grads[param.id])))
                    self.assertEqual(grads[param.id].shape, param.shape)
