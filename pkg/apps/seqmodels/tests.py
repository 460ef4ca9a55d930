import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from apps.autodiff.exceptions import TokenOutOfVocab
from apps.autodiff.services import finite_difference_check, sequence_nll
from apps.corpus.services import EOS_ID
from apps.seqmodels.exceptions import EmptyResponse, SharedParameters, VocabMismatch
from apps.seqmodels.services import (
    CriticModel,
    DiscriminatorModel,
    GeneratorModel,
    LanguageModel,
    ModelDims,
    assert_disjoint,
    load_checkpoint,
    load_model,
    save_checkpoint,
    with_eos,
)

TINY = ModelDims(vocab_size=8, embed_size=3, hidden_size=4)


class GeneratorTests(SimpleTestCase):

    def test_zero_weights_give_uniform_steps(self):
        model = GeneratorModel(TINY, init='zeros')
        values = model.log_probs([4, 5], [6, 7, EOS_ID]).numpy()
        np.testing.assert_allclose(values, [-math.log(8)] * 3, atol=1e-12)

    def test_sum_matches_sequence_nll(self):
        model = GeneratorModel(TINY, seed=3)
        y = [4, 6, EOS_ID]
        total = model.log_probs([5], y).data.sum()
        nll = sequence_nll(model.stepwise_probs([5], y), y).item()
        self.assertAlmostEqual(total, -nll, delta=1e-10)

    def test_token_out_of_vocab(self):
        model = GeneratorModel(TINY)
        with self.assertRaises(TokenOutOfVocab):
            model.log_probs([4], [9, EOS_ID])
        with self.assertRaises(TokenOutOfVocab):
            model.log_probs([42], [4, EOS_ID])

    def test_empty_context_is_accepted(self):
        model = GeneratorModel(TINY, seed=1)
        values = model.log_probs([], [4, EOS_ID]).numpy()
        self.assertTrue(np.all(np.isfinite(values)))

    def test_step_distribution_is_valid(self):
        state = GeneratorModel(TINY, seed=2).start([4, 5, 6])
        probs = np.exp(state.log_probs.data)
        self.assertAlmostEqual(probs.sum(), 1.0, delta=1e-9)

    def test_alone_or_in_batch(self):
        model = GeneratorModel(TINY, seed=4)
        batch = [([4, 5], [6, EOS_ID]), ([7], [4, 4, EOS_ID]), ([], [5, EOS_ID])]
        together = model.batch_log_probs(batch)
        for (context, y), values in zip(batch, together):
            np.testing.assert_allclose(model.log_probs(context, y).numpy(), values, atol=1e-10)

    def test_nll_gradient_check(self):
        model = GeneratorModel(TINY, seed=5)
        error = finite_difference_check(
            lambda: -(model.log_probs([4, 5], [6, 7, EOS_ID]).sum()), model.parameters(), eps=1e-4,
        )
        self.assertLessEqual(error, 1e-4)

    def test_with_eos(self):
        self.assertEqual(with_eos([4, 5]), [4, 5, EOS_ID])
        self.assertEqual(with_eos([4, EOS_ID]), [4, EOS_ID])


class DiscriminatorTests(SimpleTestCase):

    def test_zero_model_scores_one_half(self):
        model = DiscriminatorModel(TINY, init='zeros')
        for context, response in (([[4]], [5, 6]), ([], [7]), ([[4, 5], [6]], [7, 7, 7])):
            self.assertAlmostEqual(model.score(context, response), 0.5, delta=1e-12)

    def test_probabilities_sum_to_one(self):
        model = DiscriminatorModel(TINY, seed=7)
        probs = model.probabilities([[4, 5]], [6]).data
        self.assertAlmostEqual(probs.sum(), 1.0, delta=1e-12)
        self.assertTrue(0.0 < probs[1] < 1.0)

    def test_empty_response(self):
        with self.assertRaises(EmptyResponse):
            DiscriminatorModel(TINY).score([[4]], [])

    def test_utterance_order_matters(self):
        swapped_equal = 0
        for seed in range(20):
            model = DiscriminatorModel(TINY, seed=seed)
            forward = model.represent([[4, 5], [6, 7]], [5]).data
            swapped = model.represent([[6, 7], [4, 5]], [5]).data
            swapped_equal += int(np.allclose(forward, swapped, atol=1e-12))
        self.assertEqual(swapped_equal, 0)

    def test_loss_gradient_check(self):
        model = DiscriminatorModel(TINY, seed=8)
        error = finite_difference_check(lambda: model.loss([[4, 5]], [6, 7], 1), model.parameters())
        self.assertLessEqual(error, 1e-4)


class CriticTests(SimpleTestCase):

    def test_zero_critic_predicts_zero(self):
        model = CriticModel(TINY, init='zeros')
        self.assertEqual(model.predict([[4]], [5, 6]), 0.0)
        self.assertEqual(model.predict([[4]], []), 0.0)
        self.assertEqual(model.predict([], []), 0.0)

    def test_value_gradient_check(self):
        model = CriticModel(TINY, seed=9)
        error = finite_difference_check(
            lambda: (model.value([[4]], [5, 6]) - 0.7) ** 2, model.parameters(),
        )
        self.assertLessEqual(error, 1e-4)


class LanguageModelTests(SimpleTestCase):

    def test_zero_weights(self):
        model = LanguageModel(TINY, init='zeros')
        self.assertAlmostEqual(model.lm_log_prob([4, 5, EOS_ID]).item(), -3 * math.log(8), delta=1e-12)

    def test_empty_sequence(self):
        self.assertEqual(LanguageModel(TINY, seed=1).lm_log_prob([]).item(), 0.0)

    def test_token_out_of_vocab(self):
        with self.assertRaises(TokenOutOfVocab):
            LanguageModel(TINY).lm_log_prob([100])


class CheckpointTests(SimpleTestCase):

    def test_round_trip_is_byte_identical(self):
        model = GeneratorModel(TINY, seed=11)
        with tempfile.TemporaryDirectory() as tmp:
            first = save_checkpoint(Path(tmp) / 'a.json', model, 'v' * 64, 'c' * 64)
            restored = load_model(first, expected_vocab_hash='v' * 64)
            second = save_checkpoint(Path(tmp) / 'b.json', restored, 'v' * 64, 'c' * 64)
            self.assertEqual(first.read_bytes(), second.read_bytes())
        np.testing.assert_array_equal(
            restored.log_probs([4], [5, EOS_ID]).data, model.log_probs([4], [5, EOS_ID]).data,
        )

    def test_vocab_mismatch(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(Path(tmp) / 'd.json', CriticModel(TINY), 'a' * 64, 'c' * 64)
            with self.assertRaises(VocabMismatch):
                load_checkpoint(path, expected_vocab_hash='b' * 64)

    def test_evaluator_namespace_is_disjoint(self):
        evaluator = DiscriminatorModel(TINY, prefix='evaluator')
        trainer = DiscriminatorModel(TINY)
        assert_disjoint(evaluator.params.names, trainer.params.names)
        with self.assertRaises(SharedParameters):
            assert_disjoint(trainer.params.names, DiscriminatorModel(TINY, seed=3).params.names)
