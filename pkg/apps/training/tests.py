import itertools
import json
import math
import tempfile
from pathlib import Path
from unittest import skipUnless

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase

from apps.autodiff.services import Tensor, finite_difference_check, log_softmax, no_grad, stack
from apps.corpus.services import EOS_ID, grammar, heldout_split, load_corpus, synth_corpus, train_split
from apps.decoding.services import DecodeConfig
from apps.seqmodels.services import CriticModel, DiscriminatorModel, GeneratorModel, ModelDims, with_eos
from apps.training.exceptions import Diverged, InvalidSchedule
from apps.training.services import (
    CONSTANT_ONE,
    GATED,
    METRIC_FIELDS,
    REGS_MC,
    REGS_PARTIAL,
    REINFORCE,
    TF_OFF,
    RewardTrace,
    TrainSchedule,
    adversarial_train,
    build_negatives,
    clip_by_global_norm,
    compute_gradients,
    critic_step,
    discriminator_accuracy,
    global_norm,
    mc_rollout_rewards,
    mix_partial,
    mle_step,
    partial_disc_pairs,
    perplexity,
    policy_gradient_loss,
    pretrain_discriminator,
    pretrain_generator,
    pretrain_language_model,
    regs_step,
    reinforce_step,
    teacher_forcing_step,
)
from apps.training.services.loop import discriminator_updates, generator_updates, iteration_rng

TINY = ModelDims(vocab_size=8, embed_size=3, hidden_size=4)


class ConstantDiscriminator:
    def __init__(self, value):
        self.value = value

    def score(self, context, response):
        return self.value


class ScriptedDiscriminator:
    def __init__(self, scores):
        self.scores = iter(scores)

    def score(self, context, response):
        return next(self.scores)


class ParityDiscriminator:
    """1 for responses of odd length, 0 otherwise."""

    def score(self, context, response):
        return float(len(response) % 2)


class ConstantCritic:
    def __init__(self, value):
        self.value = value

    def predict(self, context, prefix=()):
        return self.value


class TwoTokenPolicy:
    """Tabulated p(y_t | y_t-1) over tokens 4 and 5 for three steps."""

    def __init__(self, seed):
        rng = np.random.default_rng(seed)
        self.logits = {}
        for t in range(3):
            for prev in ((None,) if t == 0 else (4, 5)):
                self.logits[(t, prev)] = Tensor(rng.normal(size=2), requires_grad=True, name=f"toy.{t}.{prev}")

    def parameters(self):
        return list(self.logits.values())

    def log_probs(self, context, y):
        picked, prev = [], None
        for t, token in enumerate(y):
            picked.append(log_softmax(self.logits[(t, prev)])[token - 4])
            prev = token
        return stack(picked)

    def probability(self, y):
        with no_grad():
            return math.exp(float(self.log_probs([], y).data.sum())) if y else 1.0


SEQUENCES = list(itertools.product((4, 5), repeat=3))


def _corpus(n=24, seed=0):
    with tempfile.TemporaryDirectory() as tmp:
        path = synth_corpus(seed, n, Path(tmp) / 'corpus.tsv')
        dialogues, vocab = load_corpus(path, heldout_fraction=0.25)
    return dialogues, vocab


def _dims(vocab):
    return ModelDims(vocab_size=len(vocab), embed_size=4, hidden_size=6)


def _states_equal(first, second):
    return all(np.array_equal(first[name], second[name]) for name in first)


class OptimTests(SimpleTestCase):

    def test_clip_rescales_to_max_norm(self):
        grads = {1: np.array([3.0, 4.0])}
        clipped = clip_by_global_norm(grads, 1.0)
        self.assertAlmostEqual(global_norm(clipped.values()), 1.0, delta=1e-12)
        np.testing.assert_array_equal(grads[1], [3.0, 4.0])

    def test_small_gradients_untouched(self):
        grads = {1: np.array([0.3, 0.4])}
        np.testing.assert_array_equal(clip_by_global_norm(grads, 1.0)[1], grads[1])


class RewardTests(SimpleTestCase):

    def setUp(self):
        self.generator = GeneratorModel(TINY, seed=1)
        self.context = ((4, 5),)

    def test_constant_discriminator_gives_constant_rewards(self):
        rewards = mc_rollout_rewards(self.generator, ConstantDiscriminator(0.7), self.context, [4, 6, 5, EOS_ID], rollouts=5)
        np.testing.assert_allclose(rewards, [0.7] * 4, atol=1e-12)

    def test_reward_is_mean_of_rollout_scores(self):
        scripted = ScriptedDiscriminator([0.2, 0.4, 0.6, 0.8, 1.0, 0.9])
        rewards = mc_rollout_rewards(self.generator, scripted, self.context, [4, EOS_ID], rollouts=5, workers=1)
        np.testing.assert_allclose(rewards, [0.6, 0.9], atol=1e-12)

    def test_rollouts_do_not_depend_on_worker_count(self):
        generated = [4, 6, 5, EOS_ID]
        serial = mc_rollout_rewards(self.generator, ParityDiscriminator(), self.context, generated,
                                    rollouts=4, seed=3, workers=1, max_len=6)
        parallel = mc_rollout_rewards(self.generator, ParityDiscriminator(), self.context, generated,
                                      rollouts=4, seed=3, workers=3, max_len=6)
        self.assertEqual(serial, parallel)

    def test_variance_scales_with_one_over_n(self):
        variances = {}
        for rollouts in (1, 5, 25):
            first = [
                mc_rollout_rewards(self.generator, ParityDiscriminator(), self.context, [4, EOS_ID],
                                   rollouts=rollouts, seed=seed, max_len=6)[0]
                for seed in range(200)
            ]
            variances[rollouts] = np.var(first, ddof=1)
        for rollouts in (5, 25):
            ratio = variances[1] / variances[rollouts]
            self.assertGreater(ratio, rollouts / 2)
            self.assertLess(ratio, rollouts * 2)

    def test_rollouts_must_be_positive(self):
        with self.assertRaises(ValueError):
            mc_rollout_rewards(self.generator, ConstantDiscriminator(0.5), self.context, [4, EOS_ID], rollouts=0)


class PartialPairTests(SimpleTestCase):

    def test_returns_one_prefix_of_each(self):
        positive, negative = partial_disc_pairs([4, 5, 6], [7, 4], seed=0)
        self.assertIn(positive, ([4], [4, 5], [4, 5, 6]))
        self.assertIn(negative, ([7], [7, 4]))

    def test_single_token_is_its_own_prefix(self):
        self.assertEqual(partial_disc_pairs([4], [5], seed=1), ([4], [5]))

    def test_uniform_over_prefixes(self):
        rng = np.random.default_rng(0)
        counts = np.zeros(4, dtype=int)
        for _ in range(10_000):
            positive, _ = partial_disc_pairs([4, 5, 6, 7], [4], rng)
            counts[len(positive) - 1] += 1
        for count in counts:
            self.assertLess(abs(count - 2500), 150)

    def test_empty_sequence_rejected(self):
        with self.assertRaises(ValueError):
            partial_disc_pairs([], [4], seed=0)


class ScoreFunctionOracleTests(SimpleTestCase):
    """Expected sampled gradients against the exact gradient of expected reward."""

    def setUp(self):
        self.policy = TwoTokenPolicy(seed=0)
        self.params = self.policy.parameters()
        rng = np.random.default_rng(1)
        self.reward = {y: float(rng.uniform(0.05, 0.95)) for y in SEQUENCES}

    def _objective(self):
        total = None
        for y in SEQUENCES:
            term = self.policy.log_probs([], y).sum().exp() * self.reward[y]
            total = term if total is None else total + term
        return total

    def _expected_ascent(self, advantages):
        expected = {p.id: np.zeros_like(p.data) for p in self.params}
        for y in SEQUENCES:
            probability = self.policy.probability(y)
            grads = compute_gradients(policy_gradient_loss(self.policy, [([], y, advantages(y))]), self.params)
            for param in self.params:
                expected[param.id] -= probability * grads[param.id]
        return expected

    def _assert_matches_exact(self, expected):
        exact = compute_gradients(self._objective(), self.params)
        for param in self.params:
            np.testing.assert_allclose(expected[param.id], exact[param.id], rtol=1e-6, atol=1e-12)
        self.assertLessEqual(finite_difference_check(self._objective, self.params), 1e-6)

    def test_reinforce_estimator_is_unbiased(self):
        baseline = 0.3
        self._assert_matches_exact(self._expected_ascent(lambda y: np.full(3, self.reward[y] - baseline)))

    def test_per_step_rewards_estimator_is_unbiased(self):
        def q_value(prefix):
            rest = 3 - len(prefix)
            total = 0.0
            for tail in itertools.product((4, 5), repeat=rest):
                y = tuple(prefix) + tail
                total += self.policy.probability(y) / self.policy.probability(tuple(prefix)) * self.reward[y]
            return total

        self._assert_matches_exact(
            self._expected_ascent(lambda y: np.array([q_value(y[:t]) for t in range(1, 4)]))
        )


class PolicyStepTests(SimpleTestCase):

    def setUp(self):
        self.dialogues, self.vocab = _corpus()
        self.dims = _dims(self.vocab)
        self.batch = train_split(self.dialogues)[:3]

    def test_reinforce_gradient_is_advantage_times_mle_gradient(self):
        generator = GeneratorModel(self.dims, seed=2)
        result = reinforce_step(generator, ConstantDiscriminator(0.9), ConstantCritic(0.4),
                                self.batch[:1], seed=5, max_len=6, apply=False)
        trace = result.traces[0]
        self.assertEqual(trace.mode, REINFORCE)
        mle = compute_gradients(
            policy_gradient_loss(generator, [(trace.context_tokens, list(trace.generated), np.ones(len(trace.generated)))]),
            generator.parameters(),
        )
        for param in generator.parameters():
            np.testing.assert_allclose(result.gradients[param.name], 0.5 * mle[param.id], rtol=1e-9, atol=1e-15)

    def test_zero_advantage_leaves_parameters(self):
        generator = GeneratorModel(self.dims, seed=3)
        before = generator.state_dict()
        reinforce_step(generator, ConstantDiscriminator(0.7), ConstantCritic(0.7), self.batch, seed=1, max_len=6)
        self.assertTrue(_states_equal(before, generator.state_dict()))

    def test_constant_step_rewards_reduce_to_reinforce(self):
        base = GeneratorModel(self.dims, seed=4)
        first, second = base.clone(), base.clone()
        reinforce_step(first, ConstantDiscriminator(0.7), ConstantCritic(0.2), self.batch, seed=8, max_len=6)
        result = regs_step(second, ConstantDiscriminator(0.7), ConstantCritic(0.2), self.batch, seed=8,
                           mode='PARTIAL', max_len=6)
        self.assertEqual(result.traces[0].mode, REGS_PARTIAL)
        for name, values in first.state_dict().items():
            np.testing.assert_allclose(second.state_dict()[name], values, rtol=0, atol=1e-10)

    def test_regs_mc_rewards_one_per_token(self):
        generator = GeneratorModel(self.dims, seed=5)
        result = regs_step(generator, ConstantDiscriminator(0.6), ConstantCritic(0.1), self.batch[:2], seed=2,
                           mode=REGS_MC, rollouts=2, max_len=5, apply=False)
        for trace in result.traces:
            self.assertEqual(len(trace.rewards), len(trace.generated))
            np.testing.assert_allclose(trace.advantages, 0.5, atol=1e-12)

    def test_regs_rejects_unknown_mode(self):
        with self.assertRaises(ValueError):
            regs_step(GeneratorModel(self.dims), ConstantDiscriminator(0.5), ConstantCritic(0.5), self.batch, 0, mode='BOTH')

    def test_constant_teacher_forcing_is_an_mle_step(self):
        base = GeneratorModel(self.dims, seed=6)
        first, second = base.clone(), base.clone()
        mle_step(first, self.batch, lr=0.01)
        teacher_forcing_step(second, None, None, self.batch, CONSTANT_ONE, lr=0.01)
        for name, values in first.state_dict().items():
            np.testing.assert_array_equal(second.state_dict()[name], values)

    def test_closed_gate_changes_nothing(self):
        generator = GeneratorModel(self.dims, seed=7)
        before = generator.state_dict()
        result = teacher_forcing_step(generator, ConstantDiscriminator(0.6), ConstantCritic(0.7), self.batch, GATED)
        self.assertFalse(result.applied)
        self.assertTrue(_states_equal(before, generator.state_dict()))

    def test_open_gate_scales_mle_gradient(self):
        generator = GeneratorModel(self.dims, seed=8)
        gated = teacher_forcing_step(generator, ConstantDiscriminator(0.8), ConstantCritic(0.7), self.batch, GATED, apply=False)
        mle = mle_step(generator, self.batch, apply=False)
        for name, values in mle.gradients.items():
            np.testing.assert_allclose(gated.gradients[name], 0.1 * values, rtol=1e-9, atol=1e-15)

    def test_teacher_forcing_off_is_a_no_op(self):
        self.assertFalse(teacher_forcing_step(GeneratorModel(self.dims), None, None, self.batch, TF_OFF).applied)


class CriticStepTests(SimpleTestCase):

    def setUp(self):
        self.traces = [
            RewardTrace(context=((4, 5),), generated=(6, 7, EOS_ID), rewards=(0.7,) * 3, baselines=(0.0,) * 3, mode=REINFORCE),
            RewardTrace(context=((5,),), generated=(4, EOS_ID), rewards=(0.7, 0.7), baselines=(0.0, 0.0), mode=REGS_MC),
        ]

    def test_regression_to_constant_reward(self):
        critic = CriticModel(TINY, seed=1)
        history = [critic_step(critic, self.traces).mse for _ in range(500)]
        self.assertTrue(all(mse >= 0.0 for mse in history))
        self.assertLessEqual(history[-1], 0.01)

    def test_no_gradient_at_the_true_reward(self):
        critic = CriticModel(TINY, init='zeros')
        critic.b_out.data[0] = 0.7
        result = critic_step(critic, self.traces, apply=False)
        self.assertLess(result.grad_norm, 1e-8)
        self.assertAlmostEqual(result.mse, 0.0, delta=1e-20)

    def test_heldout_mse_decreases_on_synthetic_dialogues(self):
        dialogues, vocab = _corpus(n=40, seed=2)

        def traces(items):
            result = []
            for d in items:
                generated = tuple(with_eos(d.response))
                result.append(RewardTrace(context=d.context, generated=generated, rewards=(0.7,) * len(generated),
                                          baselines=(0.0,) * len(generated), mode=REINFORCE))
            return result

        train, heldout = traces(train_split(dialogues)), traces(heldout_split(dialogues))
        critic = CriticModel(_dims(vocab), seed=3)
        history = [critic_step(critic, heldout, apply=False).mse]
        for _ in range(10):
            critic_step(critic, train)
            history.append(critic_step(critic, heldout, apply=False).mse)
        for previous, current in zip(history, history[1:]):
            self.assertLessEqual(current, previous + 1e-9)
        self.assertLess(history[-1], history[0])

    def test_trace_lengths_must_match(self):
        with self.assertRaises(ValueError):
            RewardTrace(context=(), generated=(4,), rewards=(0.5, 0.5), baselines=(0.1,), mode=REINFORCE)


class PretrainTests(SimpleTestCase):

    def setUp(self):
        self.dialogues, self.vocab = _corpus(n=24)
        self.dims = _dims(self.vocab)
        self.train = train_split(self.dialogues)
        self.heldout = heldout_split(self.dialogues)

    def test_perplexity_improves(self):
        result = pretrain_generator(self.train, self.vocab, self.dims, seed=1, epochs=2, batch_size=8, heldout=self.heldout)
        self.assertEqual(len(result.perplexities), 3)
        self.assertLess(result.final_perplexity, result.initial_perplexity)

    def test_deterministic(self):
        first = pretrain_generator(self.train, self.vocab, self.dims, seed=4, epochs=1, batch_size=8)
        second = pretrain_generator(self.train, self.vocab, self.dims, seed=4, epochs=1, batch_size=8)
        self.assertTrue(_states_equal(first.model.state_dict(), second.model.state_dict()))

    def test_backward_model_uses_its_own_namespace(self):
        result = pretrain_generator(self.train, self.vocab, self.dims, seed=1, epochs=1, batch_size=8, backward=True)
        self.assertTrue(all(name.startswith('backward.') for name in result.model.state_dict()))

    def test_nan_learning_rate_diverges(self):
        with self.assertRaises(Diverged) as caught:
            pretrain_generator(self.train, self.vocab, self.dims, seed=1, epochs=1, batch_size=4,
                               lr=float('nan'), tfidf_cap=None)
        self.assertGreaterEqual(caught.exception.step, 2)

    def test_negative_composition(self):
        generator = GeneratorModel(self.dims, seed=2)
        backward = GeneratorModel(self.dims, seed=3, prefix='backward')
        negatives = build_negatives(generator, self.train[:5], backward, DecodeConfig(beam_width=2, max_len=5), seed=1,
                                    stop_ids=self.vocab.stop_ids)
        sources = [n.source for n in negatives]
        self.assertEqual(sources.count('beam_mmi'), 3)
        self.assertEqual(sources.count('sample'), 2)
        self.assertTrue(all(n.response for n in negatives))

    def test_negatives_without_backward_generator_warn(self):
        generator = GeneratorModel(self.dims, seed=2)
        with self.assertLogs('apps.training.services.pretrain', level='WARNING') as logs:
            negatives = build_negatives(generator, self.train[:3], None, DecodeConfig(beam_width=2, max_len=5),
                                        stop_ids=self.vocab.stop_ids)
        self.assertEqual(len(negatives), 3)
        self.assertIn('No backward generator', logs.output[0])

    def test_partial_mix_halves_full_sequences(self):
        positives = [(((4,),), (4, 5, 6, 7))] * 4
        negatives = [(((4,),), (5, 6, 7, 4))] * 4
        mixed_pos, mixed_neg = mix_partial(positives, negatives, np.random.default_rng(0))
        self.assertEqual(mixed_pos[0], positives[0])
        self.assertEqual(mixed_neg[2], negatives[2])
        self.assertEqual(mixed_pos[1][1], positives[1][1][:len(mixed_pos[1][1])])

    def test_discriminator_pretraining_runs(self):
        generator = GeneratorModel(self.dims, seed=2)
        result = pretrain_discriminator(
            self.train[:6], generator, self.dims, seed=1, epochs=2, batch_size=3,
            config=DecodeConfig(beam_width=2, max_len=5), heldout=self.heldout[:4], convergence_tol=-1.0,
            stop_ids=self.vocab.stop_ids,
        )
        self.assertEqual(len(result.losses), 4)
        self.assertTrue(all(math.isfinite(loss) for loss in result.losses))
        self.assertGreaterEqual(result.heldout_accuracy, 0.0)
        self.assertLessEqual(result.heldout_accuracy, 1.0)

    def test_discriminator_stops_once_heldout_accuracy_converges(self):
        generator = GeneratorModel(self.dims, seed=2)
        result = pretrain_discriminator(
            self.train[:6], generator, self.dims, seed=1, epochs=5, batch_size=3,
            config=DecodeConfig(beam_width=2, max_len=5), heldout=self.heldout[:4], convergence_tol=1.0,
            stop_ids=self.vocab.stop_ids,
        )
        self.assertEqual(len(result.heldout_accuracies), 2)
        self.assertEqual(len(result.losses), 4)
        self.assertEqual(result.heldout_accuracy, max(result.heldout_accuracies))

    def test_discriminator_keeps_its_best_epoch(self):
        generator = GeneratorModel(self.dims, seed=2)
        heldout = self.heldout[:4]
        result = pretrain_discriminator(
            self.train[:6], generator, self.dims, seed=1, epochs=4, batch_size=3,
            config=DecodeConfig(beam_width=2, max_len=5), heldout=heldout, stop_ids=self.vocab.stop_ids,
        )
        self.assertLessEqual(len(result.heldout_accuracies), 4)
        self.assertEqual(result.heldout_accuracy, max(result.heldout_accuracies))
        # held-out negatives are drawn from seed + len(dialogues)
        held_negatives = [
            (n.context, n.response)
            for n in build_negatives(generator, heldout, None, DecodeConfig(beam_width=2, max_len=5), seed=7,
                                     stop_ids=self.vocab.stop_ids)
        ]
        positives = [(d.context, d.response) for d in heldout]
        self.assertEqual(discriminator_accuracy(result.model, positives, held_negatives), result.heldout_accuracy)


@skipUnless(settings.LAB_TRAINING_ORACLES, 'set LAB_TRAINING_ORACLES=true to train on the full synthetic corpus')
class TrainedModelQualityTests(SimpleTestCase):
    """Quality bars for models pretrained on 5k synthetic dialogues."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        with tempfile.TemporaryDirectory() as tmp:
            path = synth_corpus(11, 5000, Path(tmp) / 'corpus.tsv')
            dialogues, cls.vocab = load_corpus(path, heldout_fraction=0.1)
        cls.train, cls.heldout = train_split(dialogues), heldout_split(dialogues)
        cls.dims = ModelDims(vocab_size=len(cls.vocab), embed_size=16, hidden_size=32)
        cls.generator = pretrain_generator(cls.train, cls.vocab, cls.dims, seed=1, tfidf_cap=None,
                                           heldout=cls.heldout).model
        cls.lm = pretrain_language_model(cls.train, cls.dims, seed=2).model

    def _shuffled_pairs(self, count=200):
        rng = np.random.default_rng(0)
        pairs = []
        for dialogue in self.heldout:
            shuffled = tuple(int(t) for t in rng.permutation(dialogue.response))
            if shuffled != tuple(dialogue.response):
                pairs.append((dialogue, shuffled))
            if len(pairs) == count:
                break
        return pairs

    def test_generator_perplexity_near_grammar_floor(self):
        self.assertLessEqual(perplexity(self.generator, self.heldout), 1.5 * grammar.perplexity_floor())

    def test_discriminator_separates_generated_responses(self):
        result = pretrain_discriminator(
            self.train[:1000], self.generator, self.dims, seed=3, epochs=5,
            config=DecodeConfig(beam_width=3, max_len=12), heldout=self.heldout[:200],
            stop_ids=self.vocab.stop_ids,
        )
        self.assertGreaterEqual(result.heldout_accuracy, 0.9)

    def test_generator_prefers_in_grammar_responses(self):
        human, shuffled = [], []
        with no_grad():
            for dialogue, permuted in self._shuffled_pairs():
                human.append(self.generator.sequence_log_prob(dialogue.context_tokens, with_eos(dialogue.response)))
                shuffled.append(self.generator.sequence_log_prob(dialogue.context_tokens, with_eos(permuted)))
        self.assertGreater(np.mean(human), np.mean(shuffled))

    def test_language_model_prefers_in_grammar_responses(self):
        human, shuffled = [], []
        with no_grad():
            for dialogue, permuted in self._shuffled_pairs():
                human.append(float(self.lm.log_probs(with_eos(dialogue.response)).data.sum()))
                shuffled.append(float(self.lm.log_probs(with_eos(permuted)).data.sum()))
        self.assertGreater(np.mean(human), np.mean(shuffled))


class AdversarialLoopTests(SimpleTestCase):

    def setUp(self):
        self.dialogues, self.vocab = _corpus(n=16)
        self.dims = _dims(self.vocab)
        self.train = train_split(self.dialogues)
        self.heldout = heldout_split(self.dialogues)
        self.schedule = TrainSchedule(iterations=2, batch_size=2, seed=3, max_len=5, checkpoint_every=1)

    def _models(self):
        return (
            GeneratorModel(self.dims, seed=1),
            DiscriminatorModel(self.dims, seed=2),
            CriticModel(self.dims, seed=3),
        )

    def test_schedule_defaults_and_validation(self):
        schedule = TrainSchedule()
        self.assertEqual((schedule.d_steps, schedule.g_steps), (5, 1))
        for kwargs in ({'d_steps': 0}, {'g_steps': 0}, {'teacher_forcing': 'ALWAYS'}, {'mode': 'PPO'}):
            with self.assertRaises(InvalidSchedule):
                TrainSchedule(**kwargs)

    def test_updates_per_iteration_and_metrics_log(self):
        with tempfile.TemporaryDirectory() as tmp:
            metrics_path = Path(tmp) / 'metrics.jsonl'
            result = adversarial_train(self.train, *self._models(), self.schedule, config_hash='abc',
                                       heldout=self.heldout, metrics_path=metrics_path,
                                       checkpoint_dir=Path(tmp) / 'checkpoints')
            records = [json.loads(line) for line in metrics_path.read_text(encoding='utf-8').splitlines()]
            self.assertEqual(len(result.checkpoints), 6)
        self.assertEqual([m.d_updates for m in result.metrics], [5, 5])
        self.assertEqual([m.g_updates for m in result.metrics], [1, 1])
        self.assertEqual([r['iteration'] for r in records], [1, 2])
        for record in records:
            self.assertTrue(set(METRIC_FIELDS) <= set(record))
            self.assertEqual(record['config_hash'], 'abc')

    def test_identical_seeds_give_identical_metrics(self):
        def run():
            metrics = adversarial_train(self.train, *self._models(), self.schedule, heldout=self.heldout).metrics
            return [{k: v for k, v in m.to_record().items() if k != 'wall_ms'} for m in metrics]
        self.assertEqual(run(), run())

    def test_updates_touch_only_their_own_model(self):
        generator, discriminator, critic = self._models()
        before = generator.state_dict()
        discriminator_updates(generator, discriminator, self.train, self.schedule, iteration_rng(0, 1))
        self.assertTrue(_states_equal(before, generator.state_dict()))

        before = discriminator.state_dict()
        generator_updates(generator, discriminator, critic, self.train, self.schedule, iteration_rng(0, 2))
        self.assertTrue(_states_equal(before, discriminator.state_dict()))

    def test_partial_mode_iteration(self):
        schedule = TrainSchedule(iterations=1, batch_size=2, seed=1, max_len=5, mode=REGS_PARTIAL, d_steps=1)
        result = adversarial_train(self.train, *self._models(), schedule, heldout=self.heldout)
        self.assertEqual(len(result.metrics), 1)
        self.assertTrue(math.isfinite(result.metrics[0].perplexity))

    def test_divergence_restores_last_good_state(self):
        generator, discriminator, critic = self._models()
        before = generator.state_dict()
        schedule = TrainSchedule(iterations=3, batch_size=2, seed=1, max_len=5, d_steps=1, rl_lr=float('nan'))
        with self.assertRaises(Diverged) as caught:
            adversarial_train(self.train, generator, discriminator, critic, schedule, heldout=self.heldout)
        self.assertEqual(caught.exception.step, 1)
        self.assertTrue(_states_equal(before, generator.state_dict()))
        self.assertTrue(_states_equal(before, caught.exception.last_good['generator']))

    def test_resume_appends_to_metrics(self):
        with tempfile.TemporaryDirectory() as tmp:
            metrics_path = Path(tmp) / 'metrics.jsonl'
            models = self._models()
            schedule = TrainSchedule(iterations=1, batch_size=2, seed=3, max_len=5, d_steps=1)
            adversarial_train(self.train, *models, schedule, metrics_path=metrics_path)
            adversarial_train(self.train, *models, schedule, metrics_path=metrics_path, start_iteration=1)
            iterations = [json.loads(line)['iteration'] for line in metrics_path.read_text(encoding='utf-8').splitlines()]
        self.assertEqual(iterations, [1, 2])

    def test_perplexity_helper_is_finite(self):
        self.assertTrue(math.isfinite(perplexity(GeneratorModel(self.dims), self.heldout)))
