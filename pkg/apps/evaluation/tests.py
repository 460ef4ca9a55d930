import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from apps.corpus.services import Dialogue, grammar, load_corpus, synth_corpus
from apps.decoding.services import DecodeConfig, decode_contexts
from apps.evaluation.exceptions import (
    DegenerateTrainingSet,
    EvaluationError,
    InvalidEvaluatorSpec,
    MissingMachineOutputs,
    NoSuccessorAvailable,
)
from apps.evaluation.services import (
    COMBINED_LINEAR,
    CONCAT_NEURAL,
    GOLD_ADVER_SUC,
    HIER_NEURAL,
    HUMAN_VS_HUMAN,
    HUMAN_VS_NEXT,
    HUMAN_VS_RANDOM,
    MACHINE_VS_MACHINE,
    SCENARIOS,
    UNIGRAM_LINEAR,
    ConstantEvaluator,
    DecodingSystem,
    EvalReport,
    Evaluator,
    EvaluatorSpec,
    EvaluatorStudy,
    adver_suc,
    adver_suc_from_accuracy,
    balanced_accuracy,
    build_scenario,
    concatenated,
    decode_benchmark,
    ere,
    ere_from_measurements,
    evaluator_factory,
    machine_vs_random,
    read_metrics_csv,
    read_report,
    scenario_from_flag,
    split_episodes,
    train_evaluator,
    write_metrics_csv,
    write_report,
)
from apps.seqmodels.exceptions import SharedParameters
from apps.seqmodels.services import (
    EVALUATOR_BACKWARD_PREFIX,
    EVALUATOR_GENERATOR_PREFIX,
    EVALUATOR_PREFIX,
    DiscriminatorModel,
    GeneratorModel,
    ModelDims,
    assert_disjoint,
)


def _corpus(n=40, seed=0):
    with tempfile.TemporaryDirectory() as tmp:
        path = synth_corpus(seed, n, Path(tmp) / 'corpus.tsv')
        return load_corpus(path)


def _machine(dialogues):
    return [(d.context, tuple(reversed(d.response))) for d in dialogues]


def _constant_factory(positives, negatives, seed):
    return ConstantEvaluator()


class TopicAgreementEvaluator(Evaluator):
    """Labels an episode human when the response keeps the latest context topic."""

    def __init__(self, vocab):
        self.vocab = vocab

    def probability(self, context, response) -> float:
        context_topic = grammar.topic_of(self.vocab.decode(context[-1]))
        return 1.0 if grammar.topic_of(self.vocab.decode(response)) == context_topic else 0.0


class MetricTests(SimpleTestCase):

    def test_adver_suc_from_accuracy(self):
        self.assertAlmostEqual(adver_suc_from_accuracy(0.963), 0.037, delta=1e-12)
        self.assertEqual(adver_suc_from_accuracy(0.5), 0.5)
        self.assertEqual(adver_suc_from_accuracy(1.0), 0.0)
        with self.assertRaises(EvaluationError):
            adver_suc_from_accuracy(1.2)

    def test_ere_arithmetic(self):
        gold_match = dict(zip(SCENARIOS, (0.5, 0.5, 0.0, 0.0)))
        self.assertEqual(ere_from_measurements(gold_match, GOLD_ADVER_SUC)[0], 0.0)
        measured = dict(zip(SCENARIOS, (0.4, 0.5, 0.1, 0.1)))
        value, deviations = ere_from_measurements(measured, GOLD_ADVER_SUC)
        self.assertAlmostEqual(value, 0.075, delta=1e-12)
        self.assertAlmostEqual(deviations[HUMAN_VS_HUMAN], 0.1, delta=1e-12)

    def test_adver_suc_complements_balanced_accuracy(self):
        dialogues, _ = _corpus(n=12)
        positives = [(d.context, d.response) for d in dialogues[:5]]
        negatives = _machine(dialogues[5:])
        evaluator = ConstantEvaluator()
        total = adver_suc(evaluator, positives, negatives) + balanced_accuracy(evaluator, positives, negatives)
        self.assertEqual(total, 1.0)

    def test_constant_evaluator_scores_quarter_ere(self):
        dialogues, _ = _corpus()
        result = ere(_constant_factory, dialogues, _machine(dialogues), seed=3)
        self.assertEqual(result.adver_suc, {kind: 0.5 for kind in SCENARIOS})
        self.assertEqual(result.ere, 0.25)


class ScenarioTests(SimpleTestCase):

    def setUp(self):
        self.dialogues, self.vocab = _corpus()

    def test_human_vs_human_is_disjoint_and_balanced(self):
        positives, negatives = build_scenario(HUMAN_VS_HUMAN, self.dialogues, seed=1)
        self.assertFalse(set(positives) & set(negatives))
        self.assertLessEqual(abs(len(positives) - len(negatives)), 1)

    def test_random_negative_never_repeats_true_response(self):
        positives, negatives = build_scenario(HUMAN_VS_RANDOM, self.dialogues, seed=2)
        self.assertEqual(len(positives), len(negatives))
        for (context, response), (negative_context, negative) in zip(positives, negatives):
            self.assertEqual(context, negative_context)
            self.assertNotEqual(tuple(response), tuple(negative))

    def test_next_uses_following_utterance(self):
        u1, u2, u3 = (4, 5), (6, 7), (8, 9)
        dialogues = [Dialogue(context=(u1,), response=u2, successor=u3), Dialogue(context=(u2,), response=u3)]
        positives, negatives = build_scenario(HUMAN_VS_NEXT, dialogues)
        self.assertEqual(positives, [((u1,), u2)])
        self.assertEqual(negatives, [((u1,), u3)])

    def test_next_without_successors(self):
        with self.assertRaises(NoSuccessorAvailable):
            build_scenario(HUMAN_VS_NEXT, [Dialogue(context=((4,),), response=(5,))])

    def test_machine_scenario_needs_outputs(self):
        with self.assertRaises(MissingMachineOutputs):
            build_scenario(MACHINE_VS_MACHINE, self.dialogues, machine_outputs=[])

    def test_split_keeps_test_episodes(self):
        positives, negatives = build_scenario(HUMAN_VS_RANDOM, self.dialogues, seed=0)
        split = split_episodes(positives, negatives, seed=0)
        self.assertEqual(len(split.train_positives), round(0.7 * len(positives)))
        self.assertTrue(split.test_positives and split.test_negatives)

    def test_scenario_flag(self):
        self.assertEqual(scenario_from_flag('human-vs-random'), HUMAN_VS_RANDOM)
        with self.assertRaises(EvaluationError):
            scenario_from_flag('human-vs-robot')

    def test_single_scenario_ere(self):
        result = ere(_constant_factory, self.dialogues, None, seed=0, scenarios=(HUMAN_VS_RANDOM,))
        self.assertEqual(set(result.adver_suc), {HUMAN_VS_RANDOM})
        self.assertEqual(result.ere, 0.5)

    def test_human_vs_human_stays_at_chance(self):
        dialogues, vocab = _corpus(n=2000, seed=5)
        dims = ModelDims(vocab_size=len(vocab), embed_size=4, hidden_size=6)
        factory = evaluator_factory(EvaluatorSpec.for_kind(UNIGRAM_LINEAR), dims)
        accuracies = [
            1.0 - ere(factory, dialogues, None, seed=seed, scenarios=(HUMAN_VS_HUMAN,)).adver_suc[HUMAN_VS_HUMAN]
            for seed in range(5)
        ]
        self.assertGreaterEqual(float(np.mean(accuracies)), 0.45)
        self.assertLessEqual(float(np.mean(accuracies)), 0.55)

    def test_random_pairing_is_bounded_by_topic_agreement(self):
        # Random negatives are real responses, so only topic agreement with
        # the context separates them; the topic is kept with probability 0.7.
        dialogues, vocab = _corpus(n=600, seed=6)
        positives, negatives = build_scenario(HUMAN_VS_RANDOM, dialogues, seed=3)
        accuracy = balanced_accuracy(TopicAgreementEvaluator(vocab), positives, negatives)
        self.assertGreaterEqual(accuracy, 0.70)
        self.assertLessEqual(accuracy, 0.84)
        constant = balanced_accuracy(ConstantEvaluator(), positives, negatives)
        self.assertEqual(constant, 0.5)


class EvaluatorTests(SimpleTestCase):

    def setUp(self):
        self.dialogues, self.vocab = _corpus(n=24)
        self.dims = ModelDims(vocab_size=len(self.vocab), embed_size=4, hidden_size=6)
        self.positives = [(d.context, d.response) for d in self.dialogues[:12]]
        self.negatives = _machine(self.dialogues[12:])

    def test_combined_spec_needs_every_feature(self):
        with self.assertRaises(InvalidEvaluatorSpec):
            EvaluatorSpec(COMBINED_LINEAR, unigram=True)
        spec = EvaluatorSpec.for_kind(COMBINED_LINEAR)
        self.assertTrue(spec.neural and spec.forward_likelihood and spec.backward_likelihood)

    def test_single_class_is_degenerate(self):
        with self.assertRaises(DegenerateTrainingSet):
            train_evaluator(EvaluatorSpec.for_kind(UNIGRAM_LINEAR), self.positives, [], self.dims)

    def test_same_seed_same_parameters(self):
        for kind in (HIER_NEURAL, CONCAT_NEURAL):
            first = train_evaluator(EvaluatorSpec.for_kind(kind), self.positives, self.negatives, self.dims, seed=2, epochs=1)
            second = train_evaluator(EvaluatorSpec.for_kind(kind), self.positives, self.negatives, self.dims, seed=2, epochs=1)
            for name, values in first.model.state_dict().items():
                np.testing.assert_array_equal(second.model.state_dict()[name], values)
        first = train_evaluator(EvaluatorSpec.for_kind(UNIGRAM_LINEAR), self.positives, self.negatives, self.dims, seed=2)
        second = train_evaluator(EvaluatorSpec.for_kind(UNIGRAM_LINEAR), self.positives, self.negatives, self.dims, seed=2)
        np.testing.assert_array_equal(first.weights, second.weights)

    def test_unigram_evaluator_separates_training_classes(self):
        positives = [(d.context, d.response) for d in self.dialogues]
        negatives = [(d.context, (3, 3, 3)) for d in self.dialogues]
        evaluator = train_evaluator(EvaluatorSpec.for_kind(UNIGRAM_LINEAR), positives, negatives, self.dims, seed=0)
        self.assertGreaterEqual(balanced_accuracy(evaluator, positives, negatives), 0.95)

    def test_neural_evaluators_use_their_own_namespace(self):
        evaluator = train_evaluator(EvaluatorSpec.for_kind(HIER_NEURAL), self.positives, self.negatives, self.dims, epochs=1)
        names = evaluator.model.state_dict()
        self.assertTrue(all(name.startswith(f"{EVALUATOR_PREFIX}.") for name in names))
        assert_disjoint(names, GeneratorModel(self.dims).state_dict())

    def test_combined_linear_needs_generators(self):
        spec = EvaluatorSpec.for_kind(COMBINED_LINEAR)
        with self.assertRaises(EvaluationError):
            train_evaluator(spec, self.positives, self.negatives, self.dims, epochs=1)
        forward = GeneratorModel(self.dims, seed=1, prefix=EVALUATOR_GENERATOR_PREFIX)
        backward = GeneratorModel(self.dims, seed=2, prefix=EVALUATOR_BACKWARD_PREFIX)
        evaluator = train_evaluator(spec, self.positives, self.negatives, self.dims, forward=forward,
                                    backward=backward, epochs=1)
        probability = evaluator.probability(*self.positives[0])
        self.assertGreaterEqual(probability, 0.0)
        self.assertLessEqual(probability, 1.0)
        self.assertTrue(set(forward.params.names) <= evaluator.parameter_names)

    def test_combined_linear_rejects_trainer_generators(self):
        spec = EvaluatorSpec.for_kind(COMBINED_LINEAR)
        trainer_forward = GeneratorModel(self.dims, seed=1)
        backward = GeneratorModel(self.dims, seed=2, prefix=EVALUATOR_BACKWARD_PREFIX)
        with self.assertRaises(EvaluationError):
            train_evaluator(spec, self.positives, self.negatives, self.dims, forward=trainer_forward,
                            backward=backward, epochs=1)
        trainer_backward = GeneratorModel(self.dims, seed=2, prefix='backward')
        forward = GeneratorModel(self.dims, seed=1, prefix=EVALUATOR_GENERATOR_PREFIX)
        with self.assertRaises(EvaluationError):
            train_evaluator(spec, self.positives, self.negatives, self.dims, forward=forward,
                            backward=trainer_backward, epochs=1)

    def test_shared_trainer_parameters_rejected(self):
        shared = DiscriminatorModel(self.dims, prefix=EVALUATOR_PREFIX).params.names
        with self.assertRaises(SharedParameters):
            train_evaluator(EvaluatorSpec.for_kind(HIER_NEURAL), self.positives, self.negatives, self.dims,
                            epochs=1, trainer_names=shared)

    def test_factory_checks_independence_from_trainer_models(self):
        trainer_names = set(GeneratorModel(self.dims).params.names) | set(DiscriminatorModel(self.dims).params.names)
        factory = evaluator_factory(EvaluatorSpec.for_kind(HIER_NEURAL), self.dims, epochs=1,
                                    trainer_names=trainer_names)
        evaluator = factory(self.positives, self.negatives, 0)
        self.assertFalse(evaluator.parameter_names & trainer_names)
        self.assertTrue(evaluator.parameter_names)

    def test_concatenated_view(self):
        self.assertEqual(concatenated(((4, 5), (6,)), (7,)), ((), (4, 5, 2, 6, 2, 7)))

    def test_machine_vs_random_is_an_accuracy(self):
        factory = evaluator_factory(EvaluatorSpec.for_kind(UNIGRAM_LINEAR), self.dims)
        accuracy = machine_vs_random(factory, _machine(self.dialogues), self.dialogues, seed=1)
        self.assertGreaterEqual(accuracy, 0.0)
        self.assertLessEqual(accuracy, 1.0)


class BenchmarkTests(SimpleTestCase):

    def test_decode_benchmark_rows(self):
        dialogues, vocab = _corpus(n=20)
        dims = ModelDims(vocab_size=len(vocab), embed_size=4, hidden_size=6)
        generator = GeneratorModel(dims, seed=1)
        systems = {
            'greedy': DecodingSystem(generator, DecodeConfig(strategy='greedy', max_len=5), vocab.stop_ids),
            'sample': DecodingSystem(generator, DecodeConfig(strategy='sample', max_len=5), vocab.stop_ids),
        }
        factory = evaluator_factory(EvaluatorSpec.for_kind(UNIGRAM_LINEAR), dims)
        rows = decode_benchmark(systems, dialogues, factory, seed=2)
        self.assertEqual([(name, metric) for name, metric, _ in rows], [
            ('greedy', 'adver_suc'), ('greedy', 'machine_vs_random'),
            ('sample', 'adver_suc'), ('sample', 'machine_vs_random'),
        ])

    def test_decoding_system_carries_vocabulary_stop_words(self):
        dialogues, vocab = _corpus(n=12)
        dims = ModelDims(vocab_size=len(vocab), embed_size=4, hidden_size=6)
        generator = GeneratorModel(dims, seed=3)
        config = DecodeConfig(strategy='beam', beam_width=3, repeat_penalty=5.0, max_len=6)
        contexts = [d.context_tokens for d in dialogues]
        system = DecodingSystem(generator, config, vocab.stop_ids)
        self.assertEqual(system.decode(contexts), decode_contexts(generator, contexts, config, stop_ids=vocab.stop_ids))
        with self.assertRaises(TypeError):
            DecodingSystem(generator, config)

    def test_ordering_count(self):
        study = EvaluatorStudy(per_seed={
            1: {HIER_NEURAL: 0.1, CONCAT_NEURAL: 0.2, UNIGRAM_LINEAR: 0.3},
            2: {HIER_NEURAL: 0.2, CONCAT_NEURAL: 0.1, UNIGRAM_LINEAR: 0.3},
        })
        self.assertEqual(study.ordered_seeds, 1)
        self.assertEqual(len(study.rows()), 6)


class ReportTests(SimpleTestCase):

    def _report(self, **overrides):
        values = dict(
            model='mle-beam', evaluator_kind=HIER_NEURAL, seeds=[1], config_hash='abc',
            adver_suc=0.04, scenario_adver_suc={HUMAN_VS_RANDOM: 0.1}, deviations={HUMAN_VS_RANDOM: 0.1},
            ere=0.1, machine_vs_random=0.9,
        )
        values.update(overrides)
        return EvalReport(**values)

    def test_write_and_read(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_report(Path(tmp) / 'report.json', self._report())
            self.assertEqual(read_report(path), self._report())

    def test_inconsistent_ere_rejected(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(EvaluationError):
                write_report(Path(tmp) / 'report.json', self._report(ere=0.3))

    def test_out_of_range_rejected(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(EvaluationError):
                write_report(Path(tmp) / 'report.json', self._report(adver_suc=1.5))

    def test_csv_rows(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_metrics_csv(Path(tmp) / 'report.csv', self._report().rows())
            self.assertEqual(path.read_text(encoding='utf-8').splitlines()[0], 'model,metric,value')
            self.assertIn(('mle-beam', 'ere', 0.1), read_metrics_csv(path))
