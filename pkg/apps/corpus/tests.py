import math
import tempfile
from collections import Counter
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from scipy import stats

from apps.corpus.exceptions import EmptyCorpus, ParseError
from apps.corpus.services import (
    BOS_ID,
    EOS_ID,
    PAD_ID,
    UNK_ID,
    Dialogue,
    IdfTable,
    Vocab,
    filter_min_length,
    grammar,
    grammar_vocab,
    load_corpus,
    parse_line,
    synth_corpus,
    tfidf_weighted_rates,
    weighted_rates,
)
from apps.corpus.services.grammar import MAX_LENGTH, MIN_LENGTH, TEMPLATES, TOPIC_NAMES


def _dialogue(length: int) -> Dialogue:
    return Dialogue(context=((5,),), response=tuple(range(4, 4 + length)))


class VocabTests(SimpleTestCase):

    def test_reserved_ids(self):
        vocab = Vocab.build([['hello', 'there'], ['hello']])
        self.assertEqual(vocab.tokens[:4], ['<pad>', '<bos>', '<eos>', '<unk>'])
        self.assertEqual((PAD_ID, BOS_ID, EOS_ID, UNK_ID), (0, 1, 2, 3))
        for reserved in range(4):
            self.assertFalse(vocab.is_stop(reserved))

    def test_frequency_then_alphabetical_order(self):
        vocab = Vocab.build([['b', 'a', 'c'], ['c']])
        self.assertEqual(vocab.tokens[4:], ['c', 'a', 'b'])

    def test_round_trip_and_unknowns(self):
        vocab = Vocab.build([['the', 'pizza', 'is', 'tasty']])
        for token in vocab.tokens:
            self.assertEqual(vocab.id_to_token(vocab.token_to_id(token)), token)
        self.assertEqual(vocab.token_to_id('zebra'), UNK_ID)

    def test_stop_words_flagged(self):
        vocab = Vocab.build([['the', 'pizza']])
        self.assertTrue(vocab.is_stop(vocab.token_to_id('the')))
        self.assertFalse(vocab.is_stop(vocab.token_to_id('pizza')))

    def test_save_load_keeps_ids(self):
        vocab = Vocab.build([['do', 'you', 'like', 'the', 'soup', '?']])
        with tempfile.TemporaryDirectory() as tmp:
            path = vocab.save(Path(tmp) / 'vocab.txt')
            loaded = Vocab.load(path)
        self.assertEqual(loaded.tokens, vocab.tokens)
        self.assertEqual(loaded.hash, vocab.hash)


class LoadCorpusTests(SimpleTestCase):

    def _write(self, tmp, text):
        path = Path(tmp) / 'corpus.txt'
        path.write_text(text, encoding='utf-8')
        return path

    def test_single_context_line(self):
        with tempfile.TemporaryDirectory() as tmp:
            dialogues, vocab = load_corpus(self._write(tmp, "hello there\thi ! how are you ?\n"))
        self.assertEqual(len(dialogues), 1)
        self.assertEqual(vocab.decode(dialogues[0].context[0]), ['hello', 'there'])
        self.assertEqual(len(dialogues[0].context), 1)
        self.assertEqual(len(dialogues[0].response), 6)

    def test_keeps_last_two_context_utterances(self):
        context, response = parse_line("a\tb\tc\td e f\n", 1)
        self.assertEqual(context, [['b'], ['c']])
        self.assertEqual(response, ['d', 'e', 'f'])

    def test_empty_response_field(self):
        with self.assertRaises(ParseError) as caught:
            parse_line("hello there\t\n", 7)
        self.assertEqual(caught.exception.line_no, 7)

    def test_double_space_is_malformed(self):
        with self.assertRaises(ParseError):
            parse_line("hello  there\thi\n", 1)

    def test_empty_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(EmptyCorpus):
                load_corpus(self._write(tmp, ''))

    def test_vocab_from_training_split_only(self):
        text = "a b\tc d\na b\tc d\nx y\tz w\n"
        with tempfile.TemporaryDirectory() as tmp:
            dialogues, vocab = load_corpus(self._write(tmp, text), heldout_fraction=1 / 3)
        self.assertNotIn('z', vocab)
        self.assertEqual(dialogues[-1].split, 'heldout')
        self.assertEqual(dialogues[-1].response, (UNK_ID, UNK_ID))

    def test_successor_attached_for_continuing_lines(self):
        text = "u1\tu2\nu1\tu2\tu3\n"
        with tempfile.TemporaryDirectory() as tmp:
            dialogues, vocab = load_corpus(self._write(tmp, text))
        self.assertEqual(vocab.decode(dialogues[0].successor), ['u3'])
        self.assertIsNone(dialogues[1].successor)


class FilterMinLengthTests(SimpleTestCase):

    def test_threshold_five(self):
        kept = filter_min_length([_dialogue(n) for n in (3, 5, 7)], 5)
        self.assertEqual([len(d.response) for d in kept], [5, 7])

    def test_threshold_zero_is_identity(self):
        dialogues = [_dialogue(n) for n in (1, 2, 9)]
        self.assertEqual(filter_min_length(dialogues, 0), dialogues)

    def test_idempotent(self):
        dialogues = [_dialogue(n) for n in (1, 4, 5, 6, 12)]
        once = filter_min_length(dialogues, 5)
        self.assertEqual(filter_min_length(once, 5), once)

    def test_negative_threshold(self):
        with self.assertRaises(ValueError):
            filter_min_length([], -1)


class TfidfRateTests(SimpleTestCase):

    def test_footnote_example(self):
        np.testing.assert_allclose(weighted_rates([1.0, 3.0], 0.1).rates, [0.05, 0.15], atol=1e-12)

    def test_cap_applies(self):
        np.testing.assert_allclose(weighted_rates([1.0, 10.0], 0.1, cap=3.0).rates, [0.05, 0.15], atol=1e-12)

    def test_equal_scores_are_uniform(self):
        np.testing.assert_allclose(weighted_rates([2.0, 2.0, 2.0], 0.3).rates, [0.3, 0.3, 0.3], atol=1e-12)

    def test_mean_multiplier_is_one_and_cap_bound(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(1, 20))
            schedule = weighted_rates(list(rng.uniform(0.1, 50.0, size=n)), 0.5, cap=3.0)
            self.assertAlmostEqual(schedule.multipliers.mean(), 1.0, delta=1e-12)
            self.assertAlmostEqual(schedule.rates.sum(), n * 0.5, delta=1e-9)
            self.assertTrue(np.all(schedule.multipliers <= 3.0 + 1e-12))

    def test_all_stop_word_response_takes_batch_minimum(self):
        vocab = Vocab.build([['the', 'pizza', 'is', 'tasty', 'soup', '.']])
        batch = [
            vocab.encode(['the', 'pizza', 'is', 'tasty']),
            vocab.encode(['the', 'soup']),
            vocab.encode(['the', 'is', '.']),
        ]
        table = IdfTable.fit(batch, vocab.stop_ids)
        schedule = tfidf_weighted_rates(batch, 0.1, idf=table, stop_ids=vocab.stop_ids)
        scores = [table.score(r) for r in batch]
        self.assertIsNone(scores[2])
        self.assertAlmostEqual(schedule.multipliers[2], min(schedule.multipliers[:2]), delta=1e-12)

    def test_batch_fitted_rates_ignore_stop_words(self):
        vocab = Vocab.build([['the', 'pizza', 'is', 'tasty', 'soup', '.']])
        batch = [
            vocab.encode(['the', 'pizza']),
            vocab.encode(['pizza']),
            vocab.encode(['soup', 'tasty']),
            vocab.encode(['the', 'is', '.']),
        ]
        schedule = tfidf_weighted_rates(batch, 0.1, stop_ids=vocab.stop_ids)
        self.assertAlmostEqual(schedule.multipliers[0], schedule.multipliers[1], delta=1e-12)
        self.assertAlmostEqual(schedule.multipliers[3], min(schedule.multipliers[:3]), delta=1e-12)

    def test_idf_table_must_share_stop_words(self):
        vocab = Vocab.build([['the', 'pizza']])
        batch = [vocab.encode(['the', 'pizza'])]
        with self.assertRaises(ValueError):
            tfidf_weighted_rates(batch, 0.1, idf=IdfTable.fit(batch), stop_ids=vocab.stop_ids)

    def test_invalid_arguments(self):
        with self.assertRaises(ValueError):
            weighted_rates([], 0.1)
        with self.assertRaises(ValueError):
            weighted_rates([1.0], 0.0)
        with self.assertRaises(ValueError):
            weighted_rates([1.0], 0.1, cap=0.5)


class SynthCorpusTests(SimpleTestCase):

    def test_same_seed_same_bytes(self):
        with tempfile.TemporaryDirectory() as tmp:
            first = synth_corpus(1, 10, Path(tmp) / 'a.txt').read_bytes()
            second = synth_corpus(1, 10, Path(tmp) / 'b.txt').read_bytes()
        self.assertEqual(first, second)

    def test_loads_back_with_response_lengths_in_range(self):
        with tempfile.TemporaryDirectory() as tmp:
            dialogues, vocab = load_corpus(synth_corpus(2, 300, Path(tmp) / 'c.txt'))
        self.assertEqual(len(dialogues), 300)
        for dialogue in dialogues:
            self.assertGreaterEqual(len(dialogue.response), MIN_LENGTH)
            self.assertLessEqual(len(dialogue.response), MAX_LENGTH)
            self.assertLessEqual(len(dialogue.context), 2)
        self.assertLessEqual(len(vocab), len(grammar_vocab()))
        self.assertTrue(any(d.successor is not None for d in dialogues))

    def test_non_positive_count(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ValueError):
                synth_corpus(1, 0, Path(tmp) / 'd.txt')

    def test_closed_form_distribution_sums_to_one(self):
        context = [('i', 'really', 'like', 'the', 'pizza', '.')]
        distribution = grammar.response_distribution(context)
        self.assertAlmostEqual(sum(distribution.values()), 1.0, delta=1e-12)
        for response, p in list(distribution.items())[:50]:
            self.assertAlmostEqual(grammar.response_probability(context, response), p, delta=1e-15)

    def test_response_probability_example(self):
        context = [('do', 'you', 'like', 'the', 'rain', '?')]
        # weather stays with 0.7, template 0.3, four nouns
        expected = 0.7 * 0.3 / 4
        p = grammar.response_probability(context, ('i', 'really', 'like', 'the', 'snow', '.'))
        self.assertAlmostEqual(p, expected, delta=1e-15)
        self.assertEqual(grammar.response_probability(context, ('snow', 'the')), 0.0)

    def test_sampled_outcomes_match_closed_form(self):
        rng = np.random.default_rng(0)
        samples = 10_000
        counts = Counter()
        for _ in range(samples):
            utterance = grammar.sample_utterance(rng, 'food')
            counts[(utterance.topic, utterance.template)] += 1
        probabilities = grammar.outcome_probabilities('food')
        cells = [(topic, index) for topic in TOPIC_NAMES for index in range(len(TEMPLATES))]
        observed = np.array([counts[cell] for cell in cells], dtype=np.float64)
        expected = np.array([probabilities[cell] for cell in cells]) * samples
        expected *= observed.sum() / expected.sum()
        _, p_value = stats.chisquare(observed, expected)
        self.assertGreater(p_value, 0.01)

    def test_perplexity_floor(self):
        entropy = grammar.conditional_entropy()
        self.assertGreater(entropy, 0.0)
        floor = grammar.perplexity_floor()
        self.assertAlmostEqual(floor, math.exp(entropy / (grammar.expected_length() + 1.0)), delta=1e-12)
        self.assertGreater(floor, 1.0)
        self.assertAlmostEqual(
            grammar.conditional_entropy('sport'), grammar.conditional_entropy('food'), delta=1e-12,
        )
