import itertools
import tempfile
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from scipy import stats

from apps.autodiff.services import Tensor
from apps.corpus.services import EOS_ID, Vocab
from apps.decoding.exceptions import InvalidDecodeConfig
from apps.decoding.services import (
    DecodeConfig,
    DecodedResponse,
    anti_lm_decode,
    beam_search,
    decode_one,
    greedy_decode,
    masked_log_probs,
    mmi_backward_rerank,
    read_decodes,
    sample_decode,
    sibling_adjusted,
    write_decodes,
)
from apps.decoding.services.search import ranked_children
from apps.seqmodels.services import GeneratorModel, LanguageModel, ModelDims

SMALL = ModelDims(vocab_size=10, embed_size=3, hidden_size=4)
FIVE = ModelDims(vocab_size=5, embed_size=3, hidden_size=4)
NO_STOPS = frozenset()


@dataclass
class _ForcedState:
    position: int
    log_probs: Tensor


class ForcedGenerator:
    """Puts all probability mass on one fixed sequence."""

    def __init__(self, sequence, vocab_size):
        self.sequence = list(sequence)
        self.vocab_size = vocab_size

    def _state(self, position):
        row = np.full(self.vocab_size, -1e9)
        row[self.sequence[min(position, len(self.sequence) - 1)]] = 0.0
        return _ForcedState(position, Tensor(row))

    def start(self, context):
        return self._state(0)

    def step(self, state, token):
        return self._state(state.position + 1)


def _contexts(count, vocab_size, seed=0):
    rng = np.random.default_rng(seed)
    return [list(rng.integers(3, vocab_size, size=int(rng.integers(1, 5)))) for _ in range(count)]


class DecodeConfigTests(SimpleTestCase):

    def test_defaults(self):
        config = DecodeConfig()
        self.assertEqual(config.strategy, 'beam')
        self.assertEqual(config.max_len, 20)

    def test_invalid_values(self):
        for kwargs in ({'beam_width': 0}, {'max_len': 0}, {'temperature': 0.0},
                       {'mmi_weight': 1.5}, {'strategy': 'nucleus'}, {'sibling_penalty': -1.0}):
            with self.assertRaises(InvalidDecodeConfig):
                DecodeConfig(**kwargs)


class GreedyTests(SimpleTestCase):

    def test_deterministic(self):
        model = GeneratorModel(SMALL, seed=1)
        self.assertEqual(greedy_decode(model, [4, 5], 8).tokens, greedy_decode(model, [4, 5], 8).tokens)

    def test_one_hot_generator_is_reproduced(self):
        forced = [5, 7, 6, EOS_ID]
        self.assertEqual(greedy_decode(ForcedGenerator(forced, 10), [4], 10).tokens, tuple(forced))

    def test_never_emits_pad_or_bos_and_respects_max_len(self):
        model = GeneratorModel(SMALL, seed=2)
        for context in _contexts(20, SMALL.vocab_size):
            tokens = greedy_decode(model, context, 6).tokens
            self.assertLessEqual(len(tokens), 6)
            self.assertNotIn(0, tokens)
            self.assertNotIn(1, tokens)
            self.assertNotEqual(tokens[0], EOS_ID)

    def test_matches_width_one_beam(self):
        model = GeneratorModel(SMALL, seed=3)
        config = DecodeConfig(beam_width=1, sibling_penalty=0.0, repeat_penalty=0.0, max_len=6)
        for context in _contexts(100, SMALL.vocab_size, seed=1):
            greedy = greedy_decode(model, context, 6)
            beam = beam_search(model, context, config, stop_ids=NO_STOPS)
            self.assertEqual(len(beam), 1)
            self.assertEqual(beam[0].tokens, greedy.tokens)
            self.assertAlmostEqual(beam[0].score, greedy.score, delta=1e-12)


class SampleTests(SimpleTestCase):

    def test_same_seed_same_output(self):
        model = GeneratorModel(SMALL, seed=4)
        first = sample_decode(model, [4, 5], 1.0, seed=9, max_len=8)
        second = sample_decode(model, [4, 5], 1.0, seed=9, max_len=8)
        self.assertEqual(first.tokens, second.tokens)

    def test_low_temperature_equals_greedy(self):
        model = GeneratorModel(SMALL, seed=5)
        # spread the logits so near-ties are unlikely
        model.W_out.data *= 200.0
        for index, context in enumerate(_contexts(10, SMALL.vocab_size, seed=2)):
            sampled = sample_decode(model, context, 1e-3, seed=index, max_len=6)
            self.assertEqual(sampled.tokens, greedy_decode(model, context, 6).tokens)

    def test_first_token_distribution(self):
        model = GeneratorModel(SMALL, seed=6, init='uniform')
        context = [4, 5, 6]
        counts = Counter(
            sample_decode(model, context, 1.0, seed=seed, max_len=1).tokens[0]
            for seed in range(10_000)
        )
        first = masked_log_probs(model.start(context).log_probs.data, 0)
        allowed = [k for k in range(SMALL.vocab_size) if np.isfinite(first[k])]
        probs = np.exp(first[allowed])
        probs /= probs.sum()
        observed = np.array([counts[k] for k in allowed], dtype=np.float64)
        _, p_value = stats.chisquare(observed, probs * observed.sum())
        self.assertGreater(p_value, 0.01)


class BeamSearchTests(SimpleTestCase):

    def test_sibling_rank_penalty_example(self):
        np.testing.assert_allclose(sibling_adjusted([-1.0, -1.2], 0.5), [-1.0, -1.7], atol=1e-12)

    def test_repeat_penalty_removes_repeated_types(self):
        model = GeneratorModel(SMALL, seed=7)
        config = DecodeConfig(beam_width=5, sibling_penalty=1.0, repeat_penalty=10.0, max_len=5)
        for context in _contexts(100, SMALL.vocab_size, seed=3):
            best = beam_search(model, context, config, stop_ids=NO_STOPS)[0]
            response = best.response
            self.assertEqual(len(response), len(set(response)))

    def test_repeat_penalty_skips_stop_words(self):
        forced = ForcedGenerator([4, 5, 4, EOS_ID], 10)
        for penalty in (0.0, 3.0):
            config = DecodeConfig(beam_width=1, sibling_penalty=0.0, repeat_penalty=penalty, max_len=6)
            best = beam_search(forced, [3], config, stop_ids=frozenset({4}))[0]
            self.assertEqual(best.tokens, (4, 5, 4, EOS_ID))
            self.assertAlmostEqual(best.score, 0.0, delta=1e-12)
        config = DecodeConfig(beam_width=1, sibling_penalty=0.0, repeat_penalty=3.0, max_len=6)
        self.assertAlmostEqual(beam_search(forced, [3], config, stop_ids=NO_STOPS)[0].score, -3.0, delta=1e-12)

    def test_decode_one_exempts_vocabulary_stop_words(self):
        vocab = Vocab.build([['the', 'soup', 'is', 'hot']])
        the, soup = vocab.token_to_id('the'), vocab.token_to_id('soup')
        forced = ForcedGenerator([the, soup, the, EOS_ID], len(vocab))
        config = DecodeConfig(beam_width=2, sibling_penalty=0.0, repeat_penalty=2.0, max_len=6)
        decoded = decode_one(forced, [soup], config, stop_ids=vocab.stop_ids)
        self.assertEqual(decoded.response, (the, soup, the))
        self.assertAlmostEqual(decoded.score, 0.0, delta=1e-12)
        self.assertAlmostEqual(decode_one(forced, [soup], config, stop_ids=NO_STOPS).score, -2.0, delta=1e-12)

    def test_stop_words_may_repeat_under_a_heavy_penalty(self):
        model = GeneratorModel(SMALL, seed=7)
        config = DecodeConfig(beam_width=5, sibling_penalty=1.0, repeat_penalty=10.0, max_len=5)
        stops = frozenset({4, 5})
        for context in _contexts(100, SMALL.vocab_size, seed=3):
            content = [t for t in beam_search(model, context, config, stop_ids=stops)[0].response if t not in stops]
            self.assertEqual(len(content), len(set(content)))

    def test_at_most_width_sorted_and_closed(self):
        model = GeneratorModel(SMALL, seed=8)
        config = DecodeConfig(beam_width=4, max_len=5)
        for context in _contexts(10, SMALL.vocab_size, seed=4):
            nbest = beam_search(model, context, config, stop_ids=NO_STOPS)
            self.assertLessEqual(len(nbest), 4)
            scores = [h.score for h in nbest]
            self.assertEqual(scores, sorted(scores, reverse=True))
            for hypothesis in nbest:
                self.assertTrue(hypothesis.finished or len(hypothesis.tokens) == 5)

    def test_exhaustive_against_enumeration(self):
        model = GeneratorModel(FIVE, seed=9)
        sib, rep, max_len = 0.5, 0.3, 4
        config = DecodeConfig(beam_width=31, sibling_penalty=sib, repeat_penalty=rep, max_len=max_len)
        context = [3, 4]

        sequences = []
        for length in range(1, max_len):
            for body in itertools.product((3, 4), repeat=length):
                sequences.append(body + (EOS_ID,))
        sequences.extend(itertools.product((3, 4), repeat=max_len))

        expected = []
        for tokens in sequences:
            state, score, seen = model.start(context), 0.0, set()
            for position, token in enumerate(tokens):
                scores = masked_log_probs(state.log_probs.data, position)
                rank = ranked_children(scores).index(token)
                score = score + float(scores[token]) - sib * rank - (rep if token in seen else 0.0)
                if token != EOS_ID:
                    seen.add(token)
                    state = model.step(state, token)
            expected.append((-score, tuple(tokens), len(tokens)))
        expected.sort()

        nbest = beam_search(model, context, config, stop_ids=NO_STOPS)
        self.assertEqual([h.tokens for h in nbest], [item[1] for item in expected])
        for hypothesis, item in zip(nbest, expected):
            self.assertAlmostEqual(hypothesis.score, -item[0], delta=1e-12)


class MmiTests(SimpleTestCase):

    def setUp(self):
        self.forward = GeneratorModel(SMALL, seed=10)
        self.backward = GeneratorModel(SMALL, seed=11, prefix='backward')
        self.config = DecodeConfig(beam_width=5, max_len=5)

    def test_zero_weight_keeps_order(self):
        context = [4, 5]
        nbest = beam_search(self.forward, context, self.config, stop_ids=NO_STOPS)
        reranked = mmi_backward_rerank(nbest, self.backward, context, 0.0)
        self.assertEqual([r.tokens for r in reranked], [h.tokens for h in nbest])

    def test_unit_weight_orders_by_backward(self):
        context = [6, 7]
        nbest = beam_search(self.forward, context, self.config, stop_ids=NO_STOPS)
        reranked = mmi_backward_rerank(nbest, self.backward, context, 1.0)
        backward = [r.backward for r in reranked]
        self.assertEqual(backward, sorted(backward, reverse=True))

    def test_reranking_changes_some_top_choice(self):
        changed = 0
        for context in _contexts(100, SMALL.vocab_size, seed=5):
            nbest = beam_search(self.forward, context, self.config, stop_ids=NO_STOPS)
            reranked = mmi_backward_rerank(nbest, self.backward, context, 0.5)
            changed += int(reranked[0].tokens != nbest[0].tokens)
        self.assertGreaterEqual(changed, 1)

    def test_empty_nbest(self):
        with self.assertRaises(ValueError):
            mmi_backward_rerank([], self.backward, [4], 0.5)


class AntiLmTests(SimpleTestCase):

    def test_zero_weight_is_plain_beam(self):
        model = GeneratorModel(SMALL, seed=12)
        lm = LanguageModel(SMALL, seed=13)
        config = DecodeConfig(beam_width=3, max_len=6)
        for context in _contexts(10, SMALL.vocab_size, seed=6):
            plain = beam_search(model, context, config, stop_ids=NO_STOPS)[0]
            anti = anti_lm_decode(model, lm, context, 0.0, config, stop_ids=NO_STOPS)
            self.assertEqual(anti.tokens, plain.tokens)
            self.assertTrue(anti.finished or len(anti.tokens) == 6)

    def test_heavier_weight_lowers_lm_log_prob(self):
        # width large enough to enumerate every sequence, so the top-1 is exact
        model = GeneratorModel(FIVE, seed=14)
        lm = LanguageModel(FIVE, seed=15)
        config = DecodeConfig(beam_width=31, sibling_penalty=0.0, repeat_penalty=0.0, max_len=3)
        means = []
        for weight in (0.0, 0.1, 0.5):
            total = 0.0
            for context in _contexts(100, FIVE.vocab_size, seed=7):
                tokens = anti_lm_decode(model, lm, context, weight, config, stop_ids=NO_STOPS).tokens
                total += lm.lm_log_prob(list(tokens)).item()
            means.append(total / 100)
        self.assertLessEqual(means[1], means[0] + 1e-9)
        self.assertLessEqual(means[2], means[1] + 1e-9)


class DecodeFileTests(SimpleTestCase):

    def test_write_and_read(self):
        vocab = Vocab.build([['the', 'soup', 'is', 'hot']])
        decoded = [DecodedResponse(tuple(vocab.encode(['the', 'soup'])), tuple(vocab.encode(['is', 'hot'])), -1.25)]
        with tempfile.TemporaryDirectory() as tmp:
            path = write_decodes(Path(tmp) / 'decodes.tsv', vocab, decoded)
            self.assertEqual(path.read_text(encoding='utf-8'), "the soup\tis hot\t-1.250000\n")
            self.assertEqual(read_decodes(path), [(['the', 'soup'], ['is', 'hot'], -1.25)])
