"""
Synthetic Dialogue Grammar.

A fixed stochastic template grammar over a ~60-word vocabulary whose response
distribution given the context is known in closed form:

    P(response | context) = P(topic_r | topic_c) * P(template) * prod_slots 1/|slot|

where topic_c is the topic of the latest context utterance. Every
(topic, template, slot filling) yields a distinct token sequence, so the
probability of any response can be recovered exactly by parsing it.

Conversations run for a few turns and are emitted as sliding windows
(context = up to two preceding utterances), so consecutive corpus lines of a
conversation expose each response's successor utterance.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from apps.corpus.services.loader import MAX_CONTEXT_UTTERANCES, write_corpus
from apps.corpus.services.vocab import Vocab

logger = logging.getLogger(__name__)

TOPICS: Dict[str, Dict[str, Tuple[str, ...]]] = {
    'food': {'N': ('pizza', 'soup', 'bread', 'cheese'), 'A': ('tasty', 'salty')},
    'weather': {'N': ('rain', 'snow', 'wind', 'sun'), 'A': ('cold', 'warm')},
    'music': {'N': ('song', 'band', 'guitar', 'concert'), 'A': ('loud', 'catchy')},
    'travel': {'N': ('train', 'beach', 'hotel', 'city'), 'A': ('busy', 'far')},
    'work': {'N': ('boss', 'office', 'meeting', 'project'), 'A': ('boring', 'late')},
    'sport': {'N': ('match', 'team', 'goal', 'coach'), 'A': ('fast', 'tough')},
}
TOPIC_NAMES: Tuple[str, ...] = tuple(TOPICS)

# Slots are written as {N} (topic noun) and {A} (topic adjective).
TEMPLATES: Tuple[Tuple[str, float], ...] = (
    ('i really like the {N} .', 0.30),
    ('do you like the {N} ?', 0.20),
    ('the {N} is very {A} today .', 0.20),
    ('i think the {N} and the {N} are {A} .', 0.10),
    ('what about the {A} {N} ? we like it .', 0.10),
    ('the {N} was {A} but the {N} was not {A} .', 0.10),
)

TOPIC_STAY_PROB = 0.7
TURNS_PER_CONVERSATION = 4
MIN_LENGTH, MAX_LENGTH = 5, 12


def _template_tokens(template: str) -> List[str]:
    return template.split(' ')


def _slots(template: str) -> List[str]:
    return [tok[1] for tok in _template_tokens(template) if tok.startswith('{')]


WORD_TO_TOPIC: Dict[str, str] = {
    word: topic
    for topic, slots in TOPICS.items()
    for words in slots.values()
    for word in words
}


@dataclass(frozen=True)
class Utterance:
    topic: str
    template: int
    tokens: Tuple[str, ...]


class DialogueGrammar:
    """
    Sampler and closed-form oracle for the synthetic conversations.
    """

    def __init__(self, stay_prob: float = TOPIC_STAY_PROB):
        self.stay_prob = stay_prob
        self.template_weights = np.array([w for _, w in TEMPLATES], dtype=np.float64)

    # ------------------------------------------------------------------
    # Closed form
    # ------------------------------------------------------------------
    def topic_transition(self, context_topic: Optional[str]) -> Dict[str, float]:
        if context_topic is None:
            return {topic: 1.0 / len(TOPIC_NAMES) for topic in TOPIC_NAMES}
        switch = (1.0 - self.stay_prob) / (len(TOPIC_NAMES) - 1)
        return {
            topic: self.stay_prob if topic == context_topic else switch
            for topic in TOPIC_NAMES
        }

    def outcome_probabilities(self, context_topic: Optional[str]) -> Dict[Tuple[str, int], float]:
        """P(topic, template) of the response given the context topic."""
        return {
            (topic, index): p_topic * weight
            for topic, p_topic in self.topic_transition(context_topic).items()
            for index, (_, weight) in enumerate(TEMPLATES)
        }

    @staticmethod
    def topic_of(tokens: Sequence[str]) -> Optional[str]:
        for token in tokens:
            if token in WORD_TO_TOPIC:
                return WORD_TO_TOPIC[token]
        return None

    def parse(self, tokens: Sequence[str]) -> Optional[Tuple[str, int]]:
        """(topic, template index) that produces ``tokens``, or None."""
        topic = self.topic_of(tokens)
        if topic is None:
            return None
        for index, (template, _) in enumerate(TEMPLATES):
            pattern = _template_tokens(template)
            if len(pattern) != len(tokens):
                continue
            if all(
                (tok == pat) if not pat.startswith('{') else tok in TOPICS[topic][pat[1]]
                for tok, pat in zip(tokens, pattern)
            ):
                return topic, index
        return None

    def response_probability(self, context: Sequence[Sequence[str]], response: Sequence[str]) -> float:
        """Exact P(response | context) under the grammar."""
        parsed = self.parse(response)
        if parsed is None:
            return 0.0
        topic, index = parsed
        context_topic = self.topic_of(context[-1]) if context else None
        fill = 1.0
        for slot in _slots(TEMPLATES[index][0]):
            fill /= len(TOPICS[topic][slot])
        return self.outcome_probabilities(context_topic)[(topic, index)] * fill

    def response_distribution(self, context: Sequence[Sequence[str]]) -> Dict[Tuple[str, ...], float]:
        """Every possible response with its probability (sums to 1)."""
        context_topic = self.topic_of(context[-1]) if context else None
        distribution = {}
        for (topic, index), p in self.outcome_probabilities(context_topic).items():
            template = TEMPLATES[index][0]
            slots = _slots(template)
            choices = [TOPICS[topic][slot] for slot in slots]
            fill_p = p / math.prod(len(c) for c in choices)
            for filling in itertools.product(*choices):
                distribution[self._render(template, filling)] = fill_p
        return distribution

    def conditional_entropy(self, context_topic: str = TOPIC_NAMES[0]) -> float:
        """H(response | context) in nats; identical for every context topic."""
        entropy = 0.0
        for (topic, index), p in self.outcome_probabilities(context_topic).items():
            slots = _slots(TEMPLATES[index][0])
            fill_entropy = sum(math.log(len(TOPICS[topic][slot])) for slot in slots)
            entropy += p * (-math.log(p) + fill_entropy)
        return entropy

    def expected_length(self) -> float:
        return float(sum(
            weight * len(_template_tokens(template)) for template, weight in TEMPLATES
        ))

    def perplexity_floor(self) -> float:
        """Per-token perplexity of the true conditional (EOS counted as a token)."""
        return math.exp(self.conditional_entropy() / (self.expected_length() + 1.0))

    # ------------------------------------------------------------------
    # Sampling
    # ------------------------------------------------------------------
    @staticmethod
    def _render(template: str, filling: Sequence[str]) -> Tuple[str, ...]:
        values = iter(filling)
        return tuple(next(values) if tok.startswith('{') else tok for tok in _template_tokens(template))

    def sample_utterance(self, rng: np.random.Generator, context_topic: Optional[str]) -> Utterance:
        transition = self.topic_transition(context_topic)
        topic = TOPIC_NAMES[rng.choice(len(TOPIC_NAMES), p=[transition[t] for t in TOPIC_NAMES])]
        index = int(rng.choice(len(TEMPLATES), p=self.template_weights))
        template = TEMPLATES[index][0]
        filling = [
            TOPICS[topic][slot][int(rng.integers(len(TOPICS[topic][slot])))]
            for slot in _slots(template)
        ]
        return Utterance(topic=topic, template=index, tokens=self._render(template, filling))

    def sample_conversation(self, rng: np.random.Generator, turns: int = TURNS_PER_CONVERSATION) -> List[Utterance]:
        utterances = [self.sample_utterance(rng, None)]
        while len(utterances) < turns:
            utterances.append(self.sample_utterance(rng, utterances[-1].topic))
        return utterances

    def dialogue_lines(self, seed: int, n_dialogues: int) -> Iterator[Tuple[Tuple[Tuple[str, ...], ...], Tuple[str, ...]]]:
        """Yield ``n_dialogues`` (context, response) windows, deterministic per seed."""
        rng = np.random.default_rng(seed)
        emitted = 0
        while emitted < n_dialogues:
            conversation = self.sample_conversation(rng)
            for position in range(1, len(conversation)):
                if emitted >= n_dialogues:
                    break
                window = conversation[max(0, position - MAX_CONTEXT_UTTERANCES):position]
                yield tuple(u.tokens for u in window), conversation[position].tokens
                emitted += 1


grammar = DialogueGrammar()


def synth_corpus(seed: int, n_dialogues: int, path) -> Path:
    """
    Write a synthetic corpus file.

    Args:
        seed: RNG seed; the same seed gives a byte-identical file
        n_dialogues: number of corpus lines (>= 1)
        path: output file
    """
    if n_dialogues < 1:
        raise ValueError(f"n_dialogues must be >= 1, got {n_dialogues}")
    path = write_corpus(path, grammar.dialogue_lines(seed, n_dialogues))
    logger.info(f"Synthesized {n_dialogues} dialogues with seed {seed} into {path}")
    return path


def grammar_vocab() -> Vocab:
    """Every word the grammar can emit, in corpus-independent order."""
    words = set(WORD_TO_TOPIC)
    for template, _ in TEMPLATES:
        words.update(tok for tok in _template_tokens(template) if not tok.startswith('{'))
    return Vocab.build([sorted(words)])
