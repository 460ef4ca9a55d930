"""
Hierarchical Encoder, Discriminator and Critic.

Each utterance of the episode (context utterances oldest first, then the
response) is read by a word-level GRU; the final word states are read by an
utterance-level GRU whose last state represents the whole episode.

- DiscriminatorModel: 2-way softmax, Q+ = probability that the episode is
  human-generated
- CriticModel: scalar baseline b for full responses and for prefixes
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from apps.autodiff.services import Tensor, check_token_ids, softmax
from apps.seqmodels.exceptions import EmptyResponse
from apps.seqmodels.services.layers import GRUCell, ModelDims, ParameterSet, SequenceModel

logger = logging.getLogger(__name__)

HUMAN, MACHINE = 1, 0


def episode(context: Sequence[Sequence[int]], response: Sequence[int]) -> List[List[int]]:
    """Utterances in reading order: context first, then the response."""
    utterances = [list(u) for u in context if len(u)]
    if len(response):
        utterances.append(list(response))
    return utterances


class HierarchicalEncoder:
    def __init__(self, params: ParameterSet, embedding: Tensor, embed_size: int, hidden_size: int, vocab_size: int):
        self.embedding = embedding
        self.vocab_size = vocab_size
        self.hidden_size = hidden_size
        self.words = GRUCell(params, 'word_encoder', embed_size, hidden_size)
        self.utterances = GRUCell(params, 'utterance_encoder', hidden_size, hidden_size)

    def encode_utterance(self, tokens: Sequence[int]) -> Tensor:
        ids = check_token_ids(tokens, self.vocab_size)
        return self.words.run([self.embedding[t] for t in ids])[-1]

    def encode(self, utterances: Sequence[Sequence[int]]) -> Tensor:
        vectors = [self.encode_utterance(u) for u in utterances if len(u)]
        if not vectors:
            return Tensor(np.zeros(self.hidden_size))
        return self.utterances.run(vectors)[-1]


class _EpisodeModel(SequenceModel):

    def __init__(self, dims: ModelDims, seed: int = 0, init: str = 'uniform', prefix: Optional[str] = None):
        super().__init__(dims, seed=seed, init=init, prefix=prefix)
        self.embedding = self.params.add('embedding', (dims.vocab_size, dims.embed_size))
        self.encoder = HierarchicalEncoder(
            self.params, self.embedding, dims.embed_size, dims.hidden_size, dims.vocab_size,
        )

    def represent(self, context: Sequence[Sequence[int]], response: Sequence[int]) -> Tensor:
        return self.encoder.encode(episode(context, response))


class DiscriminatorModel(_EpisodeModel):
    kind = 'discriminator'
    default_prefix = 'discriminator'

    def __init__(self, dims: ModelDims, seed: int = 0, init: str = 'uniform', prefix: Optional[str] = None):
        super().__init__(dims, seed=seed, init=init, prefix=prefix)
        self.W_out = self.params.add('out.W', (2, dims.hidden_size))
        self.b_out = self.params.add('out.b', (2,))

    def probabilities(self, context: Sequence[Sequence[int]], response: Sequence[int]) -> Tensor:
        """[Q-, Q+] for the episode."""
        if not len(response):
            raise EmptyResponse()
        return softmax(self.W_out @ self.represent(context, response) + self.b_out)

    def q_plus(self, context: Sequence[Sequence[int]], response: Sequence[int]) -> Tensor:
        return self.probabilities(context, response)[HUMAN]

    def score(self, context: Sequence[Sequence[int]], response: Sequence[int]) -> float:
        return self.q_plus(context, response).item()

    def loss(self, context: Sequence[Sequence[int]], response: Sequence[int], label: int) -> Tensor:
        """Binary cross-entropy, label 1 = human."""
        return -(self.probabilities(context, response)[int(label)].log())


class CriticModel(_EpisodeModel):
    kind = 'critic'
    default_prefix = 'critic'

    def __init__(self, dims: ModelDims, seed: int = 0, init: str = 'uniform', prefix: Optional[str] = None):
        super().__init__(dims, seed=seed, init=init, prefix=prefix)
        self.w_out = self.params.add('out.w', (dims.hidden_size,))
        self.b_out = self.params.add('out.b', (1,))

    def value(self, context: Sequence[Sequence[int]], prefix: Sequence[int] = ()) -> Tensor:
        """b(x, y_prefix); an empty prefix scores the context alone."""
        return (self.w_out @ self.represent(context, prefix)) + self.b_out[0]

    def predict(self, context: Sequence[Sequence[int]], prefix: Sequence[int] = ()) -> float:
        return self.value(context, prefix).item()
