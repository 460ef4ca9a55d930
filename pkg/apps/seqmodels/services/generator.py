"""
Generator Policy.

Encoder-decoder with bilinear attention:

    encoder:   GRU over the concatenated context tokens (BOS when empty)
    decoder:   GRU over the previous target token, initialised with the
               final encoder state
    attention: a_i = softmax_i(e_i . (W_a s)), c = sum_i a_i e_i
    output:    log_softmax(W_o [s; c] + b_o)

The same class serves the forward policy p(y|x) and the backward model
p(x|y) used for mutual-information reranking (prefix ``backward``).
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from apps.autodiff.services import (
    Tensor,
    check_token_ids,
    concat,
    log_softmax,
    softmax,
    stack,
)
from apps.corpus.services import BOS_ID, EOS_ID
from apps.seqmodels.exceptions import EmptyResponse
from apps.seqmodels.services.layers import GRUCell, ModelDims, SequenceModel

logger = logging.getLogger(__name__)


def with_eos(tokens: Sequence[int]) -> List[int]:
    """Target form of a response: tokens followed by a single EOS."""
    tokens = [int(t) for t in tokens]
    if tokens and tokens[-1] == EOS_ID:
        return tokens
    return tokens + [EOS_ID]


def strip_eos(tokens: Sequence[int]) -> List[int]:
    tokens = [int(t) for t in tokens]
    return tokens[:-1] if tokens and tokens[-1] == EOS_ID else tokens


@dataclass
class DecoderState:
    """
    Decoder state after consuming the latest token.

    ``log_probs`` is the next-token distribution (Tensor of shape [V]).
    """
    hidden: Tensor
    memory: Tensor
    log_probs: Tensor


class GeneratorModel(SequenceModel):
    kind = 'generator'
    default_prefix = 'generator'

    def __init__(self, dims: ModelDims, seed: int = 0, init: str = 'uniform', prefix: Optional[str] = None):
        super().__init__(dims, seed=seed, init=init, prefix=prefix)
        V, E, H = dims.vocab_size, dims.embed_size, dims.hidden_size
        self.embedding = self.params.add('embedding', (V, E))
        self.encoder = GRUCell(self.params, 'encoder', E, H)
        self.decoder = GRUCell(self.params, 'decoder', E, H)
        self.attention = self.params.add('attention', (H, H))
        self.W_out = self.params.add('out.W', (V, 2 * H))
        self.b_out = self.params.add('out.b', (V,))

    # ------------------------------------------------------------------
    # Incremental interface
    # ------------------------------------------------------------------
    def encode(self, context_tokens: Sequence[int]) -> List[Tensor]:
        tokens = check_token_ids(context_tokens, self.dims.vocab_size) or [BOS_ID]
        return self.encoder.run([self.embedding[t] for t in tokens])

    def _output(self, hidden: Tensor, memory: Tensor) -> Tensor:
        weights = softmax(memory @ (self.attention @ hidden))
        summary = weights @ memory
        return log_softmax(self.W_out @ concat([hidden, summary]) + self.b_out)

    def start(self, context_tokens: Sequence[int]) -> DecoderState:
        states = self.encode(context_tokens)
        memory = stack(states)
        hidden = self.decoder.step(self.embedding[BOS_ID], states[-1])
        return DecoderState(hidden=hidden, memory=memory, log_probs=self._output(hidden, memory))

    def step(self, state: DecoderState, token_id: int) -> DecoderState:
        check_token_ids([token_id], self.dims.vocab_size)
        hidden = self.decoder.step(self.embedding[int(token_id)], state.hidden)
        return DecoderState(hidden=hidden, memory=state.memory, log_probs=self._output(hidden, state.memory))

    def advance(self, context_tokens: Sequence[int], prefix: Sequence[int]) -> DecoderState:
        state = self.start(context_tokens)
        for token in prefix:
            state = self.step(state, token)
        return state

    # ------------------------------------------------------------------
    # Teacher-forced scoring
    # ------------------------------------------------------------------
    def step_log_probs(self, context_tokens: Sequence[int], y: Sequence[int]) -> List[Tensor]:
        """Full next-token log distributions for every position of ``y``."""
        y = check_token_ids(y, self.dims.vocab_size)
        if not y:
            raise EmptyResponse()
        state = self.start(context_tokens)
        rows = [state.log_probs]
        for token in y[:-1]:
            state = self.step(state, token)
            rows.append(state.log_probs)
        return rows

    def log_probs(self, context_tokens: Sequence[int], y: Sequence[int]) -> Tensor:
        """
        Per-token log p(y_t | x, y_<t) with the ground-truth prefix fed back.

        Returns:
            Tensor of shape [|y|]

        Raises:
            TokenOutOfVocab: a token id outside the vocabulary
            EmptyResponse: y is empty
        """
        rows = self.step_log_probs(context_tokens, y)
        return stack([row[int(token)] for row, token in zip(rows, y)])

    def stepwise_probs(self, context_tokens: Sequence[int], y: Sequence[int]) -> Tensor:
        """[|y|, V] probabilities, the input form of ``sequence_nll``."""
        return stack(self.step_log_probs(context_tokens, y)).exp()

    def batch_log_probs(self, batch: Sequence[Sequence[Sequence[int]]]) -> List[np.ndarray]:
        """Per-example log-probs for (context, y) pairs evaluated independently."""
        return [self.log_probs(context, y).numpy() for context, y in batch]

    def sequence_log_prob(self, context_tokens: Sequence[int], y: Sequence[int]) -> float:
        return float(self.log_probs(context_tokens, y).data.sum())
