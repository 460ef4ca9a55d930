"""
Unconditional Language Model.

GRU over the previous token with a softmax output, no encoder or attention.
Penalised during anti-LM decoding.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

from apps.autodiff.services import Tensor, check_token_ids, log_softmax, stack
from apps.corpus.services import BOS_ID
from apps.seqmodels.services.layers import GRUCell, ModelDims, SequenceModel

logger = logging.getLogger(__name__)


@dataclass
class LMState:
    hidden: Tensor
    log_probs: Tensor


class LanguageModel(SequenceModel):
    kind = 'lm'
    default_prefix = 'lm'

    def __init__(self, dims: ModelDims, seed: int = 0, init: str = 'uniform', prefix: Optional[str] = None):
        super().__init__(dims, seed=seed, init=init, prefix=prefix)
        V, E, H = dims.vocab_size, dims.embed_size, dims.hidden_size
        self.embedding = self.params.add('embedding', (V, E))
        self.cell = GRUCell(self.params, 'cell', E, H)
        self.W_out = self.params.add('out.W', (V, H))
        self.b_out = self.params.add('out.b', (V,))

    def _state(self, hidden: Tensor) -> LMState:
        return LMState(hidden=hidden, log_probs=log_softmax(self.W_out @ hidden + self.b_out))

    def start(self) -> LMState:
        return self._state(self.cell.step(self.embedding[BOS_ID], self.cell.initial_state()))

    def step(self, state: LMState, token_id: int) -> LMState:
        check_token_ids([token_id], self.dims.vocab_size)
        return self._state(self.cell.step(self.embedding[int(token_id)], state.hidden))

    def log_probs(self, y: Sequence[int]) -> Tensor:
        """Per-token log p(y_t | y_<t), shape [|y|]."""
        y = check_token_ids(y, self.dims.vocab_size)
        state = self.start()
        picked = []
        for index, token in enumerate(y):
            picked.append(state.log_probs[token])
            if index + 1 < len(y):
                state = self.step(state, token)
        return stack(picked)

    def lm_log_prob(self, y: Sequence[int]) -> Tensor:
        """log p(y); the empty sequence has probability one."""
        if not len(y):
            return Tensor(0.0)
        return self.log_probs(y).sum()
