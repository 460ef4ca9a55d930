"""
Decoding Runs and Decode Files.

Decode file: one line per context,

    context tokens TAB response tokens TAB score (6 decimal places)

where the context is the concatenated token stream the generator reads and
the response excludes EOS.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple

from apps.corpus.services import Vocab
from apps.decoding.exceptions import DecodingError
from apps.decoding.services.config import (
    ANTI_LM,
    BEAM,
    GREEDY,
    MMI_BACKWARD,
    SAMPLE,
    DecodeConfig,
)
from apps.decoding.services.mmi import mmi_backward_rerank
from apps.decoding.services.search import (
    anti_lm_decode,
    beam_search,
    greedy_decode,
    sample_decode,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecodedResponse:
    context: Tuple[int, ...]
    response: Tuple[int, ...]
    score: float


def decode_one(
    generator,
    context: Sequence[int],
    config: DecodeConfig,
    seed: int = 0,
    *,
    stop_ids: FrozenSet[int],
    backward_generator=None,
    lm=None,
) -> DecodedResponse:
    """
    Best response for one context under ``config.strategy``.

    ``stop_ids`` are the stop-word ids the beam repeat penalty ignores; greedy
    and sampling decodes do not use them.
    """
    strategy = config.strategy
    if strategy == GREEDY:
        best = greedy_decode(generator, context, config.max_len)
        return DecodedResponse(tuple(context), tuple(best.response), best.score)
    if strategy == SAMPLE:
        best = sample_decode(generator, context, config.temperature, seed, config.max_len)
        return DecodedResponse(tuple(context), tuple(best.response), best.score)
    if strategy == BEAM:
        best = beam_search(generator, context, config, stop_ids=stop_ids)[0]
        return DecodedResponse(tuple(context), tuple(best.response), best.score)
    if strategy == MMI_BACKWARD:
        if backward_generator is None:
            raise DecodingError("mmi_backward decoding needs a backward generator")
        nbest = beam_search(generator, context, config, stop_ids=stop_ids)
        top = mmi_backward_rerank(nbest, backward_generator, context, config.mmi_weight)[0]
        return DecodedResponse(tuple(context), tuple(top.hypothesis.response), top.score)
    if strategy == ANTI_LM:
        if lm is None:
            raise DecodingError("anti_lm decoding needs a language model")
        best = anti_lm_decode(generator, lm, context, config.anti_lm_weight, config, stop_ids=stop_ids)
        return DecodedResponse(tuple(context), tuple(best.response), best.score)
    raise DecodingError(f"unknown strategy {strategy!r}")


def decode_contexts(
    generator,
    contexts: Iterable[Sequence[int]],
    config: DecodeConfig,
    seed: int = 0,
    *,
    stop_ids: FrozenSet[int],
    **models,
) -> List[DecodedResponse]:
    """Decode every context; sampling uses seed + position for context i."""
    decoded = [
        decode_one(generator, context, config, seed=seed + index, stop_ids=stop_ids, **models)
        for index, context in enumerate(contexts)
    ]
    logger.debug(f"Decoded {len(decoded)} contexts with strategy {config.strategy}")
    return decoded


def format_decode_line(vocab: Vocab, decoded: DecodedResponse) -> str:
    context = ' '.join(vocab.decode(decoded.context))
    response = ' '.join(vocab.decode(decoded.response))
    return f"{context}\t{response}\t{decoded.score:.6f}\n"


def write_decodes(path, vocab: Vocab, decoded: Iterable[DecodedResponse]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', encoding='utf-8', newline='\n') as handle:
        for item in decoded:
            handle.write(format_decode_line(vocab, item))
    return path


def read_decodes(path) -> List[Tuple[List[str], List[str], float]]:
    """Parse a decode file; raises DecodingError on a malformed line."""
    rows = []
    with Path(path).open(encoding='utf-8') as handle:
        for line_no, line in enumerate(handle, start=1):
            fields = line.rstrip('\n').split('\t')
            if len(fields) != 3 or not fields[1]:
                raise DecodingError(f"decode file line {line_no}: expected context, response, score")
            try:
                score = float(fields[2])
            except ValueError as e:
                raise DecodingError(f"decode file line {line_no}: bad score {fields[2]!r}") from e
            context = fields[0].split(' ') if fields[0] else []
            rows.append((context, fields[1].split(' '), score))
    return rows
