"""
Corpus Loading.

Corpus file format: UTF-8, one dialogue per line, fields separated by a single
TAB. The last field is the response, preceding fields are context utterances
(oldest first). Tokens are separated by single spaces and no field is empty.

Only the two most recent context utterances are kept. Lines are kept in file
order so that consecutive lines of one conversation expose each response's
successor utterance.
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

from apps.corpus.exceptions import EmptyCorpus, ParseError
from apps.corpus.services.vocab import Vocab

logger = logging.getLogger(__name__)

MAX_CONTEXT_UTTERANCES = 2

TokenIds = Tuple[int, ...]


@dataclass(frozen=True)
class Dialogue:
    """
    Up to two context utterances plus one response, as token ids.
    """
    context: Tuple[TokenIds, ...]
    response: TokenIds
    successor: Optional[TokenIds] = None
    split: str = 'train'

    def __post_init__(self):
        if not self.response:
            raise ValueError("a dialogue needs a non-empty response")
        if len(self.context) > MAX_CONTEXT_UTTERANCES:
            raise ValueError(f"at most {MAX_CONTEXT_UTTERANCES} context utterances")

    @property
    def context_tokens(self) -> List[int]:
        """Context utterances concatenated into one stream."""
        return [token for utterance in self.context for token in utterance]

    def with_response(self, response: Sequence[int]) -> 'Dialogue':
        return replace(self, response=tuple(response), successor=None)


def parse_line(line: str, line_no: int) -> Tuple[List[List[str]], List[str]]:
    """
    Split one corpus line into context utterances and response tokens.

    Raises:
        ParseError: empty line, empty field, or empty token
    """
    text = line.rstrip('\n').rstrip('\r')
    if not text:
        raise ParseError(line_no, 'empty line')
    fields = text.split('\t')
    utterances = []
    for field_text in fields:
        if not field_text:
            raise ParseError(line_no, 'empty field')
        tokens = field_text.split(' ')
        if any(token == '' for token in tokens):
            raise ParseError(line_no, 'tokens must be separated by single spaces')
        utterances.append(tokens)
    *context, response = utterances
    return context[-MAX_CONTEXT_UTTERANCES:], response


def format_line(context: Iterable[Sequence[str]], response: Sequence[str]) -> str:
    fields = [' '.join(utterance) for utterance in context] + [' '.join(response)]
    return '\t'.join(fields) + '\n'


def attach_successors(dialogues: Sequence[Dialogue]) -> List[Dialogue]:
    """
    Record the utterance that immediately follows each response.

    Dialogue i+1 continues dialogue i when its latest context utterance is
    dialogue i's response; its response is then i's successor.
    """
    linked = []
    for index, dialogue in enumerate(dialogues):
        successor = None
        if index + 1 < len(dialogues):
            following = dialogues[index + 1]
            if following.context and following.context[-1] == dialogue.response:
                successor = following.response
        linked.append(replace(dialogue, successor=successor))
    return linked


def load_corpus(
    path,
    vocab: Optional[Vocab] = None,
    heldout_fraction: float = 0.0,
) -> Tuple[List[Dialogue], Vocab]:
    """
    Read a corpus file into tokenized dialogues.

    Args:
        path: corpus file
        vocab: existing vocabulary; when omitted one is built from the
            training split only
        heldout_fraction: trailing share of lines marked as held-out

    Returns:
        (dialogues in file order, vocabulary)
    """
    path = Path(path)
    raw = []
    with path.open(encoding='utf-8') as handle:
        for line_no, line in enumerate(handle, start=1):
            raw.append(parse_line(line, line_no))
    if not raw:
        raise EmptyCorpus(path)

    heldout = int(round(len(raw) * heldout_fraction))
    boundary = len(raw) - heldout
    if vocab is None:
        vocab = Vocab.build(
            tokens
            for context, response in raw[:boundary]
            for tokens in (*context, response)
        )

    dialogues = [
        Dialogue(
            context=tuple(tuple(vocab.encode(u)) for u in context),
            response=tuple(vocab.encode(response)),
            split='train' if index < boundary else 'heldout',
        )
        for index, (context, response) in enumerate(raw)
    ]
    logger.info(f"Loaded {len(dialogues)} dialogues from {path} ({heldout} held out)")
    return attach_successors(dialogues), vocab


def train_split(dialogues: Iterable[Dialogue]) -> List[Dialogue]:
    return [d for d in dialogues if d.split == 'train']


def heldout_split(dialogues: Iterable[Dialogue]) -> List[Dialogue]:
    return [d for d in dialogues if d.split == 'heldout']


def write_corpus(path, lines: Iterable[Tuple[Sequence[Sequence[str]], Sequence[str]]]) -> Path:
    """Write (context utterances, response) pairs in corpus format."""
    path = Path(path)
    with path.open('w', encoding='utf-8', newline='\n') as handle:
        for context, response in lines:
            handle.write(format_line(context, response))
    return path
