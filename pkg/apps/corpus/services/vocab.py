"""
Vocabulary.

Token ids 0..3 are reserved (PAD, BOS, EOS, UNK); the remaining ids are
assigned by descending frequency with ties broken alphabetically, so the
same training lines always give the same ids.
"""

import hashlib
import logging
from collections import Counter
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Sequence

logger = logging.getLogger(__name__)

PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
RESERVED_TOKENS = ('<pad>', '<bos>', '<eos>', '<unk>')

# Function words and punctuation ignored by tf-idf scoring and by the
# repeated-word-type penalty.
STOP_WORDS: FrozenSet[str] = frozenset({
    'a', 'about', 'all', 'am', 'an', 'and', 'are', 'as', 'at', 'be',
    'but', 'by', 'can', 'did', 'do', 'for', 'from', 'had', 'has', 'have',
    'he', 'her', 'his', 'i', 'if', 'in', 'is', 'it', 'me', 'my',
    'no', 'not', 'of', 'on', 'or', 'she', 'so', 'that', 'the', 'there',
    'they', 'this', 'to', 'very', 'was', 'we', 'what', 'with', 'you', 'your',
    '.', ',', '?', '!',
})


class Vocab:
    """
    Shared token <-> id mapping with stop-word flags.
    """

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[:len(RESERVED_TOKENS)]) != RESERVED_TOKENS:
            tokens = list(RESERVED_TOKENS) + [t for t in tokens if t not in RESERVED_TOKENS]
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be distinct")
        self.tokens: List[str] = tokens
        self._ids: Dict[str, int] = {token: index for index, token in enumerate(tokens)}
        self.stop_word_flags: List[bool] = [
            index >= len(RESERVED_TOKENS) and token in STOP_WORDS
            for index, token in enumerate(tokens)
        ]

    @classmethod
    def build(cls, utterances: Iterable[Sequence[str]]) -> 'Vocab':
        counts = Counter()
        for utterance in utterances:
            counts.update(utterance)
        for reserved in RESERVED_TOKENS:
            counts.pop(reserved, None)
        ordered = sorted(counts, key=lambda token: (-counts[token], token))
        logger.debug(f"Built vocabulary with {len(ordered)} word types")
        return cls(list(RESERVED_TOKENS) + ordered)

    # ------------------------------------------------------------------
    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def token_to_id(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def id_to_token(self, token_id: int) -> str:
        return self.tokens[token_id]

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self.token_to_id(token) for token in tokens]

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.tokens[int(i)] for i in ids]

    def is_stop(self, token_id: int) -> bool:
        return self.stop_word_flags[token_id]

    @property
    def stop_ids(self) -> FrozenSet[int]:
        return frozenset(i for i, flag in enumerate(self.stop_word_flags) if flag)

    # ------------------------------------------------------------------
    def to_text(self) -> str:
        """Vocab file body: one non-reserved token per line."""
        return ''.join(f"{token}\n" for token in self.tokens[len(RESERVED_TOKENS):])

    @property
    def hash(self) -> str:
        return hashlib.sha256('\n'.join(self.tokens).encode('utf-8')).hexdigest()

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_text(), encoding='utf-8')
        return path

    @classmethod
    def load(cls, path) -> 'Vocab':
        lines = Path(path).read_text(encoding='utf-8').split('\n')
        if lines and lines[-1] == '':
            lines.pop()
        return cls(list(RESERVED_TOKENS) + lines)
