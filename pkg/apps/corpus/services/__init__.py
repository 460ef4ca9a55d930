from .vocab import (
    PAD_ID,
    BOS_ID,
    EOS_ID,
    UNK_ID,
    RESERVED_TOKENS,
    STOP_WORDS,
    Vocab,
)
from .loader import (
    Dialogue,
    parse_line,
    format_line,
    load_corpus,
    write_corpus,
    train_split,
    heldout_split,
)
from .tricks import (
    IdfTable,
    LearningRateSchedule,
    filter_min_length,
    weighted_rates,
    tfidf_weighted_rates,
)
from .grammar import DialogueGrammar, grammar, grammar_vocab, synth_corpus

__all__ = [
    'PAD_ID',
    'BOS_ID',
    'EOS_ID',
    'UNK_ID',
    'RESERVED_TOKENS',
    'STOP_WORDS',
    'Vocab',
    'Dialogue',
    'parse_line',
    'format_line',
    'load_corpus',
    'write_corpus',
    'train_split',
    'heldout_split',
    'IdfTable',
    'LearningRateSchedule',
    'filter_min_length',
    'weighted_rates',
    'tfidf_weighted_rates',
    'DialogueGrammar',
    'grammar',
    'grammar_vocab',
    'synth_corpus',
]
