"""
Corpus exceptions.
"""


class CorpusError(ValueError):
    """Base class for corpus ingestion errors."""


class ParseError(CorpusError):
    def __init__(self, line_no: int, reason: str = 'malformed line'):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"ParseError({line_no}): {reason}")


class EmptyCorpus(CorpusError):
    def __init__(self, path=None):
        self.path = path
        super().__init__(f"EmptyCorpus: {path or 'no dialogues'}")
