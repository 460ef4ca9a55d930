"""
Decoding exceptions.
"""


class DecodingError(ValueError):
    """Base class for invalid decoding requests."""


class InvalidDecodeConfig(DecodingError):
    def __init__(self, field: str, reason: str):
        self.field = field
        super().__init__(f"InvalidDecodeConfig({field}): {reason}")
