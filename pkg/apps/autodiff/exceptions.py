"""
Autodiff exceptions.
"""


class AutodiffError(ValueError):
    """Base class for errors raised by the tensor engine."""


class EmptyLogits(AutodiffError):
    def __init__(self):
        super().__init__("EmptyLogits: softmax needs at least one logit")


class TokenOutOfVocab(AutodiffError):
    def __init__(self, token_id: int, vocab_size: int):
        self.token_id = token_id
        self.vocab_size = vocab_size
        super().__init__(f"TokenOutOfVocab: id {token_id} not in [0, {vocab_size})")


class NonScalarLoss(AutodiffError):
    def __init__(self, shape):
        self.shape = tuple(shape)
        super().__init__(f"NonScalarLoss: backward needs a scalar, got shape {self.shape}")


class NonDeterministicFunction(AutodiffError):
    def __init__(self, first: float, second: float):
        super().__init__(
            f"NonDeterministicFunction: repeated evaluations gave {first!r} and {second!r}"
        )


class InvalidEpsilon(AutodiffError):
    def __init__(self, eps: float):
        super().__init__(f"InvalidEpsilon: eps must be > 0, got {eps!r}")
