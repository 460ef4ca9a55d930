"""
Training exceptions.
"""


class TrainingError(RuntimeError):
    """Base class for training failures."""


class Diverged(TrainingError):
    def __init__(self, step: int, quantity: str = 'loss', last_good=None):
        self.step = step
        self.quantity = quantity
        self.last_good = last_good
        super().__init__(f"Diverged({step}): non-finite {quantity}")


class InvalidSchedule(TrainingError):
    def __init__(self, reason: str):
        super().__init__(f"InvalidSchedule: {reason}")
