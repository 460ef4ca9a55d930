"""
Evaluation exceptions.
"""


class EvaluationError(ValueError):
    """Base class for evaluator and scenario failures."""


class DegenerateTrainingSet(EvaluationError):
    def __init__(self, positives: int, negatives: int):
        self.positives = positives
        self.negatives = negatives
        super().__init__(f"DegenerateTrainingSet: {positives} positives, {negatives} negatives")


class NoSuccessorAvailable(EvaluationError):
    def __init__(self):
        super().__init__("NoSuccessorAvailable: no dialogue has a following utterance")


class MissingMachineOutputs(EvaluationError):
    def __init__(self, scenario: str):
        super().__init__(f"MissingMachineOutputs: {scenario} needs machine-generated responses")


class InvalidEvaluatorSpec(EvaluationError):
    def __init__(self, reason: str):
        super().__init__(f"InvalidEvaluatorSpec: {reason}")
