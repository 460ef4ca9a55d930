"""
Evaluator Family.

Binary classifiers labelling a dialogue episode (context, response) as
human-generated (positive) or machine-generated (negative):

- UNIGRAM_LINEAR: bag of unigrams, hinge loss with L2 regularisation
- CONCAT_NEURAL: one recurrent encoder over the concatenated episode
- HIER_NEURAL: word-level then utterance-level recurrent encoder
- COMBINED_LINEAR: unigrams, the hierarchical representation, and the
  per-token forward log p(y|x) and backward log p(x|y) likelihoods

Every model an evaluator owns (its encoders and, for COMBINED_LINEAR, the
feature generators) lives in the evaluator namespace, and training checks
that none of its parameter names is also a trainer parameter.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
from django.conf import settings

from apps.autodiff.services import no_grad
from apps.corpus.services import EOS_ID
from apps.decoding.services import backward_score
from apps.evaluation.exceptions import DegenerateTrainingSet, EvaluationError, InvalidEvaluatorSpec
from apps.seqmodels.services import (
    EVALUATOR_PREFIX,
    HUMAN,
    MACHINE,
    DiscriminatorModel,
    ModelDims,
    assert_disjoint,
    in_evaluator_namespace,
    with_eos,
)
from apps.training.services import discriminator_step
from apps.training.services.pretrain import BATCH_SIZE

logger = logging.getLogger(__name__)

EVAL_EPOCHS = getattr(settings, 'LAB_EVAL_EPOCHS', 5)
HINGE_L2 = getattr(settings, 'LAB_HINGE_L2', 1e-3)
LINEAR_LR = getattr(settings, 'LAB_LINEAR_LR', 0.1)
NEURAL_LR = getattr(settings, 'LAB_DISC_LR', 0.1)

UNIGRAM_LINEAR, CONCAT_NEURAL, HIER_NEURAL, COMBINED_LINEAR = (
    'UNIGRAM_LINEAR', 'CONCAT_NEURAL', 'HIER_NEURAL', 'COMBINED_LINEAR',
)
EVALUATOR_KINDS = (UNIGRAM_LINEAR, CONCAT_NEURAL, HIER_NEURAL, COMBINED_LINEAR)

Episode = Tuple[Tuple[Tuple[int, ...], ...], Tuple[int, ...]]


@dataclass(frozen=True)
class EvaluatorSpec:
    kind: str
    unigram: bool = False
    neural: bool = False
    forward_likelihood: bool = False
    backward_likelihood: bool = False

    def __post_init__(self):
        if self.kind not in EVALUATOR_KINDS:
            raise InvalidEvaluatorSpec(f"kind must be one of {', '.join(EVALUATOR_KINDS)}")
        flags = (self.unigram, self.neural, self.forward_likelihood, self.backward_likelihood)
        if self.kind == COMBINED_LINEAR and not all(flags):
            raise InvalidEvaluatorSpec("COMBINED_LINEAR needs unigram, neural, forward and backward features")

    @classmethod
    def for_kind(cls, kind: str) -> 'EvaluatorSpec':
        if kind == UNIGRAM_LINEAR:
            return cls(kind, unigram=True)
        if kind == COMBINED_LINEAR:
            return cls(kind, unigram=True, neural=True, forward_likelihood=True, backward_likelihood=True)
        return cls(kind, neural=True)

    @property
    def needs_generators(self) -> bool:
        return self.forward_likelihood or self.backward_likelihood


class Evaluator:
    """P(human | episode) with a 0.5 decision threshold."""
    kind = 'base'

    def probability(self, context, response) -> float:
        raise NotImplementedError("Subclass must implement probability()")

    def predict(self, context, response) -> int:
        return HUMAN if self.probability(context, response) > 0.5 else MACHINE

    def models(self) -> list:
        """Parameterised models this evaluator owns."""
        return []

    @property
    def parameter_names(self) -> Set[str]:
        return {name for model in self.models() for name in model.params.names}


class ConstantEvaluator(Evaluator):
    """Always gives the same label."""
    kind = 'CONSTANT'

    def __init__(self, label: int = HUMAN):
        self.label = label

    def probability(self, context, response) -> float:
        return 1.0 if self.label == HUMAN else 0.0

    def predict(self, context, response) -> int:
        return self.label


# ----------------------------------------------------------------------
# Neural evaluators
# ----------------------------------------------------------------------
def concatenated(context, response) -> Tuple[Tuple[int, ...], ...]:
    """The episode as a single utterance, EOS between turns."""
    tokens = []
    for utterance in context:
        if len(utterance):
            tokens.extend(utterance)
            tokens.append(EOS_ID)
    tokens.extend(response)
    return (), tuple(tokens)


class NeuralEvaluator(Evaluator):

    def __init__(self, model: DiscriminatorModel, concat: bool = False):
        self.model = model
        self.concat = concat
        self.kind = CONCAT_NEURAL if concat else HIER_NEURAL

    def models(self) -> list:
        return [self.model]

    def _view(self, context, response):
        return concatenated(context, response) if self.concat else (context, response)

    def probability(self, context, response) -> float:
        with no_grad():
            return self.model.score(*self._view(context, response))

    def representation(self, context, response) -> np.ndarray:
        with no_grad():
            return self.model.represent(*self._view(context, response)).data.copy()

    def fit(self, positives: Sequence[Episode], negatives: Sequence[Episode], seed: int,
            epochs: int = EVAL_EPOCHS, batch_size: int = BATCH_SIZE, lr: float = NEURAL_LR) -> 'NeuralEvaluator':
        examples = [(self._view(*e), HUMAN) for e in positives] + [(self._view(*e), MACHINE) for e in negatives]
        rng = np.random.default_rng(seed)
        for _ in range(epochs):
            order = rng.permutation(len(examples))
            for start in range(0, len(order), batch_size):
                batch = [examples[i] for i in order[start:start + batch_size]]
                discriminator_step(
                    self.model,
                    [episode for episode, label in batch if label == HUMAN],
                    [episode for episode, label in batch if label == MACHINE],
                    lr=lr,
                )
        return self


# ----------------------------------------------------------------------
# Linear evaluators
# ----------------------------------------------------------------------
class FeatureExtractor:
    """Concatenates the feature blocks switched on in an EvaluatorSpec."""

    def __init__(self, spec: EvaluatorSpec, vocab_size: int, encoder: Optional[NeuralEvaluator] = None,
                 forward=None, backward=None):
        if spec.neural and encoder is None:
            raise EvaluationError("neural features need a trained hierarchical evaluator")
        if spec.forward_likelihood and forward is None:
            raise EvaluationError("forward likelihood features need a forward generator")
        if spec.backward_likelihood and backward is None:
            raise EvaluationError("backward likelihood features need a backward generator")
        self.spec = spec
        self.vocab_size = vocab_size
        self.encoder = encoder
        self.forward = forward
        self.backward = backward

    def models(self) -> list:
        encoder = [self.encoder.model] if self.encoder is not None else []
        return encoder + [m for m in (self.forward, self.backward) if m is not None]

    def _bag(self, tokens: Sequence[int]) -> np.ndarray:
        bag = np.zeros(self.vocab_size)
        for token in tokens:
            bag[int(token)] += 1.0
        return bag / max(len(tokens), 1)

    def __call__(self, context, response) -> np.ndarray:
        context_tokens = [token for utterance in context for token in utterance]
        blocks: List[np.ndarray] = []
        if self.spec.unigram:
            blocks.append(self._bag(response))
            blocks.append(self._bag(context_tokens))
        if self.spec.neural:
            blocks.append(self.encoder.representation(context, response))
        if self.spec.forward_likelihood:
            y = with_eos(response)
            with no_grad():
                forward = float(self.forward.log_probs(context_tokens, y).data.sum()) / len(y)
            blocks.append(np.array([forward]))
        if self.spec.backward_likelihood:
            blocks.append(np.array([backward_score(self.backward, context_tokens, response)]))
        return np.concatenate(blocks)


class LinearEvaluator(Evaluator):
    """
    Linear classifier on standardised features trained by SGD on the
    L2-regularised hinge loss, labels in {-1, +1}.
    """

    def __init__(self, kind: str, features: Callable[[Sequence, Sequence], np.ndarray]):
        self.kind = kind
        self.features = features
        self.weights: Optional[np.ndarray] = None
        self.bias = 0.0
        self.mean: Optional[np.ndarray] = None
        self.scale: Optional[np.ndarray] = None

    def models(self) -> list:
        return self.features.models() if isinstance(self.features, FeatureExtractor) else []

    def _standardise(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.scale

    def margin(self, context, response) -> float:
        if self.weights is None:
            raise EvaluationError("evaluator is not trained")
        return float(self.weights @ self._standardise(self.features(context, response)) + self.bias)

    def probability(self, context, response) -> float:
        margin = self.margin(context, response)
        return 1.0 / (1.0 + math.exp(-margin)) if margin > -700 else 0.0

    def predict(self, context, response) -> int:
        return HUMAN if self.margin(context, response) > 0 else MACHINE

    def fit(self, positives: Sequence[Episode], negatives: Sequence[Episode], seed: int,
            epochs: int = EVAL_EPOCHS, lr: float = LINEAR_LR, l2: float = HINGE_L2) -> 'LinearEvaluator':
        X = np.array([self.features(*e) for e in list(positives) + list(negatives)])
        y = np.concatenate([np.ones(len(positives)), -np.ones(len(negatives))])
        self.mean = X.mean(axis=0)
        self.scale = np.where(X.std(axis=0) > 0, X.std(axis=0), 1.0)
        X = self._standardise(X)

        self.weights, self.bias = np.zeros(X.shape[1]), 0.0
        rng = np.random.default_rng(seed)
        t = 0
        # each epoch covers the data several times so small sets still converge
        for _ in range(epochs * 4):
            for i in rng.permutation(len(y)):
                t += 1
                rate = lr / (1.0 + lr * l2 * t)
                if y[i] * (self.weights @ X[i] + self.bias) < 1.0:
                    self.weights = (1.0 - rate * l2) * self.weights + rate * y[i] * X[i]
                    self.bias += rate * y[i]
                else:
                    self.weights = (1.0 - rate * l2) * self.weights
        return self


# ----------------------------------------------------------------------
# Training entry point
# ----------------------------------------------------------------------
def train_evaluator(
    spec: EvaluatorSpec,
    positives: Sequence[Episode],
    negatives: Sequence[Episode],
    dims: ModelDims,
    seed: int = 0,
    forward=None,
    backward=None,
    epochs: int = EVAL_EPOCHS,
    batch_size: int = BATCH_SIZE,
    trainer_names: Iterable[str] = (),
) -> Evaluator:
    """
    Train a fresh evaluator of ``spec.kind``; deterministic per seed.

    ``forward`` and ``backward`` are the COMBINED_LINEAR feature generators;
    they must be evaluator-side models, trained apart from the generator
    under evaluation. ``trainer_names`` are the parameter names of every
    trainer model the evaluator must stay independent of.

    Raises:
        DegenerateTrainingSet: either class is empty
        EvaluationError: a feature generator lives outside the evaluator namespace
        SharedParameters: the evaluator holds a trainer parameter
    """
    if not positives or not negatives:
        raise DegenerateTrainingSet(len(positives), len(negatives))
    outside = [m.prefix for m in (forward, backward) if m is not None and not in_evaluator_namespace(m.prefix)]
    if outside:
        raise EvaluationError(f"feature generators must be evaluator models, got prefix {', '.join(outside)}")

    def hierarchical() -> NeuralEvaluator:
        model = DiscriminatorModel(dims, seed=seed, prefix=EVALUATOR_PREFIX)
        return NeuralEvaluator(model).fit(positives, negatives, seed, epochs, batch_size)

    if spec.kind == HIER_NEURAL:
        evaluator = hierarchical()
    elif spec.kind == CONCAT_NEURAL:
        model = DiscriminatorModel(dims, seed=seed, prefix=EVALUATOR_PREFIX)
        evaluator = NeuralEvaluator(model, concat=True).fit(positives, negatives, seed, epochs, batch_size)
    else:
        encoder = hierarchical() if spec.neural else None
        features = FeatureExtractor(spec, dims.vocab_size, encoder, forward, backward)
        evaluator = LinearEvaluator(spec.kind, features).fit(positives, negatives, seed, epochs)

    assert_disjoint(evaluator.parameter_names, trainer_names)
    logger.debug(f"Trained {spec.kind} evaluator on {len(positives)}+{len(negatives)} episodes")
    return evaluator


def evaluator_factory(spec: EvaluatorSpec, dims: ModelDims, forward=None, backward=None,
                      epochs: int = EVAL_EPOCHS, batch_size: int = BATCH_SIZE, trainer_names: Iterable[str] = ()):
    """factory(positives, negatives, seed) -> trained evaluator."""
    trainer_names = frozenset(trainer_names)

    def build(positives, negatives, seed):
        return train_evaluator(spec, positives, negatives, dims, seed, forward, backward, epochs, batch_size,
                               trainer_names)
    build.kind = spec.kind
    return build
