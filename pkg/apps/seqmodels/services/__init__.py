from .layers import GRUCell, ModelDims, ParameterSet, SequenceModel
from .generator import DecoderState, GeneratorModel, strip_eos, with_eos
from .discriminator import (
    HUMAN,
    MACHINE,
    CriticModel,
    DiscriminatorModel,
    HierarchicalEncoder,
    episode,
)
from .language_model import LanguageModel
from .checkpoint import (
    EVALUATOR_BACKWARD_PREFIX,
    EVALUATOR_GENERATOR_PREFIX,
    EVALUATOR_PREFIX,
    MODEL_KINDS,
    Checkpoint,
    assert_disjoint,
    in_evaluator_namespace,
    load_checkpoint,
    load_model,
    save_checkpoint,
)

__all__ = [
    'GRUCell',
    'ModelDims',
    'ParameterSet',
    'SequenceModel',
    'DecoderState',
    'GeneratorModel',
    'strip_eos',
    'with_eos',
    'HUMAN',
    'MACHINE',
    'CriticModel',
    'DiscriminatorModel',
    'HierarchicalEncoder',
    'episode',
    'LanguageModel',
    'EVALUATOR_BACKWARD_PREFIX',
    'EVALUATOR_GENERATOR_PREFIX',
    'EVALUATOR_PREFIX',
    'MODEL_KINDS',
    'Checkpoint',
    'assert_disjoint',
    'in_evaluator_namespace',
    'load_checkpoint',
    'load_model',
    'save_checkpoint',
]
