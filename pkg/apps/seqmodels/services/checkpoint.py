"""
Checkpoint Files.

A checkpoint is one JSON document:

    {
      "format_version": 1,
      "kind": "generator" | "discriminator" | "critic" | "lm",
      "prefix": parameter namespace,
      "dims": {"vocab_size", "embed_size", "hidden_size"},
      "seed": int,
      "vocab_hash": sha256 of the vocabulary,
      "config_hash": sha256 of the run configuration,
      "parameters": {name: {"shape": [...], "values": [...row-major...]}},
      "extra": {...}
    }

Floats are written with their shortest round-trip repr, so saving the same
model twice gives byte-identical files.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Type

import numpy as np

from apps.seqmodels.exceptions import CheckpointFormatError, SharedParameters, VocabMismatch
from apps.seqmodels.services.discriminator import CriticModel, DiscriminatorModel
from apps.seqmodels.services.generator import GeneratorModel
from apps.seqmodels.services.language_model import LanguageModel
from apps.seqmodels.services.layers import ModelDims, SequenceModel

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

MODEL_KINDS: Dict[str, Type[SequenceModel]] = {
    GeneratorModel.kind: GeneratorModel,
    DiscriminatorModel.kind: DiscriminatorModel,
    CriticModel.kind: CriticModel,
    LanguageModel.kind: LanguageModel,
}

EVALUATOR_PREFIX = 'evaluator'
EVALUATOR_GENERATOR_PREFIX = f"{EVALUATOR_PREFIX}-generator"
EVALUATOR_BACKWARD_PREFIX = f"{EVALUATOR_PREFIX}-backward"


@dataclass
class Checkpoint:
    kind: str
    prefix: str
    dims: ModelDims
    seed: int
    vocab_hash: str
    config_hash: str
    parameters: Dict[str, np.ndarray]
    extra: Dict[str, Any] = field(default_factory=dict)

    def build(self) -> SequenceModel:
        model_cls = MODEL_KINDS[self.kind]
        model = model_cls(self.dims, seed=self.seed, prefix=self.prefix)
        model.load_state_dict(self.parameters)
        return model


def to_document(model: SequenceModel, vocab_hash: str, config_hash: str, extra: Optional[dict] = None) -> dict:
    return {
        'format_version': FORMAT_VERSION,
        'kind': model.kind,
        'prefix': model.prefix,
        'dims': model.dims.to_dict(),
        'seed': model.seed,
        'vocab_hash': vocab_hash,
        'config_hash': config_hash,
        'parameters': {
            name: {'shape': list(tensor.shape), 'values': tensor.values}
            for name, tensor in model.named_parameters()
        },
        'extra': extra or {},
    }


def save_checkpoint(path, model: SequenceModel, vocab_hash: str, config_hash: str, extra: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = to_document(model, vocab_hash, config_hash, extra)
    path.write_text(json.dumps(document, sort_keys=True, separators=(',', ':')) + '\n', encoding='utf-8')
    logger.info(f"Saved {model.kind} checkpoint ({len(model.params)} tensors) to {path}")
    return path


def load_checkpoint(path, expected_vocab_hash: Optional[str] = None) -> Checkpoint:
    """
    Read a checkpoint file.

    Raises:
        CheckpointFormatError: unreadable file, wrong version, unknown kind,
            or a parameter whose values do not match its shape
        VocabMismatch: ``expected_vocab_hash`` differs from the stored hash
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding='utf-8'))
    except (OSError, ValueError) as e:
        raise CheckpointFormatError(path, str(e)) from e

    if document.get('format_version') != FORMAT_VERSION:
        raise CheckpointFormatError(path, f"unsupported format_version {document.get('format_version')!r}")
    kind = document.get('kind')
    if kind not in MODEL_KINDS:
        raise CheckpointFormatError(path, f"unknown kind {kind!r}")
    if expected_vocab_hash is not None and document.get('vocab_hash') != expected_vocab_hash:
        raise VocabMismatch(expected_vocab_hash, str(document.get('vocab_hash')))

    parameters = {}
    for name, entry in document.get('parameters', {}).items():
        shape = tuple(entry['shape'])
        values = np.asarray(entry['values'], dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise CheckpointFormatError(path, f"{name}: {values.size} values for shape {shape}")
        if not np.all(np.isfinite(values)):
            raise CheckpointFormatError(path, f"{name}: non-finite values")
        parameters[name] = values.reshape(shape)

    return Checkpoint(
        kind=kind,
        prefix=document['prefix'],
        dims=ModelDims(**document['dims']),
        seed=int(document.get('seed', 0)),
        vocab_hash=document['vocab_hash'],
        config_hash=document['config_hash'],
        parameters=parameters,
        extra=document.get('extra', {}),
    )


def load_model(path, expected_vocab_hash: Optional[str] = None) -> SequenceModel:
    return load_checkpoint(path, expected_vocab_hash).build()


def in_evaluator_namespace(prefix: str) -> bool:
    return prefix == EVALUATOR_PREFIX or prefix.startswith(f"{EVALUATOR_PREFIX}-")


def assert_disjoint(first: Iterable[str], second: Iterable[str]) -> None:
    """Evaluator and trainer parameter names must never overlap."""
    shared = set(first) & set(second)
    if shared:
        raise SharedParameters(shared)
