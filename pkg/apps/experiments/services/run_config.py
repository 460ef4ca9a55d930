"""
Run Configuration.

A run config is a flat text file of ``key = value`` lines with dotted
section prefixes; ``#`` starts a comment line:

    # small smoke run
    model.hidden = 16
    train.d_steps = 5
    decode.strategy = beam

Unset keys take their defaults from Django settings. The canonical form is
the sorted ``key = value`` lines of the validated values; the config hash is
the SHA-256 of that text, leaving out the output directory and ``paths.*``
so the same experiment hashes the same wherever its files live.
"""

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple

from django.conf import settings

from apps.decoding.services import BEAM, DecodeConfig
from apps.evaluation.services import HIER_NEURAL, EvaluatorSpec
from apps.experiments.exceptions import ConfigError
from apps.experiments.serializers import RunConfigSerializer, config_key, field_name
from apps.seqmodels.services import ModelDims
from apps.training.services import CONSTANT_ONE, REINFORCE, TrainSchedule

logger = logging.getLogger(__name__)

UNHASHED_KEYS = ('out',)
UNHASHED_PREFIXES = ('paths.',)


def default_values() -> Dict[str, Any]:
    """Every config key with its default, read from settings at call time."""
    return {
        'seed': getattr(settings, 'LAB_SEED', 1),
        'out': str(getattr(settings, 'LAB_RUNS_DIR', 'runs')),
        'paths.corpus': '',

        'corpus.n': getattr(settings, 'LAB_SYNTH_DIALOGUES', 200),
        'corpus.heldout_fraction': getattr(settings, 'LAB_HELDOUT_FRACTION', 0.1),
        'corpus.min_length': getattr(settings, 'LAB_MIN_RESPONSE_LEN', 5),
        'corpus.tfidf_cap': getattr(settings, 'LAB_TFIDF_CAP', 3.0),

        'model.embed': getattr(settings, 'LAB_EMBED_SIZE', 16),
        'model.hidden': getattr(settings, 'LAB_HIDDEN_SIZE', 32),

        'pretrain.epochs': getattr(settings, 'LAB_PRETRAIN_EPOCHS', 5),
        'pretrain.batch_size': getattr(settings, 'LAB_BATCH_SIZE', 16),
        'pretrain.lr': getattr(settings, 'LAB_MLE_LR', 0.5),
        'pretrain.disc_epochs': getattr(settings, 'LAB_DISC_EPOCHS', 3),
        'pretrain.partial': False,

        'train.d_steps': getattr(settings, 'LAB_D_STEPS', 5),
        'train.g_steps': getattr(settings, 'LAB_G_STEPS', 1),
        'train.teacher_forcing': CONSTANT_ONE,
        'train.iterations': getattr(settings, 'LAB_ITERATIONS', 50),
        'train.mode': REINFORCE,
        'train.rollouts': getattr(settings, 'LAB_MC_ROLLOUTS', 5),
        'train.checkpoint_every': getattr(settings, 'LAB_CHECKPOINT_EVERY', 10),
        'train.clip_advantage': False,
        'train.rl_lr': getattr(settings, 'LAB_RL_LR', 0.01),
        'train.critic_lr': getattr(settings, 'LAB_CRITIC_LR', 0.05),
        'train.disc_lr': getattr(settings, 'LAB_DISC_LR', 0.1),
        'train.workers': getattr(settings, 'LAB_WORKERS', 1),

        'decode.strategy': BEAM,
        'decode.beam_width': getattr(settings, 'LAB_BEAM_WIDTH', 5),
        'decode.sibling_penalty': getattr(settings, 'LAB_SIBLING_PENALTY', 1.0),
        'decode.repeat_penalty': getattr(settings, 'LAB_REPEAT_PENALTY', 1.0),
        'decode.temperature': 1.0,
        'decode.mmi_weight': getattr(settings, 'LAB_MMI_WEIGHT', 0.5),
        'decode.anti_lm_weight': getattr(settings, 'LAB_ANTI_LM_WEIGHT', 0.1),
        'decode.max_len': getattr(settings, 'LAB_MAX_DECODE_LEN', 20),

        'eval.evaluator': HIER_NEURAL,
        'eval.epochs': getattr(settings, 'LAB_EVAL_EPOCHS', 5),
        'eval.seeds': [1, 2, 3, 4, 5],
        'eval.dialogues': getattr(settings, 'LAB_EVAL_DIALOGUES', 64),
    }


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ','.join(format_value(v) for v in value)
    return str(value)


def is_hashed(key: str) -> bool:
    return key not in UNHASHED_KEYS and not key.startswith(UNHASHED_PREFIXES)


@dataclass(frozen=True)
class RunConfig:
    values: Mapping[str, Any]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def seed(self) -> int:
        return self.values['seed']

    @property
    def out(self) -> Path:
        return Path(self.values['out'])

    @property
    def corpus_path(self) -> Optional[Path]:
        return Path(self.values['paths.corpus']) if self.values['paths.corpus'] else None

    def canonical_text(self, hashed_only: bool = True) -> str:
        keys = sorted(k for k in self.values if is_hashed(k) or not hashed_only)
        return ''.join(f"{key} = {format_value(self.values[key])}\n" for key in keys)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode('utf-8')).hexdigest()

    def to_text(self) -> str:
        """Config file body as stored in a run directory (no output path)."""
        return ''.join(
            f"{key} = {format_value(self.values[key])}\n"
            for key in sorted(self.values) if key not in UNHASHED_KEYS
        )

    # ------------------------------------------------------------------
    # Views for the services
    # ------------------------------------------------------------------
    def model_dims(self, vocab_size: int) -> ModelDims:
        return ModelDims(vocab_size=vocab_size, embed_size=self['model.embed'], hidden_size=self['model.hidden'])

    def decode_config(self, **changes) -> DecodeConfig:
        values = {
            'strategy': self['decode.strategy'],
            'beam_width': self['decode.beam_width'],
            'sibling_penalty': self['decode.sibling_penalty'],
            'repeat_penalty': self['decode.repeat_penalty'],
            'temperature': self['decode.temperature'],
            'mmi_weight': self['decode.mmi_weight'],
            'anti_lm_weight': self['decode.anti_lm_weight'],
            'max_len': self['decode.max_len'],
        }
        values.update(changes)
        return DecodeConfig(**values)

    def schedule(self) -> TrainSchedule:
        return TrainSchedule(
            d_steps=self['train.d_steps'],
            g_steps=self['train.g_steps'],
            teacher_forcing=self['train.teacher_forcing'],
            iterations=self['train.iterations'],
            batch_size=self['pretrain.batch_size'],
            seed=self.seed,
            mode=self['train.mode'],
            rollouts=self['train.rollouts'],
            checkpoint_every=self['train.checkpoint_every'],
            clip_advantage=self['train.clip_advantage'],
            rl_lr=self['train.rl_lr'],
            critic_lr=self['train.critic_lr'],
            disc_lr=self['train.disc_lr'],
            max_len=self['decode.max_len'],
            workers=self['train.workers'],
        )

    def evaluator_spec(self, kind: Optional[str] = None) -> EvaluatorSpec:
        return EvaluatorSpec.for_kind(kind or self['eval.evaluator'])


# ----------------------------------------------------------------------
# Parsing
# ----------------------------------------------------------------------
def parse_config_text(text: str) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ConfigError(f"expected 'key = value', got {raw!r}", line_no)
        key, value = (part.strip() for part in line.split('=', 1))
        if not key:
            raise ConfigError('empty key', line_no)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", line_no)
        values[key] = value
    return values


def parse_override(text: str) -> Tuple[str, str]:
    if '=' not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, value = (part.strip() for part in text.split('=', 1))
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    return key, value


def build_run_config(values: Mapping[str, Any]) -> RunConfig:
    """Validate and coerce a complete value mapping."""
    serializer = RunConfigSerializer(data={field_name(k): v for k, v in values.items()})
    if not serializer.is_valid():
        problems = '; '.join(
            f"{config_key(name)}: {' '.join(str(e) for e in errors)}"
            for name, errors in serializer.errors.items()
        )
        raise ConfigError(problems)
    return RunConfig({config_key(name): value for name, value in serializer.validated_data.items()})


def load_run_config(
    path=None,
    overrides: Iterable[str] = (),
    seed: Optional[int] = None,
    out=None,
) -> RunConfig:
    """
    Defaults, then the config file, then ``--override`` pairs, then the
    ``--seed``/``--out`` flags.

    Raises:
        ConfigError: unreadable file, malformed line, unknown key or invalid value
    """
    values: Dict[str, Any] = default_values()
    layers = []
    if path is not None:
        try:
            text = Path(path).read_text(encoding='utf-8')
        except OSError as e:
            raise ConfigError(f"cannot read {path}: {e}") from e
        layers.append(parse_config_text(text))
    layers.append(dict(parse_override(o) for o in overrides))

    for layer in layers:
        unknown = sorted(set(layer) - set(values))
        if unknown:
            raise ConfigError(f"unknown keys: {', '.join(unknown)}")
        values.update(layer)
    if seed is not None:
        values['seed'] = seed
    if out is not None:
        values['out'] = str(out)

    config = build_run_config(values)
    logger.debug(f"Run config {config.hash[:12]} loaded")
    return config
