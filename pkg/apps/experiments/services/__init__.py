from .run_config import (
    RunConfig,
    build_run_config,
    default_values,
    format_value,
    load_run_config,
    parse_config_text,
    parse_override,
)
from .rundir import (
    ADVERSARIAL_DIR,
    CHECKPOINT_DIR,
    CONFIG_FILE,
    CORPUS_FILE,
    DECODE_DIR,
    MANIFEST_FILE,
    METRICS_FILE,
    REPORT_DIR,
    VOCAB_FILE,
    RunDir,
    file_hash,
    run_id,
)
from .pipeline import (
    ADVERSARIAL,
    AUTO,
    EVAL_BACKWARD,
    EVAL_GENERATOR,
    MLE,
    MODEL_CHOICES,
    STUDIES,
    RunCorpus,
    adv_train,
    decode,
    evaluate,
    load_generator,
    load_run_corpus,
    prepare_run,
    pretrain_disc,
    pretrain_gen,
    study,
    synthesize,
    trainer_parameter_names,
)
from .validate import validate_corpus, validate_manifest, validate_metrics, validate_run

__all__ = [
    'RunConfig',
    'build_run_config',
    'default_values',
    'format_value',
    'load_run_config',
    'parse_config_text',
    'parse_override',
    'ADVERSARIAL_DIR',
    'CHECKPOINT_DIR',
    'CONFIG_FILE',
    'CORPUS_FILE',
    'DECODE_DIR',
    'MANIFEST_FILE',
    'METRICS_FILE',
    'REPORT_DIR',
    'VOCAB_FILE',
    'RunDir',
    'file_hash',
    'run_id',
    'ADVERSARIAL',
    'AUTO',
    'EVAL_BACKWARD',
    'EVAL_GENERATOR',
    'MLE',
    'MODEL_CHOICES',
    'STUDIES',
    'RunCorpus',
    'adv_train',
    'decode',
    'evaluate',
    'load_generator',
    'load_run_corpus',
    'prepare_run',
    'pretrain_disc',
    'pretrain_gen',
    'study',
    'synthesize',
    'trainer_parameter_names',
    'validate_corpus',
    'validate_manifest',
    'validate_metrics',
    'validate_run',
]
