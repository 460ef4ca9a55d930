"""
Artifact Validation.

Checks every file a run directory may hold against its documented format,
and the MANIFEST against the files on disk. Problems are collected, not
raised, so one pass reports all of them.
"""

import json
import logging
import math
from pathlib import Path
from typing import List

from apps.corpus.exceptions import CorpusError
from apps.corpus.services import Vocab, load_corpus
from apps.decoding.exceptions import DecodingError
from apps.decoding.services import read_decodes
from apps.evaluation.exceptions import EvaluationError
from apps.evaluation.services import read_metrics_csv, read_report
from apps.experiments.exceptions import ExperimentError
from apps.experiments.services.rundir import (
    CHECKPOINT_DIR,
    CONFIG_FILE,
    CORPUS_FILE,
    DECODE_DIR,
    MANIFEST_FILE,
    METRICS_FILE,
    REPORT_DIR,
    VOCAB_FILE,
    RunDir,
)
from apps.seqmodels.exceptions import ModelError
from apps.seqmodels.services import load_checkpoint
from apps.training.services import METRIC_FIELDS

logger = logging.getLogger(__name__)


def validate_corpus(path, vocab_path=None) -> List[str]:
    path = Path(path)
    try:
        vocab = Vocab.load(vocab_path) if vocab_path is not None else None
        dialogues, _ = load_corpus(path, vocab)
    except (CorpusError, ValueError, OSError) as e:
        return [f"{path.name}: {e}"]
    logger.debug(f"{path.name}: {len(dialogues)} dialogues")
    return []


def validate_metrics(path: Path, config_hash: str) -> List[str]:
    problems = []
    previous = None
    for line_no, line in enumerate(path.read_text(encoding='utf-8').splitlines(), start=1):
        where = f"{path.name} line {line_no}"
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            problems.append(f"{where}: not JSON ({e})")
            continue
        missing = [name for name in METRIC_FIELDS if name not in record]
        if missing:
            problems.append(f"{where}: missing {', '.join(missing)}")
            continue
        numbers = [record[name] for name in ('d_loss', 'g_reward_mean', 'critic_mse', 'perplexity')]
        if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in numbers):
            problems.append(f"{where}: non-finite metric")
        if record['config_hash'] != config_hash:
            problems.append(f"{where}: config_hash {record['config_hash'][:12]} does not match the run")
        if previous is not None and record['iteration'] != previous + 1:
            problems.append(f"{where}: iteration {record['iteration']} does not follow {previous}")
        previous = record['iteration']
    return problems


def validate_manifest(run: RunDir) -> List[str]:
    try:
        listed = run.read_manifest()
    except ExperimentError as e:
        return [str(e)]
    actual = run.manifest()
    problems = [f"{MANIFEST_FILE}: {rel} is not listed" for rel in sorted(set(actual) - set(listed))]
    problems += [f"{MANIFEST_FILE}: {rel} is missing" for rel in sorted(set(listed) - set(actual))]
    problems += [
        f"{MANIFEST_FILE}: {rel} content changed"
        for rel in sorted(set(actual) & set(listed)) if actual[rel] != listed[rel]
    ]
    return problems


def validate_run(path) -> List[str]:
    """Every format problem found in the run directory at ``path``."""
    run = RunDir(path)
    if not run.file(CONFIG_FILE).is_file():
        return [f"{run.path}: no {CONFIG_FILE}"]
    problems: List[str] = []
    try:
        config_hash = run.config_hash()
    except ExperimentError as e:
        return [f"{CONFIG_FILE}: {e}"]

    vocab_hash = None
    if run.file(VOCAB_FILE).is_file():
        vocab_hash = Vocab.load(run.file(VOCAB_FILE)).hash
    if run.file(CORPUS_FILE).is_file():
        problems += validate_corpus(run.file(CORPUS_FILE), run.file(VOCAB_FILE) if vocab_hash else None)

    for checkpoint in sorted(run.file(CHECKPOINT_DIR).rglob('*.json')):
        rel = checkpoint.relative_to(run.path).as_posix()
        try:
            loaded = load_checkpoint(checkpoint, vocab_hash)
        except ModelError as e:
            problems.append(f"{rel}: {e}")
            continue
        if loaded.config_hash != config_hash:
            problems.append(f"{rel}: config_hash {loaded.config_hash[:12]} does not match the run")

    if run.file(METRICS_FILE).is_file():
        problems += validate_metrics(run.file(METRICS_FILE), config_hash)

    for decodes in sorted(run.file(DECODE_DIR).glob('*.tsv')):
        try:
            read_decodes(decodes)
        except DecodingError as e:
            problems.append(f"{decodes.name}: {e}")

    for report in sorted(run.file(REPORT_DIR).glob('*')):
        try:
            if report.suffix == '.json':
                read_report(report)
            elif report.suffix == '.csv':
                read_metrics_csv(report)
        except EvaluationError as e:
            problems.append(f"{report.name}: {e}")

    problems += validate_manifest(run)
    logger.info(f"Validated {run.path}: {len(problems)} problems")
    return problems
