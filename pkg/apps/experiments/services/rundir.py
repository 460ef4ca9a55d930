"""
Run Directories.

Every pipeline stage writes under ``<out>/<run-id>/``:

    config.txt                    the run config (no output path)
    corpus.txt, vocab.txt         the corpus the run trained on and its vocabulary
    checkpoints/*.json            pretrained generator, backward generator, LM, discriminator
    checkpoints/adversarial/      generator-NNNNN.json, discriminator-NNNNN.json, critic-NNNNN.json
    metrics.jsonl                 one record per adversarial iteration
    decodes/*.tsv                 decode files
    reports/*.json, reports/*.csv evaluation reports and their tables
    MANIFEST                      "sha256  relative/path" for every file above

The run id is the UTC start time followed by the first 8 hex digits of the
config hash, so later stages of the same config find their run again.
"""

import hashlib
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

from apps.experiments.exceptions import ConfigMismatch, MissingArtifact
from apps.experiments.services.run_config import RunConfig, build_run_config, parse_config_text

logger = logging.getLogger(__name__)

CONFIG_FILE = 'config.txt'
CORPUS_FILE = 'corpus.txt'
VOCAB_FILE = 'vocab.txt'
METRICS_FILE = 'metrics.jsonl'
MANIFEST_FILE = 'MANIFEST'
CHECKPOINT_DIR = 'checkpoints'
ADVERSARIAL_DIR = 'checkpoints/adversarial'
DECODE_DIR = 'decodes'
REPORT_DIR = 'reports'

HASH_PREFIX = 8
UNSTABLE_METRIC_FIELDS = ('wall_ms',)


def run_id(config_hash: str, now: Optional[datetime] = None) -> str:
    now = now or datetime.now(timezone.utc)
    return f"{now:%Y%m%dT%H%M%S%fZ}-{config_hash[:HASH_PREFIX]}"


def file_hash(path: Path) -> str:
    """SHA-256 of a file; metrics logs are hashed without their wall-clock field."""
    if path.name == METRICS_FILE:
        digest = hashlib.sha256()
        for line in path.read_text(encoding='utf-8').splitlines():
            record = json.loads(line)
            for key in UNSTABLE_METRIC_FIELDS:
                record.pop(key, None)
            digest.update((json.dumps(record, sort_keys=True) + '\n').encode('utf-8'))
        return digest.hexdigest()
    return hashlib.sha256(path.read_bytes()).hexdigest()


class RunDir:
    def __init__(self, path):
        self.path = Path(path)

    def __repr__(self):
        return f"<RunDir {self.path}>"

    # ------------------------------------------------------------------
    # Creation and lookup
    # ------------------------------------------------------------------
    @classmethod
    def create(cls, config: RunConfig, now: Optional[datetime] = None) -> 'RunDir':
        run = cls(config.out / run_id(config.hash, now))
        run.path.mkdir(parents=True, exist_ok=False)
        (run.path / CONFIG_FILE).write_text(config.to_text(), encoding='utf-8')
        logger.info(f"Created run directory {run.path}")
        return run

    @classmethod
    def open(cls, path, config: RunConfig) -> 'RunDir':
        """
        Raises:
            MissingArtifact: no run directory at ``path``
            ConfigMismatch: the run was made with another config
        """
        run = cls(path)
        if not (run.path / CONFIG_FILE).is_file():
            raise MissingArtifact(run.path / CONFIG_FILE)
        stored = run.config_hash()
        if stored != config.hash:
            raise ConfigMismatch(config.hash, stored)
        return run

    @classmethod
    def latest(cls, config: RunConfig) -> 'RunDir':
        """The newest run of ``config`` under its output directory."""
        suffix = f"-{config.hash[:HASH_PREFIX]}"
        candidates = sorted(
            p for p in config.out.glob(f"*{suffix}") if (p / CONFIG_FILE).is_file()
        ) if config.out.is_dir() else []
        for path in reversed(candidates):
            run = cls(path)
            if run.config_hash() == config.hash:
                return run
        raise MissingArtifact(f"run directory for config {config.hash[:HASH_PREFIX]} under {config.out}")

    def config_hash(self) -> str:
        values = parse_config_text((self.path / CONFIG_FILE).read_text(encoding='utf-8'))
        values['out'] = ''
        return build_run_config(values).hash

    # ------------------------------------------------------------------
    # Artifacts
    # ------------------------------------------------------------------
    def file(self, relpath: str) -> Path:
        return self.path / relpath

    def require(self, relpath: str) -> Path:
        path = self.path / relpath
        if not path.is_file():
            raise MissingArtifact(relpath)
        return path

    def checkpoint(self, name: str) -> Path:
        return self.path / CHECKPOINT_DIR / f"{name}.json"

    def require_checkpoint(self, name: str) -> Path:
        return self.require(f"{CHECKPOINT_DIR}/{name}.json")

    def latest_adversarial(self) -> Optional[int]:
        """Iteration of the newest complete adversarial checkpoint set."""
        folder = self.path / ADVERSARIAL_DIR
        iterations = sorted(
            int(p.stem.split('-')[-1]) for p in folder.glob('generator-*.json')
        ) if folder.is_dir() else []
        for iteration in reversed(iterations):
            names = [f"{name}-{iteration:05d}.json" for name in ('generator', 'discriminator', 'critic')]
            if all((folder / name).is_file() for name in names):
                return iteration
        return None

    def adversarial_checkpoint(self, name: str, iteration: int) -> Path:
        return self.path / ADVERSARIAL_DIR / f"{name}-{iteration:05d}.json"

    # ------------------------------------------------------------------
    # MANIFEST
    # ------------------------------------------------------------------
    def artifacts(self) -> List[Path]:
        return sorted(
            p for p in self.path.rglob('*')
            if p.is_file() and p.name != MANIFEST_FILE
        )

    def manifest(self) -> Dict[str, str]:
        return {p.relative_to(self.path).as_posix(): file_hash(p) for p in self.artifacts()}

    def write_manifest(self) -> Path:
        entries = self.manifest()
        path = self.path / MANIFEST_FILE
        path.write_text(''.join(f"{digest}  {rel}\n" for rel, digest in sorted(entries.items())), encoding='utf-8')
        logger.info(f"MANIFEST lists {len(entries)} artifacts in {self.path}")
        return path

    def read_manifest(self) -> Dict[str, str]:
        entries = {}
        for line in self.require(MANIFEST_FILE).read_text(encoding='utf-8').splitlines():
            digest, _, rel = line.partition('  ')
            entries[rel] = digest
        return entries
