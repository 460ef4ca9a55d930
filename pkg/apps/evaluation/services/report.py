"""
Evaluation Reports.

- report.json: one EvalReport as a single JSON object (sorted keys)
- report.csv: companion table, one row per (model, metric, value)
"""

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from apps.evaluation.exceptions import EvaluationError

logger = logging.getLogger(__name__)

CSV_HEADER = ('model', 'metric', 'value')

Row = Tuple[str, str, float]


@dataclass
class EvalReport:
    model: str
    evaluator_kind: str
    seeds: List[int]
    config_hash: str = ''
    adver_suc: Optional[float] = None
    scenario_adver_suc: Dict[str, float] = field(default_factory=dict)
    deviations: Dict[str, float] = field(default_factory=dict)
    ere: Optional[float] = None
    machine_vs_random: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def rows(self) -> List[Row]:
        rows = []
        for metric in ('adver_suc', 'ere', 'machine_vs_random'):
            value = getattr(self, metric)
            if value is not None:
                rows.append((self.model, metric, float(value)))
        for kind, value in sorted(self.scenario_adver_suc.items()):
            rows.append((self.model, f"adver_suc.{kind}", float(value)))
        return rows


def validate_report(data: dict) -> EvalReport:
    from apps.evaluation.serializers import EvalReportSerializer

    serializer = EvalReportSerializer(data=data)
    if not serializer.is_valid():
        raise EvaluationError(f"invalid report: {serializer.errors}")
    return EvalReport(**serializer.validated_data)


def write_report(path, report: EvalReport) -> Path:
    validate_report(report.to_dict())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_dict(), sort_keys=True) + '\n', encoding='utf-8')
    logger.info(f"Report for {report.model} written to {path}")
    return path


def read_report(path) -> EvalReport:
    try:
        data = json.loads(Path(path).read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise EvaluationError(f"{path}: not a JSON report ({e})") from e
    return validate_report(data)


def write_metrics_csv(path, rows: Iterable[Row]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(CSV_HEADER)
        for model, metric, value in rows:
            writer.writerow((model, metric, f"{value:.6f}"))
    return path


def read_metrics_csv(path) -> List[Row]:
    with Path(path).open(encoding='utf-8', newline='') as handle:
        reader = csv.reader(handle)
        header = tuple(next(reader, ()))
        if header != CSV_HEADER:
            raise EvaluationError(f"{path}: expected header {','.join(CSV_HEADER)}")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise EvaluationError(f"{path} line {line_no}: expected 3 columns")
            try:
                rows.append((row[0], row[1], float(row[2])))
            except ValueError as e:
                raise EvaluationError(f"{path} line {line_no}: bad value {row[2]!r}") from e
    return rows
