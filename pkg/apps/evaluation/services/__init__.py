from .evaluators import (
    COMBINED_LINEAR,
    CONCAT_NEURAL,
    EVALUATOR_KINDS,
    HIER_NEURAL,
    UNIGRAM_LINEAR,
    ConstantEvaluator,
    Evaluator,
    EvaluatorSpec,
    FeatureExtractor,
    LinearEvaluator,
    NeuralEvaluator,
    concatenated,
    evaluator_factory,
    train_evaluator,
)
from .metrics import adver_suc, adver_suc_from_accuracy, balanced_accuracy, ere_from_measurements
from .scenarios import (
    GOLD_ADVER_SUC,
    HUMAN_VS_HUMAN,
    HUMAN_VS_NEXT,
    HUMAN_VS_RANDOM,
    MACHINE_VS_MACHINE,
    SCENARIOS,
    EreResult,
    ScenarioSplit,
    adversarial_success,
    build_scenario,
    ere,
    human_episodes,
    machine_vs_random,
    scenario_from_flag,
    split_episodes,
)
from .report import EvalReport, read_metrics_csv, read_report, validate_report, write_metrics_csv, write_report
from .benchmark import DecodingSystem, EvaluatorStudy, decode_benchmark, evaluator_study, machine_episodes

__all__ = [
    'COMBINED_LINEAR',
    'CONCAT_NEURAL',
    'EVALUATOR_KINDS',
    'HIER_NEURAL',
    'UNIGRAM_LINEAR',
    'ConstantEvaluator',
    'Evaluator',
    'EvaluatorSpec',
    'FeatureExtractor',
    'LinearEvaluator',
    'NeuralEvaluator',
    'concatenated',
    'evaluator_factory',
    'train_evaluator',
    'adver_suc',
    'adver_suc_from_accuracy',
    'balanced_accuracy',
    'ere_from_measurements',
    'GOLD_ADVER_SUC',
    'HUMAN_VS_HUMAN',
    'HUMAN_VS_NEXT',
    'HUMAN_VS_RANDOM',
    'MACHINE_VS_MACHINE',
    'SCENARIOS',
    'EreResult',
    'ScenarioSplit',
    'adversarial_success',
    'build_scenario',
    'ere',
    'human_episodes',
    'machine_vs_random',
    'scenario_from_flag',
    'split_episodes',
    'EvalReport',
    'read_metrics_csv',
    'read_report',
    'validate_report',
    'write_metrics_csv',
    'write_report',
    'DecodingSystem',
    'EvaluatorStudy',
    'decode_benchmark',
    'evaluator_study',
    'machine_episodes',
]
