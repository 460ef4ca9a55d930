from .optim import SGD, clip_by_global_norm, compute_gradients, global_norm, named
from .rewards import (
    MODES,
    REGS_MC,
    REGS_PARTIAL,
    REINFORCE,
    RewardTrace,
    mc_rollout_rewards,
    partial_disc_pairs,
    partial_rewards,
    response_prefix,
    rollout_seed,
)
from .policy import (
    CONSTANT_ONE,
    GATED,
    TEACHER_FORCING_MODES,
    TF_OFF,
    CriticResult,
    StepResult,
    critic_step,
    critic_targets,
    discriminator_step,
    mle_step,
    policy_gradient_loss,
    regs_step,
    reinforce_step,
    sample_response,
    teacher_forcing_step,
)
from .pretrain import (
    DiscriminatorResult,
    NegativeExample,
    PretrainResult,
    build_negatives,
    discriminator_accuracy,
    mix_partial,
    perplexity,
    pretrain_discriminator,
    pretrain_generator,
    pretrain_language_model,
    reversed_pairs,
)
from .loop import (
    METRIC_FIELDS,
    IterationMetrics,
    StabilityRun,
    TrainResult,
    TrainSchedule,
    adversarial_train,
    stability_study,
)

__all__ = [
    'SGD',
    'clip_by_global_norm',
    'compute_gradients',
    'global_norm',
    'named',
    'MODES',
    'REGS_MC',
    'REGS_PARTIAL',
    'REINFORCE',
    'RewardTrace',
    'mc_rollout_rewards',
    'partial_disc_pairs',
    'partial_rewards',
    'response_prefix',
    'rollout_seed',
    'CONSTANT_ONE',
    'GATED',
    'TEACHER_FORCING_MODES',
    'TF_OFF',
    'CriticResult',
    'StepResult',
    'critic_step',
    'critic_targets',
    'discriminator_step',
    'mle_step',
    'policy_gradient_loss',
    'regs_step',
    'reinforce_step',
    'sample_response',
    'teacher_forcing_step',
    'DiscriminatorResult',
    'NegativeExample',
    'PretrainResult',
    'build_negatives',
    'discriminator_accuracy',
    'mix_partial',
    'perplexity',
    'pretrain_discriminator',
    'pretrain_generator',
    'pretrain_language_model',
    'reversed_pairs',
    'METRIC_FIELDS',
    'IterationMetrics',
    'StabilityRun',
    'TrainResult',
    'TrainSchedule',
    'adversarial_train',
    'stability_study',
]
