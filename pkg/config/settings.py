"""
Django settings for the adversarial dialogue lab.

The lab has no web surface: Django carries configuration, the management
commands that form the command-line interface, and the test runner.

Every experimental default below can be overridden from the environment
(or a `.env` file) and, per run, from a `key = value` run config.
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv('SECRET_KEY', 'advlab-insecure-local-only')

DEBUG = os.getenv('DEBUG', 'False').lower() in ('true', '1', 'yes')

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    # Third-party apps
    'rest_framework',

    # Local apps
    'apps.autodiff.apps.AutodiffConfig',
    'apps.corpus.apps.CorpusConfig',
    'apps.seqmodels.apps.SeqmodelsConfig',
    'apps.decoding.apps.DecodingConfig',
    'apps.training.apps.TrainingConfig',
    'apps.evaluation.apps.EvaluationConfig',
    'apps.experiments.apps.ExperimentsConfig',
]

# No database: every artifact is a file under the run directory.
DATABASES = {}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# =============================================================================
# LOGGING
# =============================================================================

LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'apps': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}


# =============================================================================
# RUNS & REPRODUCIBILITY
# =============================================================================

LAB_SEED = int(os.getenv('LAB_SEED', '1'))
LAB_RUNS_DIR = Path(os.getenv('LAB_RUNS_DIR', str(BASE_DIR / 'runs')))
# Threads used for Monte-Carlo rollouts; results do not depend on it.
LAB_WORKERS = int(os.getenv('LAB_WORKERS', '1'))


# =============================================================================
# MODEL DIMENSIONS
# =============================================================================

LAB_EMBED_SIZE = int(os.getenv('LAB_EMBED_SIZE', '16'))
LAB_HIDDEN_SIZE = int(os.getenv('LAB_HIDDEN_SIZE', '32'))
LAB_INIT_SCALE = float(os.getenv('LAB_INIT_SCALE', '0.08'))
LAB_MAX_DECODE_LEN = int(os.getenv('LAB_MAX_DECODE_LEN', '20'))


# =============================================================================
# CORPUS TRICKS
# =============================================================================

LAB_MIN_RESPONSE_LEN = int(os.getenv('LAB_MIN_RESPONSE_LEN', '5'))
LAB_TFIDF_CAP = float(os.getenv('LAB_TFIDF_CAP', '3.0'))
# Synthetic corpus size and held-out share used when a run names no corpus.
LAB_SYNTH_DIALOGUES = int(os.getenv('LAB_SYNTH_DIALOGUES', '200'))
LAB_HELDOUT_FRACTION = float(os.getenv('LAB_HELDOUT_FRACTION', '0.1'))


# =============================================================================
# OPTIMISATION
# =============================================================================

LAB_MLE_LR = float(os.getenv('LAB_MLE_LR', '0.5'))
LAB_RL_LR = float(os.getenv('LAB_RL_LR', '0.01'))
LAB_CRITIC_LR = float(os.getenv('LAB_CRITIC_LR', '0.05'))
LAB_DISC_LR = float(os.getenv('LAB_DISC_LR', '0.1'))
LAB_GRAD_CLIP = float(os.getenv('LAB_GRAD_CLIP', '5.0'))
LAB_BATCH_SIZE = int(os.getenv('LAB_BATCH_SIZE', '16'))
LAB_PRETRAIN_EPOCHS = int(os.getenv('LAB_PRETRAIN_EPOCHS', '5'))
LAB_DISC_EPOCHS = int(os.getenv('LAB_DISC_EPOCHS', '3'))
LAB_DISC_CONVERGENCE_TOL = float(os.getenv('LAB_DISC_CONVERGENCE_TOL', '0.001'))


# =============================================================================
# ADVERSARIAL TRAINING
# =============================================================================

LAB_D_STEPS = int(os.getenv('LAB_D_STEPS', '5'))
LAB_G_STEPS = int(os.getenv('LAB_G_STEPS', '1'))
LAB_MC_ROLLOUTS = int(os.getenv('LAB_MC_ROLLOUTS', '5'))
LAB_ITERATIONS = int(os.getenv('LAB_ITERATIONS', '50'))
LAB_CHECKPOINT_EVERY = int(os.getenv('LAB_CHECKPOINT_EVERY', '10'))


# =============================================================================
# DECODING
# =============================================================================

LAB_BEAM_WIDTH = int(os.getenv('LAB_BEAM_WIDTH', '5'))
LAB_SIBLING_PENALTY = float(os.getenv('LAB_SIBLING_PENALTY', '1.0'))
LAB_REPEAT_PENALTY = float(os.getenv('LAB_REPEAT_PENALTY', '1.0'))
LAB_MMI_WEIGHT = float(os.getenv('LAB_MMI_WEIGHT', '0.5'))
LAB_ANTI_LM_WEIGHT = float(os.getenv('LAB_ANTI_LM_WEIGHT', '0.1'))


# =============================================================================
# EVALUATION
# =============================================================================

LAB_EVAL_EPOCHS = int(os.getenv('LAB_EVAL_EPOCHS', '5'))
LAB_EVAL_TRAIN_FRACTION = float(os.getenv('LAB_EVAL_TRAIN_FRACTION', '0.7'))
LAB_HINGE_L2 = float(os.getenv('LAB_HINGE_L2', '0.001'))
LAB_LINEAR_LR = float(os.getenv('LAB_LINEAR_LR', '0.1'))
LAB_EVAL_DIALOGUES = int(os.getenv('LAB_EVAL_DIALOGUES', '64'))


# =============================================================================
# TESTS
# =============================================================================

# Enables the tests that train models at full corpus scale (minutes each).
LAB_TRAINING_ORACLES = os.getenv('LAB_TRAINING_ORACLES', 'False').lower() in ('true', '1', 'yes')
