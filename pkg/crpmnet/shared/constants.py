"""Some useful variables to import from various parts of this program."""

import logging
import os

import yaml

from crpmnet.shared.validation import check_train_config_schema

logger = logging.getLogger(__name__)


PACKAGE_DIR = str(os.path.abspath(os.path.join(os.path.dirname(__file__), os.path.pardir)))
TRAIN_CONFIG_FILE = str(os.path.join(PACKAGE_DIR, "shared", "default-train-config.yml"))
PALETTE_FILE = str(os.path.join(PACKAGE_DIR, "shared", "default-palette.json"))

with open(TRAIN_CONFIG_FILE, encoding="utf-8") as yaml_file:
    try:
        DEFAULT_TRAIN_CONFIG = yaml.safe_load(yaml_file)
    except yaml.YAMLError as exc:
        logger.critical(exc)
check_train_config_schema(DEFAULT_TRAIN_CONFIG)

# Loss weights of the refined map as printed next to the training framework, as opposed to the experiment values.
ILLUSTRATION_REFINE_WEIGHTS = {"w-train": 10.0, "w-error": 50.0, "w-else": 1.0}

# Numerical guards
EPS_PHASE = 1e-12
EPS_ZSCORE = 1e-12
LOG_GUARD = 1e-12
DIAGONAL_IMAG = 1e-8
HERMITIAN_TOLERANCE = 1e-6

# Patch classifier geometry. A training pixel sits at index (4, 4) of its 10x10 window.
PATCH_SIZE = 10
PATCH_OFFSET = 4
SCENE_MARGIN = 5

# Tiling of whole scenes for the dense networks
TILE_WINDOW = 128
TILE_STRIDE = 64
ENCODER_MARGIN = 3

# Adam
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# Gradient checks
GRADCHECK_STEP = 1e-6
GRADCHECK_TOLERANCE = 1e-5
GRADCHECK_INSTANCES = 20

# Container formats
C3_MAGIC = b"C3PX"
C3_VERSION = 1
MODEL_MAGIC = b"CRPM"
MODEL_VERSION = 1

# Scene entries as stored in a C3 container
C3_ENTRIES = ["C11", "C12", "C13", "C22", "C23", "C33"]
# Channel order of the 6-dimensional complex feature vector
COMPLEX_FEATURE_CHANNELS = ["C11", "C22", "C33", "C12", "C13", "C23"]
# Channel order of the 9-dimensional real feature vector
REAL_FEATURE_CHANNELS = ["C11", "Re(C12)", "Im(C12)", "C22", "Re(C13)", "Im(C13)", "C33", "Re(C23)", "Im(C23)"]

THREADS_ENV_VAR = "CRPM_THREADS"
