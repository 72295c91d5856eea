# Numerical defaults
LOG_CLAMP_EPSILON = 1e-7
MATURITY_FLOOR = 1e-6

# Network defaults
DEFAULT_NOISE_DIM = 4
DEFAULT_DISCRIMINATOR_HIDDEN = (16, 8)
DEFAULT_GENERATOR_HIDDEN = (16,)

# Reputation defaults
BLACKLIST_STRIKES = 3
DEFAULT_HIGH_ATTACK_FACTOR = 5.0
DEFAULT_HIGH_ATTACK_MINIMUM = 10.0

# Classification
DEFAULT_THRESHOLD = 0.5

# Binary formats
PARAM_VECTOR_COUNT_FORMAT = "<I"
PARAM_VECTOR_VALUE_DTYPE = "<f8"
SPEC_HASH_SIZE = 8
CHECKPOINT_MAGIC = b"FGCK"
CHECKPOINT_FORMAT_VERSION = 1

# Output files written by `fedgan-ids simulate`.
METRICS_FILE_NAME = "metrics.jsonl"
SUMMARY_FILE_NAME = "summary.json"
CENTRAL_CHECKPOINT_NAME = "central.fgck"
CLUSTER_CHECKPOINT_TEMPLATE = "cluster-{cluster_id}.fgck"

# Metrics float rendering (significant digits).
METRICS_FLOAT_DIGITS = 17

# CSV
DEFAULT_LABEL_COLUMN = "label"
