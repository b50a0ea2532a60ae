# Report / catalog schemas
REPORT_SCHEMA = 'stackful-mini/1'
CATALOG_SCHEMA = 'stackful-mini/catalog/1'
FAULT_MANIFEST_SCHEMA = 'stackful-mini/faults/1'
CATALOG_VERSION = 1

# Source files
PROGRAM_EXTENSION = '.sfl'

# Language keywords
KEYWORDS = frozenset([
    'let', 'if', 'send', 'begin', 'lambda', 'input', 'register', 'set!', 'error',
    'true', 'false', 'mod',
])

# Handler type used for errors raised before any handler fires
TOP_LEVEL = 'TopLevel'

# Fault injection
INJECTED_FAULT_LABEL = 'ERROR: INJECTED SERVER ERROR #{fault_id}'

# Machine defaults
DEFAULT_INPUT_BOUND = 64
DEFAULT_STEP_LIMIT = 100_000

# Solver defaults
DEFAULT_SOLVER_BOUND = 64
DEFAULT_MAX_ASSIGNMENTS = 1_000_000

# Campaign defaults
DEFAULT_INTRA_BUDGET = 250
DEFAULT_INTER_BUDGET = 500
DEFAULT_MAX_EVENTS = 6
DEFAULT_SEED = 0
DEFAULT_JOBS = 1

# Exploration strategies (CLI spelling, label)
STRATEGY_CHOICES = [
    ('brute-force', 'Breadth-first brute force'),
    ('rw-conflict', 'Read/write conflict maximisation'),
]
DEFAULT_STRATEGY = 'brute-force'

# Classifications
CLASSIFICATION_HIGH = 'high'
CLASSIFICATION_LOW = 'low'

# Config file
CONFIG_FILENAME = 'stackful.conf'
