from math import log, sqrt


LOG2 = log(2.0)

SQRT_2PI = sqrt(2.0 * 3.141592653589793)

# Space grid defaults: nodes on [-x_max, x_max] with x_max = |h| + X_MAX_SIGMAS * sqrt(xi'(1)).
# A grid is rejected when x_max does not clear |h| + MIN_X_MAX_SIGMAS * sqrt(xi'(1)).
X_MAX_SIGMAS = 8.0
MIN_X_MAX_SIGMAS = 6.0
N_X = 2049
QUAD_NODES = 64

# Quadrature nodes beyond x_max + margin carrying more than this normalized weight are an error.
NODE_WEIGHT_CUTOFF = 1e-12

# Log-cosh terminal slab: below BETA_SIGMA_LOCAL the boundary is smooth on the scale
# of the Gaussian and plain Gauss-Hermite is used. Otherwise the localized part is
# integrated on [0, LOCAL_U_MAX] in units of beta*|y| with composite Gauss-Legendre.
BETA_SIGMA_LOCAL = 1.0
LOCAL_U_MAX = 40.0
LOCAL_PANELS = 8
LOCAL_PANEL_NODES = 16

# Optimizer
GLOBAL_VALUE_CAP = 50.0
F_TOL = 1e-7
MAX_ITERS = 400
RESTARTS = 4

# Control
N_PATHS = 100_000
N_STEPS = 512
MAX_DRIFT_STEP = 0.1
N_STANDARD_ERRORS = 3.0

# Oracle budgets
MAX_TENSOR_ENTRIES = 10 ** 9
MAX_GROUND_STATE_N = 28
MAX_FREE_ENERGY_N = 24
MAX_COVARIANCE_N = 12
EXTRAPOLATION_OMEGA = 2.0 / 3.0
DIRECT_CHUNK = 1 << 14

# Annealing
ANNEAL_SWEEPS = 400
ANNEAL_RESTARTS = 4
ANNEAL_BETA_START = 0.1
ANNEAL_BETA_END = 10.0

THREADS_ENV = "GSE_THREADS"
