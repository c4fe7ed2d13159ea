'''Configuration file for global constants and settings.'''
import math

# Bundled fixture configs live in data/, resolved relative to this file by
# config_loader.
FIXTURE_DIR = "data"
FIXTURE_NAMES = ("fig5", "fig6", "fig7", "table1",
                 "fig5_alphabeta", "fig5_constant_ff", "fig5_filtered_ff")

# Grid defaults (not stated for the simulated studies): 230 V rms per phase.
DEFAULT_GRID_VOLTAGE_RMS = 230.0
DEFAULT_PHASE_VOLTAGE_AMPLITUDE = DEFAULT_GRID_VOLTAGE_RMS * math.sqrt(2.0)
DEFAULT_GRID_FREQUENCY_HZ = 50.0
DEFAULT_OMEGA0 = 2.0 * math.pi * DEFAULT_GRID_FREQUENCY_HZ

# Controller / simulator
DEFAULT_CONTROL_RATE_HZ = 10_000.0
DEFAULT_SIM_STEP_S = 2e-6
DEFAULT_SIM_DURATION_S = 0.3
DEFAULT_RECORD_DECIMATION = 10
DEFAULT_SOURCE_RESISTANCE = 0.05
INJECTION_GUARD_FRACTION = 0.2       # amplitude < 0.2 * v_nominal
DIVERGENCE_VOLTAGE_FACTOR = 5.0      # |v_dc| > 5 * v_nominal
SATURATION_PERSIST_SAMPLES = 10      # consecutive control samples with |d| > 1
AVERAGED_MODEL_CEILING_FRACTION = 0.2  # sweeps valid up to f_sw / 5

# Frequency response extraction
SETTLE_MIN_S = 0.2
SETTLE_FUNDAMENTAL_PERIODS = 10
SETTLE_INJECTION_PERIODS = 5
MIN_MEASUREMENT_PERIODS = 5
MIN_MEASUREMENT_S = 0.1
COHERENCE_TOLERANCE = 1e-3           # 0.1 % frequency error after trimming
DEFAULT_INJECTION_FRACTION = 0.01    # 1 % of v_nominal
INJECTION_RETRY_FACTOR = 2.0
INJECTION_RETRY_CEILING_FRACTION = 0.10
LOW_SIGNAL_DB = 60.0
NOISE_FLOOR_ABS = 1e-9

# Analytic solve
SINGULAR_CONDITION_LIMIT = 1e13
# Relative to the bridge-current terms; sits above the 4x4 solve rounding floor
OPEN_CIRCUIT_RTOL = 1e-10

# Stability
MIDDLEBROOK_MARGIN_DB = 6.0
MARGINAL_GAIN_MARGIN_DB = 1.0
MARGINAL_PHASE_MARGIN_DEG = 5.0
MAX_PHASE_STEP_DEG = 30.0
CONTOUR_TOLERANCE = 1e-9
# |log10 |T|| at or below this counts as sitting on the unity-gain circle
UNITY_GAIN_LOG_TOLERANCE = 1e-9

# Comparison thresholds
MATCH_MAG_DB = 1.0
MATCH_PHASE_DEG = 5.0
MISMATCH_CONSTANT_FF_DB = 3.0
MISMATCH_FILTERED_FF_DB = 1.5
IDEAL_FF_CEILING_DB = 0.5
# |Z_a - Z_b| / max(|Z_a|, |Z_b|) separating a loop that still follows the
# reduced model from one that has left it (DC voltage sampled at the control rate)
BANDWIDTH_FIT_REL_DEV = 0.5
CSV_FLOAT_FORMAT = "%.17g"

# Reproducibility audit string emitted by --version
CONVENTIONS = (
    "transform=amplitude-invariant Clarke/Park, P=(3/2)(v_d i_d + v_q i_q), "
    "d-axis on grid voltage; phasor=peak amplitude, x=A sin(wt+phi) -> A e^(j phi); "
    "port current positive into the converter"
)
