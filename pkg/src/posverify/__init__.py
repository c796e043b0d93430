"""Simulation and analysis of classical position verification with one-time keys."""

from .analytics import (
    ApproximationWarning,
    SecurityParams,
    key_consumption,
    optimal_split,
    p_eve,
    p_reply_guess,
    p_s_error_tolerant_approx,
    p_s_error_tolerant_exact,
    p_s_optimal,
)
from .bitkeys import BitString, KeyBlock, RoundKey, generate_key_block, hamming_distance, within_tolerance
from .errors import ConfigurationError, MeasurementRejected, PosVerifyError, ProtocolError, UsageError
from .geometry import Ball, Region, convex_hull_condition, region_diameter_bound, region_is_empty
from .scenario import ScenarioConfig, from_dict, load_scenario
from .simulator import MonteCarloSummary, TrialResult, delay_report, monte_carlo, run_scenario, simulate
from .spacetime import SPEED_OF_LIGHT, SPEED_OF_SOUND, ClockModel, DelayProfile, Position, movement_bound

__version__ = "0.1.0"
