"""Tests of fundamental pricing at news releases in high-frequency data.

Simulation of noisy event windows with gradual price adjustment, pre-average
event-return estimation, closed-form critical values, cross-event jump
regressions, Monte Carlo size/power studies, and a tick-data pipeline.
"""
from .simulation import (
    CALENDAR_SECONDS_PER_YEAR,
    TRADING_SECONDS_PER_YEAR,
    EfficientPath,
    HestonParams,
    JumpSpec,
    NoiseSpec,
    ObservedSeries,
    SimulationError,
    TransitionSpec,
    observe,
    sample_event_design,
    simulate_efficient_path,
    transition_value,
)
from .preaveraging import (
    EstimationError,
    EventReturn,
    PreAvgConfig,
    VolBounds,
    event_return,
    noise_variance,
    preaverage,
    vol_bounds,
)
from .inference import (
    CriticalValueInputs,
    InferenceError,
    TestOutcome,
    critical_value,
    critical_value_feasible,
    gaussian_tail_bound,
    lambert_w_positive,
    tail_quantile,
    tail_quantile_exact,
    test_event,
)
from .cross_event import (
    FactorMatrix,
    FactorSpec,
    JumpRegressionFit,
    RegressionError,
    build_factors,
    fit_jump_regression,
    leave_one_out_plan,
    predict_jump,
)
from .mc import (
    McDesign,
    McResult,
    run_jump_error_study,
    run_size_power_study,
    write_jump_error_csv,
    write_power_curves_csv,
)
from .market_data import (
    BreakInfo,
    EventRecord,
    EventTestReport,
    TickDataError,
    TickRecord,
    classify_event,
    descriptives,
    load_events,
    load_ticks,
    run_event_tests,
    series_from_ticks,
)

__version__ = "0.1.0"
