"""Single and coupled balancing models with delayed, noisy feedback."""

from ._core import (
    CALIBRATED_COUPLED_BETA,
    CALIBRATED_SINGLE_BETA,
    DivergenceError,
    ModelParams,
    ProtocolError,
    TrialFormatError,
    ValidationError,
    analyze_trials,
    available_channels,
    calibrate_beta,
    canonical_message,
    characteristic_root,
    density_ratio,
    ensemble_rms,
    first_dominant_peak,
    fit_two_regime_slopes,
    largest_lyapunov,
    load_trial,
    message_type,
    model_to_px,
    power_spectrum,
    px_to_model,
    rms,
    simulate,
    stcc,
)

__version__ = "0.1.0"
