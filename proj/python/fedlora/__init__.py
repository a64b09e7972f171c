"""Split federated LoRA fine-tuning over noisy wireless uplinks."""

from ._fedlora import (
    SCHEMA_VERSION,
    ConfigError,
    ShapeError,
    clip_gradient,
    csv_header,
    epsilon_from_sigma,
    epsilon_from_snr,
    generate,
    noise_energy_fixed_a,
    noise_in_delta_w_both,
    noise_in_delta_w_fixed_a,
    orthonormal_rows,
    power_control_alpha,
    run_cell,
    singular_extremes,
    singular_values,
    snr,
    validate_config,
)

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "ShapeError",
    "clip_gradient",
    "csv_header",
    "epsilon_from_sigma",
    "epsilon_from_snr",
    "generate",
    "noise_energy_fixed_a",
    "noise_in_delta_w_both",
    "noise_in_delta_w_fixed_a",
    "orthonormal_rows",
    "power_control_alpha",
    "run_cell",
    "singular_extremes",
    "singular_values",
    "snr",
    "validate_config",
]
