"""Fixed-wing UAV hardware-in-the-loop simulator."""

from ._core import (
    HilError,
    crc16,
    decode,
    default_autopilot_path,
    encode_attitude,
    encode_servo,
    frequency_response,
    generate_sweep,
    identify_log,
    load_scenario,
    run,
    step,
    telemetry_columns,
    trim,
)

__all__ = [
    "HilError",
    "crc16",
    "decode",
    "default_autopilot_path",
    "encode_attitude",
    "encode_servo",
    "frequency_response",
    "generate_sweep",
    "identify_log",
    "load_scenario",
    "run",
    "step",
    "telemetry_columns",
    "trim",
]
