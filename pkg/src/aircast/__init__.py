"""aircast: self-hosted air-quality telemetry with forecasting and pub/sub."""

from aircast.domain import (
    GeoPoint,
    Installation,
    Measurement,
    Parameter,
    compute_caqi,
    haversine_km,
    validate_measurement,
)

__version__ = "0.1.0"

__all__ = [
    "GeoPoint",
    "Installation",
    "Measurement",
    "Parameter",
    "compute_caqi",
    "haversine_km",
    "validate_measurement",
    "__version__",
]
