"""Global numeric tolerance used for geometric comparisons."""

DEFAULT_TOLERANCE = 1e-9

_tolerance = DEFAULT_TOLERANCE


def get_tolerance(override=None):
    """Return ``override`` if given, else the process-wide tolerance."""
    if override is not None:
        return float(override)
    return _tolerance


def set_tolerance(value):
    global _tolerance
    value = float(value)
    if not value > 0:
        raise ValueError(f"tolerance must be positive, got {value}")
    _tolerance = value
