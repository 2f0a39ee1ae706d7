class RangeCoderError(ValueError):
    """Malformed, truncated or mismatched range-coder payload."""
