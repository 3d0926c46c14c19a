"""CSV number formatting shared by every table writer."""


def fmt(value) -> str:
    """17 significant digits, enough to round-trip a double."""
    return "%.17g" % value
