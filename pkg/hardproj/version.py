"""
Package version. Checkpoints record it; files written by a newer major
version are refused.
"""

__version__ = "0.1.0"


def get_version():
    """Get package version string."""
    return __version__


def get_version_as_tuple():
    """Version as ``(major, minor, patch)`` integers."""
    major, minor, patch = (int(part) for part in __version__.split("."))
    return major, minor, patch


def is_compatible(version):
    """
    Whether files written by hardproj ``version`` can be read.

    :raises ValueError: if ``version`` is not a dotted integer string.
    """
    major = int(str(version).split(".")[0])
    return major <= get_version_as_tuple()[0]
