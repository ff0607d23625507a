"""Version information for hsi-detect.

The version follows semantic versioning (MAJOR.MINOR.PATCH).
"""

__version__ = "0.1.0"
