"""Unit tests for hsi-detect.

Each module covers one component in isolation: engine ops, autodiff,
file formats, networks, objectives, evaluation and run support.
"""
