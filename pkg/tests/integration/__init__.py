"""Integration tests for hsi-detect.

These run pipeline stages together on the tiny run config and check the
gradient suite across the engine and both networks.
"""
