"""Performance tests for hsi-detect.

Loose timing, determinism and memory checks of the engine and training loops.
"""
