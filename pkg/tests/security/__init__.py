"""Malformed-input tests for hsi-detect.

Corrupted HS1 files, checkpoints and manifests must fail with package
errors that map to exit codes, never with a crash.
"""
