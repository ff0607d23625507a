"""End-to-end tests for hsi-detect.

These drive the Typer application through ``CliRunner`` and check exit
codes, console output and the files each command leaves behind.
"""
