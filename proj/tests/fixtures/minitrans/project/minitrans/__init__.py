"""Tiny numpy token classifier used as a test project."""
