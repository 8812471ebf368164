"""Shared pytest path setup lives here; cross-file test imports rely on it."""
