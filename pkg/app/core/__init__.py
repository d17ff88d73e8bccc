"""Core utilities: config, logging, error handling, atomic output."""
