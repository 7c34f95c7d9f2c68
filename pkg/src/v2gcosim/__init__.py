"""Autonomous V2G co-simulation engine."""
