"""Simulated domains: conveyor pick-and-place and drone delivery."""
