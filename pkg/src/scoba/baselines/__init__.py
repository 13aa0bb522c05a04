"""Comparison allocators."""
