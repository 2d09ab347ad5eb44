"""Tests for amortprox."""
