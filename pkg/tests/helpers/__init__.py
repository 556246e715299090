"""Test helpers: brute-force oracles for the vectorised code paths."""
