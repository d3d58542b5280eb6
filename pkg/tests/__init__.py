"""Tests for the scoredecomp package."""
