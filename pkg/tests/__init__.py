"""Test suite for kdlab."""
