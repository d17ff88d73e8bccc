"""Test suite for hsan-reviews."""
