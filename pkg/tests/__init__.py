"""Tests for the nuclear feedback toolkit."""
