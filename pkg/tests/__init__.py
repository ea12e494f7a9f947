"""Tests for cognicore."""
