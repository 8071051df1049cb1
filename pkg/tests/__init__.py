"""Tests for LeakFilter."""
