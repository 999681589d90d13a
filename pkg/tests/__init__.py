"""Tests for friedrichs-wcl."""
