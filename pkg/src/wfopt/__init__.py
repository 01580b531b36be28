"""Compile-time accuracy/latency optimizer for structured multi-agent workflows."""

__version__ = "0.1.0"
