"""Explicit-MPC-initialized actor-critic control with chemical process benchmarks."""

__version__ = "0.1.0"
