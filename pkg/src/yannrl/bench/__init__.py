"""Experiment harness: metrics, plots, studies, and the command line."""
