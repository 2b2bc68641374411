"""Datasets, synthetic data, experiment workflows."""
