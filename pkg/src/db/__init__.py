"""Persistence for experiment runs."""
