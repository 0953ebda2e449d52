"""Demand models, delivery-chain simulation, profit planning, and a
rule-driven management console over tabular enterprise data."""

__version__ = "0.1.0"
