"""CLI and local HTTP facade over the analysis engines."""
