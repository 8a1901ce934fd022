"""Prompt-based machine reading comprehension for concept and relation extraction."""

__version__ = "0.1.0"
