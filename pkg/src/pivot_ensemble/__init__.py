"""Single-model ensemble translation through multiple pivot-language paths."""

__version__ = "0.1.0"
