"""Framework-free character-to-word-to-sentence GRU trait regression."""

__version__ = "0.1.0"
