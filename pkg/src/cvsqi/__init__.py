"""Per-cardiac-cycle signal quality indexing for EIT-derived cardiac volume signals."""

__version__ = "0.1.0"
