"""Block-level ranking of query suggestions with an iterative pointer decoder."""

__version__ = "0.1.0"
