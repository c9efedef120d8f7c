"""Group-sequential design engine with optimal interim timing."""

__version__ = "0.1.0"
