"""Multi-visit health-state inference for synthetic EHR generation."""

__version__ = "0.1.0"
