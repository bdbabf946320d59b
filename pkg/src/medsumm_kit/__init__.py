"""Evaluation, code-mixing and curation toolkit for multimodal code-mixed
medical question summarization."""

__version__ = "0.1.0"
